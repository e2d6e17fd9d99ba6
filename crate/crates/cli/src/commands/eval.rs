use semreg::correspondence::{geodesic_error, CorrespondenceMap, GeodesicIndex};
use serde_json::json;

use super::register::load_mesh;
use crate::args::EvalArgs;
use crate::error::CliError;
use crate::manifest::hash_file;

pub fn run(args: &EvalArgs) -> Result<String, CliError> {
    let pred = CorrespondenceMap::load(&args.pred)?;
    let gt = CorrespondenceMap::load(&args.gt)?;
    let target = load_mesh(&args.target)?;
    let target_hash = hash_file(&args.target)?;
    for (name, map) in [("prediction", &pred), ("ground truth", &gt)] {
        if let Some(h) = &map.target_hash {
            if *h != target_hash {
                return Err(CliError::input(format!(
                    "{name} was computed against a different target (hash {h}, {} has {target_hash})",
                    args.target.display()
                )));
            }
        }
    }
    let index = GeodesicIndex::new(&target)?;
    let report = geodesic_error(&pred, &gt, &target, &index)?;
    if args.json {
        return Ok(serde_json::to_string_pretty(&json!({
            "mean_x100": report.mean_x100,
            "deciles_x100": report.deciles_x100,
            "count": report.per_vertex.len(),
        }))
        .expect("report serializes"));
    }
    let mut s = format!("mean geodesic error x100: {:.2}\n", report.mean_x100);
    s.push_str("percentile  error x100\n");
    for (i, d) in report.deciles_x100.iter().enumerate() {
        s.push_str(&format!("{:>9}%  {:.2}\n", (i + 1) * 10, d));
    }
    Ok(s)
}
