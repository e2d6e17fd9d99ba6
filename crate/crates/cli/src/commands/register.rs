use std::path::Path;

use semreg::correspondence::{extract_correspondence, CorrespondenceMap};
use semreg::mesh::{load_obj, normalize_mesh, write_obj, TriMesh};
use semreg::registration::{build_objective, history_csv, Checkpoint, Registration};
use semreg::render::CameraRig;
use semreg::semflow::{oracle_flows, read_flows};
use serde_json::json;

use crate::args::{to_config_file, RegisterArgs};
use crate::error::{io_error, CliError};
use crate::manifest::{Normalization, PhaseTimer, RunManifest};

pub const REGISTERED_OBJ: &str = "registered.obj";
pub const CORRESPONDENCE_JSON: &str = "correspondence.json";
pub const LOSS_CSV: &str = "loss.csv";
pub const MANIFEST_JSON: &str = "manifest.json";
pub const CONFIG_INI: &str = "config.ini";
pub const CHECKPOINT_FILE: &str = "checkpoint.sreg";

pub fn load_mesh(path: &Path) -> Result<TriMesh<f64>, CliError> {
    if !path.is_file() {
        return Err(CliError::input(format!("{}: no such file", path.display())));
    }
    Ok(load_obj(path)?)
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn run(args: &RegisterArgs, threads: usize) -> Result<(), CliError> {
    let config = args.registration_config();
    let resolved = args.resolved();
    let mut manifest = RunManifest::new("register", args.seed, threads, &resolved);

    // every input is read and validated before anything is written
    let t = PhaseTimer::start();
    manifest.add_input("source", &args.source)?;
    let target_hash = manifest.add_input("target", &args.target)?;
    let (source, source_tf) = normalize_mesh(&load_mesh(&args.source)?)?;
    let (target, target_tf) = normalize_mesh(&load_mesh(&args.target)?)?;
    manifest.normalization = Some(Normalization { source: source_tf, target: target_tf });
    let rig = CameraRig::build(&config.rig)?;
    let flows = match (&args.flows, &args.gt_oracle) {
        (Some(path), _) => {
            manifest.add_input("flows", path)?;
            read_flows(path, &rig)?
        }
        (None, Some(path)) => {
            manifest.add_input("gt-oracle", path)?;
            let gt = CorrespondenceMap::load(path)?;
            oracle_flows(&source, &target, &gt, &rig)?
        }
        (None, None) => return Err(CliError::input("one of --flows or --gt-oracle is required")),
    };
    let checkpoint = match &args.resume {
        Some(path) => {
            manifest.add_input("resume", path)?;
            Some(Checkpoint::<f64>::load(path)?)
        }
        None => None,
    };
    t.finish("load", &mut manifest.phases);

    let t = PhaseTimer::start();
    let objective = build_objective(&source, &target, flows, &config)?;
    let registration = match checkpoint {
        Some(ck) => Registration::resume(objective, config.clone(), ck)?,
        None => Registration::new(objective, config.clone())?,
    };
    t.finish("setup", &mut manifest.phases);

    let out = &args.out_dir;
    std::fs::create_dir_all(out).map_err(|e| io_error(out, e))?;
    let manifest_path = out.join(MANIFEST_JSON);
    manifest.write(&manifest_path)?;
    write_text(&out.join(CONFIG_INI), &to_config_file(&resolved))?;

    let t = PhaseTimer::start();
    let checkpoint_path = out.join(CHECKPOINT_FILE);
    let outcome = registration.run(|r, rec| {
        let done = rec.iteration + 1;
        if config.log_interval > 0 && (rec.iteration % config.log_interval == 0 || done == config.iterations) {
            eprintln!(
                "iter {:>6}  total {:.6e}  flow {:.4e}  chamfer {:.4e}  normal {:.4e}  grad {:.3e}",
                rec.iteration, rec.total, rec.terms.flow, rec.terms.chamfer, rec.terms.normal, rec.grad_norm
            );
        }
        if config.checkpoint_interval > 0 && done % config.checkpoint_interval == 0 {
            r.checkpoint().save(&checkpoint_path)?;
        }
        Ok(())
    })?;
    t.finish("optimize", &mut manifest.phases);

    let t = PhaseTimer::start();
    let model_units: Vec<_> = outcome.deformed.iter().map(|p| target_tf.invert(p)).collect();
    let obj_path = out.join(REGISTERED_OBJ);
    write_obj(&obj_path, &model_units, source.faces()).map_err(|e| io_error(&obj_path, e))?;
    let mut corr = extract_correspondence(&outcome.deformed, &target, args.target.display().to_string());
    corr.target_hash = Some(target_hash);
    corr.save(out.join(CORRESPONDENCE_JSON))?;
    write_text(&out.join(LOSS_CSV), &history_csv(&outcome.history))?;
    t.finish("export", &mut manifest.phases);

    if let Some(last) = outcome.history.last() {
        manifest.results.insert("final_total".into(), json!(last.total));
        manifest.results.insert("iterations_run".into(), json!(outcome.history.len()));
    }
    manifest.results.insert("best_total".into(), json!(outcome.state.best_total));
    manifest.results.insert("best_iteration".into(), json!(outcome.state.best_iteration));
    manifest.status = match outcome.diverged_at {
        Some(k) => format!("diverged at iteration {k}"),
        None => "complete".into(),
    };
    manifest.write(&manifest_path)?;
    if let Some(k) = outcome.diverged_at {
        return Err(CliError::Numerical(format!(
            "loss became non-finite at iteration {k}; outputs hold the last finite state"
        )));
    }
    Ok(())
}
