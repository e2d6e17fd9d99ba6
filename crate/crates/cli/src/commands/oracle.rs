use semreg::correspondence::CorrespondenceMap;
use semreg::mesh::normalize_mesh;
use semreg::render::CameraRig;
use semreg::semflow::{oracle_flows, write_flows};

use super::register::load_mesh;
use crate::args::OracleFlowArgs;
use crate::error::{io_error, CliError};

pub fn run(args: &OracleFlowArgs) -> Result<(), CliError> {
    let (source, _) = normalize_mesh(&load_mesh(&args.source)?)?;
    let (target, _) = normalize_mesh(&load_mesh(&args.target)?)?;
    let gt = CorrespondenceMap::load(&args.gt)?;
    let rig = CameraRig::build(&args.rig.spec())?;
    let mut maps = oracle_flows(&source, &target, &gt, &rig)?;
    if args.erode > 0 {
        maps = maps.iter().map(|m| m.eroded(args.erode)).collect();
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    write_flows(&args.out, &maps)?;
    Ok(())
}
