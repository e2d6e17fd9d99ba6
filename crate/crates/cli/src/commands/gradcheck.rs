use semreg::fixtures::{self, Fixture};
use semreg::registration::{build_objective, gradcheck, perturbed_field, GradcheckOptions, RegistrationConfig};
use semreg::render::{CameraRig, ProjectionMode, RigSpec};
use semreg::semflow::oracle_flows;
use serde_json::json;

use crate::args::{GradcheckArgs, GradcheckFixture};
use crate::error::CliError;

pub fn run(args: &GradcheckArgs) -> Result<String, CliError> {
    let fixture: Fixture<f64> = match args.fixture {
        GradcheckFixture::Toy => fixtures::toy(),
        GradcheckFixture::Sphere => fixtures::rigid_rotation(10.0),
    };
    if !(args.step.is_finite() && args.step > 0.0) {
        return Err(CliError::input(format!("step {} must be positive", args.step)));
    }
    let config = RegistrationConfig {
        iterations: 1,
        weights: args.weights.weights(),
        rig: RigSpec {
            azimuth_step_deg: 120.0,
            elevations_deg: vec![-30.0, 30.0],
            resolution: args.resolution,
            mode: ProjectionMode::Orthographic,
        },
        seed: args.seed,
        ..Default::default()
    };
    let rig = CameraRig::build(&config.rig)?;
    let flows = oracle_flows(&fixture.source, &fixture.target, &fixture.ground_truth, &rig)?;
    let objective = build_objective(&fixture.source, &fixture.target, flows, &config)?;
    let field = perturbed_field(fixture.source.face_count(), args.perturb, args.seed);
    let opts = GradcheckOptions { probes: args.probes, step: args.step, seed: args.seed, iteration: 0 };
    let report = gradcheck(&objective, &field, &opts)?;

    let text = if args.json {
        serde_json::to_string_pretty(&json!({
            "max_rel_error": report.max_rel_error,
            "per_term": report.per_term,
            "probes": report.probes,
            "tolerance": args.tolerance,
        }))
        .expect("report serializes")
    } else {
        let t = report.per_term;
        format!(
            "probes {}  step {:e}\nflow      {:.3e}\nchamfer   {:.3e}\nnormal    {:.3e}\nidentity  {:.3e}\nshear     {:.3e}\ntotal     {:.3e}\n",
            report.probes.len(),
            args.step,
            t.flow,
            t.chamfer,
            t.normal,
            t.identity,
            t.shear,
            report.max_rel_error
        )
    };
    if report.max_rel_error.is_nan() || report.max_rel_error > args.tolerance {
        crate::emit(&text);
        return Err(CliError::Tolerance(format!(
            "max relative error {:e} exceeds tolerance {:e}",
            report.max_rel_error, args.tolerance
        )));
    }
    Ok(text)
}
