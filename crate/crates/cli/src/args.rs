use std::path::PathBuf;
use std::str::FromStr;

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use ini::Ini;
use semreg::loss::{LossWeights, Reduction, Reductions};
use semreg::registration::RegistrationConfig;
use semreg::render::{ProjectionMode, RigSpec};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "semreg",
    version,
    about = "Register a source mesh to a target under multi-view flow supervision",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimize a Jacobian field so the source matches the target.
    Register(RegisterArgs),
    /// Score predicted correspondences against ground truth.
    Eval(EvalArgs),
    /// Write the flow files a perfect 2D model would produce.
    OracleFlow(OracleFlowArgs),
    /// Compare analytic gradients with central differences.
    Gradcheck(GradcheckArgs),
}

/// Comma-separated list of elevations in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct Elevations(pub Vec<f64>);

impl FromStr for Elevations {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad elevation {x:?}: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .map(Elevations)
    }
}

impl std::fmt::Display for Elevations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Args, Debug, Clone)]
pub struct ConfigFile {
    /// Flat key = value file; keys are long flag names without the leading
    /// dashes. Command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ThreadArgs {
    /// Worker threads; 0 uses one per core.
    #[arg(long, env = "SEMREG_THREADS", default_value_t = 0)]
    pub threads: usize,
}

#[derive(Args, Debug, Clone)]
pub struct WeightArgs {
    /// Weight of the rendered-flow L1 term.
    #[arg(long, default_value_t = 10.0)]
    pub lambda_flow: f64,
    /// Weight of the chamfer term.
    #[arg(long, default_value_t = 1.0)]
    pub lambda_chamfer: f64,
    /// Weight of the normal-map L1 term.
    #[arg(long, default_value_t = 0.1)]
    pub lambda_normal: f64,
    /// Weight of the distance of each matrix from its rotation.
    #[arg(long, default_value_t = 0.1)]
    pub lambda_shear: f64,
    /// Identity weight at the first iteration.
    #[arg(long, default_value_t = 0.01)]
    pub lambda_identity_start: f64,
    /// Identity weight at the last iteration (linear schedule).
    #[arg(long, default_value_t = 0.0001)]
    pub lambda_identity_end: f64,
    /// Reduction of every loss term over its items: mean or sum.
    #[arg(long, default_value_t = Reduction::Mean)]
    pub reduction: Reduction,
}

impl WeightArgs {
    pub fn weights(&self) -> LossWeights {
        let r = self.reduction;
        LossWeights {
            flow: self.lambda_flow,
            chamfer: self.lambda_chamfer,
            normal: self.lambda_normal,
            shear: self.lambda_shear,
            identity_start: self.lambda_identity_start,
            identity_end: self.lambda_identity_end,
            reductions: Reductions { flow: r, chamfer: r, normal: r, identity: r, shear: r },
        }
    }

    fn resolved(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lambda-flow", self.lambda_flow.to_string()),
            ("lambda-chamfer", self.lambda_chamfer.to_string()),
            ("lambda-normal", self.lambda_normal.to_string()),
            ("lambda-shear", self.lambda_shear.to_string()),
            ("lambda-identity-start", self.lambda_identity_start.to_string()),
            ("lambda-identity-end", self.lambda_identity_end.to_string()),
            ("reduction", self.reduction.to_string()),
        ]
    }
}

#[derive(Args, Debug, Clone)]
pub struct RigArgs {
    /// Square image resolution in pixels.
    #[arg(long, default_value_t = 512)]
    pub resolution: usize,
    /// Camera model: perspective or orthographic.
    #[arg(long, default_value_t = ProjectionMode::Perspective)]
    pub projection: ProjectionMode,
    /// Azimuth spacing in degrees; must divide 360.
    #[arg(long, default_value_t = 60.0)]
    pub azimuth_step: f64,
    /// Camera elevations in degrees.
    #[arg(long, default_value = "-30,-10,10,30,50", allow_hyphen_values = true)]
    pub elevations: Elevations,
}

impl RigArgs {
    pub fn spec(&self) -> RigSpec {
        RigSpec {
            azimuth_step_deg: self.azimuth_step,
            elevations_deg: self.elevations.0.clone(),
            resolution: self.resolution,
            mode: self.projection,
        }
    }

    fn resolved(&self) -> Vec<(&'static str, String)> {
        vec![
            ("resolution", self.resolution.to_string()),
            ("projection", self.projection.to_string()),
            ("azimuth-step", self.azimuth_step.to_string()),
            ("elevations", self.elevations.to_string()),
        ]
    }
}

#[derive(Args, Debug, Clone)]
#[command(group(clap::ArgGroup::new("supervision").required(true).args(["flows", "gt_oracle"])))]
pub struct RegisterArgs {
    /// Source mesh (OBJ) to deform.
    #[arg(long)]
    pub source: PathBuf,
    /// Target mesh (OBJ).
    #[arg(long)]
    pub target: PathBuf,
    /// Flow file with one view per rig camera.
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// Ground-truth correspondence file; flows are synthesized from it.
    #[arg(long)]
    pub gt_oracle: Option<PathBuf>,
    /// Directory for the registered mesh, correspondences, loss history and manifest.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Checkpoint to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Adam steps.
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    /// Adam learning rate for matrices and translation.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Adam first-moment decay.
    #[arg(long, default_value_t = 0.9)]
    pub beta1: f64,
    /// Adam second-moment decay.
    #[arg(long, default_value_t = 0.999)]
    pub beta2: f64,
    /// Adam denominator offset.
    #[arg(long, default_value_t = 1e-8)]
    pub eps: f64,
    /// Recorded in the manifest; the optimization itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iterations between progress lines; 0 is silent.
    #[arg(long, default_value_t = 100)]
    pub log_interval: usize,
    /// Iterations between checkpoints; 0 disables them.
    #[arg(long, default_value_t = 0)]
    pub checkpoint_interval: usize,
    /// Source vertex fixed by the Poisson solve.
    #[arg(long, default_value_t = 0)]
    pub pinned_vertex: usize,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub rig: RigArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    pub config: ConfigFile,
}

impl RegisterArgs {
    pub fn registration_config(&self) -> RegistrationConfig {
        RegistrationConfig {
            iterations: self.iterations,
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.eps,
            weights: self.weights.weights(),
            rig: self.rig.spec(),
            seed: self.seed,
            log_interval: self.log_interval,
            checkpoint_interval: self.checkpoint_interval,
            pinned_vertex: self.pinned_vertex,
        }
    }

    /// Every optimization setting as config-file key and value.
    pub fn resolved(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("iterations", self.iterations.to_string()),
            ("lr", self.lr.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("eps", self.eps.to_string()),
            ("seed", self.seed.to_string()),
            ("log-interval", self.log_interval.to_string()),
            ("checkpoint-interval", self.checkpoint_interval.to_string()),
            ("pinned-vertex", self.pinned_vertex.to_string()),
        ];
        v.extend(self.weights.resolved());
        v.extend(self.rig.resolved());
        v
    }
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Predicted correspondence file.
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth correspondence file.
    #[arg(long)]
    pub gt: PathBuf,
    /// Target mesh both files index.
    #[arg(long)]
    pub target: PathBuf,
    /// Print a JSON report instead of a table.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    pub config: ConfigFile,
}

#[derive(Args, Debug, Clone)]
pub struct OracleFlowArgs {
    /// Source mesh (OBJ).
    #[arg(long)]
    pub source: PathBuf,
    /// Target mesh (OBJ).
    #[arg(long)]
    pub target: PathBuf,
    /// Ground-truth correspondence file from source vertices onto the target.
    #[arg(long)]
    pub gt: PathBuf,
    /// Config file supplying the rig keys; an alias of --config.
    #[arg(long)]
    pub rig_config: Option<PathBuf>,
    /// Flow file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Rounds of validity-mask erosion.
    #[arg(long, default_value_t = 0)]
    pub erode: usize,
    #[command(flatten)]
    pub rig: RigArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    pub config: ConfigFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GradcheckFixture {
    /// Sheared octahedron.
    Toy,
    /// 642-vertex sphere and a rotated copy.
    Sphere,
}

#[derive(Args, Debug, Clone)]
pub struct GradcheckArgs {
    /// Scene to check.
    #[arg(long, value_enum, default_value_t = GradcheckFixture::Sphere)]
    pub fixture: GradcheckFixture,
    /// Random matrix entries probed, in addition to the translation.
    #[arg(long, default_value_t = 50)]
    pub probes: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    pub step: f64,
    /// Seed for probe selection and the perturbation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise amplitude added to the identity field before probing.
    #[arg(long, default_value_t = 0.05)]
    pub perturb: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    /// Resolution of the six orthographic views.
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Print a JSON report.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
    #[command(flatten)]
    pub config: ConfigFile,
}

/// Value following `flag` in raw arguments, in either `--flag v` or
/// `--flag=v` form; the last occurrence wins.
fn raw_flag(args: &[String], flag: &str) -> Option<String> {
    let mut found = None;
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == flag {
            found = it.next().cloned();
        } else if let Some(v) = a.strip_prefix(flag).and_then(|r| r.strip_prefix('=')) {
            found = Some(v.to_string());
        }
    }
    found
}

/// Key/value entries of a config file: a flat INI file, optionally with a
/// section per command, or a run manifest whose `config` object is used.
fn file_entries(path: &str, subcommand: &str) -> Result<Vec<(String, String)>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read config {path}: {e}")))?;
    if let Ok(serde_json::Value::Object(m)) = serde_json::from_str::<serde_json::Value>(&text) {
        let config = m
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::input(format!("config {path}: JSON file without a config object")))?;
        return config
            .iter()
            .map(|(k, v)| match v {
                serde_json::Value::String(s) => Ok((k.clone(), s.clone())),
                other => Ok((k.clone(), other.to_string())),
            })
            .collect();
    }
    let ini = Ini::load_from_str(&text).map_err(|e| CliError::input(format!("cannot parse config {path}: {e}")))?;
    let mut out = Vec::new();
    for (section, props) in ini.iter() {
        if section.is_some_and(|s| s != subcommand) {
            continue;
        }
        for (key, value) in props.iter() {
            out.push((key.to_string(), value.to_string()));
        }
    }
    Ok(out)
}

/// Turns config-file entries into `--key=value` flags for `subcommand`.
fn file_flags(path: &str, subcommand: &str) -> Result<Vec<String>, CliError> {
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(subcommand)
        .ok_or_else(|| CliError::input(format!("unknown command {subcommand}")))?;
    let mut out = Vec::new();
    for (key, value) in file_entries(path, subcommand)? {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()) && !matches!(key.as_str(), "config" | "rig-config"))
            .ok_or_else(|| CliError::input(format!("config {path}: unknown key {key:?} for {subcommand}")))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.trim() {
                "true" | "1" | "yes" => out.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                v => return Err(CliError::input(format!("config {path}: {key} expects true or false, got {v:?}"))),
            }
        } else {
            out.push(format!("--{key}={}", value.trim()));
        }
    }
    Ok(out)
}

/// Parses arguments with config-file values spliced in ahead of the
/// command-line flags, so flags override the file and the file overrides
/// built-in defaults.
pub fn parse(args: Vec<String>) -> Result<Cli, CliError> {
    let mut merged = args.clone();
    for flag in ["--rig-config", "--config"] {
        if let (Some(path), Some(sub)) = (raw_flag(&args, flag), args.get(1)) {
            if !sub.starts_with('-') {
                let mut m = vec![args[0].clone(), sub.clone()];
                m.extend(file_flags(&path, sub)?);
                m.extend(merged[2..].iter().cloned());
                merged = m;
            }
        }
    }
    Cli::try_parse_from(merged).map_err(CliError::Usage)
}

/// Config-file text reproducing `entries`.
pub fn to_config_file(entries: &[(&str, String)]) -> String {
    let mut s = String::new();
    for (k, v) in entries {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}
