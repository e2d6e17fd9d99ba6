//! Adam optimization of a Jacobian field against the weighted objective,
//! with loss history, checkpoints, and gradient verification.

mod checkpoint;
mod gradcheck;

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{gradcheck, perturbed_field, relative_error, GradcheckOptions, GradcheckReport, ProbeResult};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deform::{Deformer, FieldGradient, JacobianField};
use crate::loss::{LossError, LossReport, LossWeights, Objective, Terms, TERM_NAMES};
use crate::mesh::{MeshError, TriMesh};
use crate::render::{CameraRig, FlowMap, RenderError, RigSpec};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum RegistrationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weights: LossWeights,
    pub rig: RigSpec,
    pub seed: u64,
    /// Iterations between progress records; 0 disables logging.
    pub log_interval: usize,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_interval: usize,
    /// Source vertex held fixed by the Poisson solve.
    pub pinned_vertex: usize,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weights: LossWeights::default(),
            rig: RigSpec::default(),
            seed: 0,
            log_interval: 100,
            checkpoint_interval: 0,
            pinned_vertex: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: String| Err(RegistrationError::InvalidConfig(m));
        if self.iterations < 1 {
            return bad("iterations must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} = {b} must lie in [0, 1)"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad(format!("epsilon {} must be positive", self.epsilon));
        }
        self.weights.validate()?;
        Ok(())
    }

    /// Settings that determine the optimization trajectory.
    fn trajectory_key(&self) -> String {
        let mut c = self.clone();
        c.log_interval = 0;
        c.checkpoint_interval = 0;
        serde_json::to_string(&c).expect("config serializes")
    }
}

/// Adam step sizes and decay rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn from_config(c: &RegistrationConfig) -> Self {
        Self { lr: c.learning_rate, beta1: c.beta1, beta2: c.beta2, eps: c.epsilon }
    }

    /// One bias-corrected update; advances the iteration counter.
    pub fn step<T: Real>(&self, state: &mut RegistrationState<T>, grad: &FieldGradient<T>) {
        let t = (state.iteration + 1) as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - T::lit(self.beta1.powi(t));
        let c2 = T::one() - T::lit(self.beta2.powi(t));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for k in 0..state.field.parameter_count() {
            let g = grad.get(k);
            let m = state.m.get_mut(k);
            *m = b1 * *m + (T::one() - b1) * g;
            let m_hat = *m / c1;
            let v = state.v.get_mut(k);
            *v = b2 * *v + (T::one() - b2) * g * g;
            let v_hat = *v / c2;
            *state.field.get_mut(k) -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        state.iteration += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationState<T: Real> {
    pub field: JacobianField<T>,
    pub m: JacobianField<T>,
    pub v: JacobianField<T>,
    /// Completed optimizer steps.
    pub iteration: usize,
    pub best_total: f64,
    pub best_iteration: usize,
    pub best_field: JacobianField<T>,
}

impl<T: Real> RegistrationState<T> {
    pub fn new(face_count: usize) -> Self {
        let field = JacobianField::identity(face_count);
        Self {
            m: FieldGradient::zeros(face_count),
            v: FieldGradient::zeros(face_count),
            iteration: 0,
            best_total: f64::INFINITY,
            best_iteration: 0,
            best_field: field.clone(),
            field,
        }
    }
}

/// One row of the loss history, evaluated before the step at `iteration`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub terms: Terms<f64>,
    pub total: f64,
    pub grad_norm: f64,
}

impl LossRecord {
    pub fn from_report<T: Real>(iteration: usize, r: &LossReport<T>) -> Self {
        Self {
            iteration,
            terms: Terms {
                flow: r.terms.flow.as_f64(),
                chamfer: r.terms.chamfer.as_f64(),
                normal: r.terms.normal.as_f64(),
                identity: r.terms.identity.as_f64(),
                shear: r.terms.shear.as_f64(),
            },
            total: r.total.as_f64(),
            grad_norm: r.grad_norm().as_f64(),
        }
    }

    pub fn csv_header() -> String {
        format!("iteration,{},total,grad_norm", TERM_NAMES.join(","))
    }

    /// Shortest round-trip formatting, so equal values give equal text.
    pub fn csv_row(&self) -> String {
        let t = self.terms.as_array();
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.iteration, t[0], t[1], t[2], t[3], t[4], self.total, self.grad_norm
        )
    }
}

pub fn history_csv(history: &[LossRecord]) -> String {
    let mut s = LossRecord::csv_header();
    s.push('\n');
    for r in history {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

/// Mean loss over consecutive windows of `window` records.
pub fn windowed_means(history: &[LossRecord], window: usize) -> Vec<f64> {
    history
        .chunks_exact(window)
        .map(|w| w.iter().map(|r| r.total).sum::<f64>() / window as f64)
        .collect()
}

#[derive(Debug, Clone)]
pub struct RegistrationOutcome<T: Real> {
    pub deformed: Vec<Vector3<T>>,
    pub history: Vec<LossRecord>,
    pub state: RegistrationState<T>,
    /// Iteration whose loss was non-finite; the state is the last finite one.
    pub diverged_at: Option<usize>,
}

pub enum Step {
    Advanced(LossRecord),
    Diverged(usize),
    Finished,
}

/// Optimization loop over a prepared objective.
#[derive(Debug, Clone)]
pub struct Registration<T: Real> {
    objective: Objective<T>,
    config: RegistrationConfig,
    adam: Adam,
    state: RegistrationState<T>,
    history: Vec<LossRecord>,
}

impl<T: Real> Registration<T> {
    pub fn new(objective: Objective<T>, config: RegistrationConfig) -> Result<Self, RegistrationError> {
        config.validate()?;
        if objective.total_iterations() != config.iterations {
            return Err(RegistrationError::InvalidConfig(format!(
                "objective schedule spans {} iterations, config {}",
                objective.total_iterations(),
                config.iterations
            )));
        }
        let state = RegistrationState::new(objective.deformer().source().face_count());
        Ok(Self { adam: Adam::from_config(&config), objective, config, state, history: Vec::new() })
    }

    pub fn resume(
        objective: Objective<T>,
        config: RegistrationConfig,
        checkpoint: Checkpoint<T>,
    ) -> Result<Self, RegistrationError> {
        let mut r = Self::new(objective, config)?;
        if checkpoint.config_key != r.config.trajectory_key() {
            return Err(CheckpointError::ConfigMismatch.into());
        }
        if checkpoint.state.field.len() != r.state.field.len() {
            return Err(CheckpointError::ShapeMismatch {
                expected: r.state.field.len(),
                found: checkpoint.state.field.len(),
            }
            .into());
        }
        r.state = checkpoint.state;
        r.history = checkpoint.history;
        Ok(r)
    }

    pub fn objective(&self) -> &Objective<T> {
        &self.objective
    }

    pub fn config(&self) -> &RegistrationConfig {
        &self.config
    }

    pub fn state(&self) -> &RegistrationState<T> {
        &self.state
    }

    pub fn history(&self) -> &[LossRecord] {
        &self.history
    }

    pub fn checkpoint(&self) -> Checkpoint<T> {
        Checkpoint {
            config_key: self.config.trajectory_key(),
            state: self.state.clone(),
            history: self.history.clone(),
        }
    }

    /// Evaluates the loss at the current state and takes one Adam step.
    pub fn step(&mut self) -> Result<Step, RegistrationError> {
        let k = self.state.iteration;
        if k >= self.config.iterations {
            return Ok(Step::Finished);
        }
        let eval = self.objective.evaluate(&self.state.field, k, None)?;
        if !eval.report.is_finite() {
            return Ok(Step::Diverged(k));
        }
        let record = LossRecord::from_report(k, &eval.report);
        let before = self.state.clone();
        if record.total < self.state.best_total {
            self.state.best_total = record.total;
            self.state.best_iteration = k;
            self.state.best_field = self.state.field.clone();
        }
        self.adam.step(&mut self.state, &eval.report.grad);
        if !(self.state.field.is_finite() && self.state.v.is_finite()) {
            self.state = before;
            return Ok(Step::Diverged(k));
        }
        self.history.push(record);
        Ok(Step::Advanced(record))
    }

    /// Runs to the iteration budget; `on_step` sees every completed step.
    pub fn run(
        mut self,
        mut on_step: impl FnMut(&Self, &LossRecord) -> Result<(), RegistrationError>,
    ) -> Result<RegistrationOutcome<T>, RegistrationError> {
        let mut diverged_at = None;
        loop {
            match self.step()? {
                Step::Advanced(rec) => on_step(&self, &rec)?,
                Step::Diverged(k) => {
                    diverged_at = Some(k);
                    break;
                }
                Step::Finished => break,
            }
        }
        let deformed = self.objective.deformer().deform(&self.state.field)?.0;
        Ok(RegistrationOutcome { deformed, history: self.history, state: self.state, diverged_at })
    }
}

/// Builds the objective for normalized meshes and flows matching the rig.
pub fn build_objective<T: Real>(
    source: &TriMesh<T>,
    target: &TriMesh<T>,
    semantic_flows: Vec<FlowMap<T>>,
    config: &RegistrationConfig,
) -> Result<Objective<T>, RegistrationError> {
    config.validate()?;
    source.check_connected()?;
    let rig = CameraRig::build(&config.rig)?;
    let deformer = Deformer::new(source, config.pinned_vertex)?;
    Ok(Objective::new(deformer, target.clone(), rig, semantic_flows, config.weights, config.iterations)?)
}

pub fn run_registration<T: Real>(
    source: &TriMesh<T>,
    target: &TriMesh<T>,
    semantic_flows: Vec<FlowMap<T>>,
    config: &RegistrationConfig,
) -> Result<RegistrationOutcome<T>, RegistrationError> {
    let objective = build_objective(source, target, semantic_flows, config)?;
    Registration::new(objective, config.clone())?.run(|_, _| Ok(()))
}

/// Runs `f` on a dedicated pool of `threads` workers (0 means one per core).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool")
        .install(f)
}
