//! Loss terms with forward values and hand-derived gradients, and the
//! weighted objective that chains them back to the Jacobian field.

mod chamfer;
mod flow;
mod normal;
mod objective;
mod regularizers;

pub use chamfer::{chamfer_loss, chamfer_with_assignments, ChamferAssignments};
pub use flow::{flow_loss, flow_view_loss, ViewFlowLoss};
pub use normal::{normal_loss, normal_view_loss, NormalLossOutput, ViewNormalLoss};
pub use objective::{Evaluation, Frozen, Objective};
pub use regularizers::{identity_loss, polar_rotation, polar_rotations, shear_loss};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deform::FieldGradient;
use crate::mesh::MeshError;
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("map resolution mismatch: expected {expected:?}, got {actual:?}")]
    ResolutionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("view count mismatch: expected {expected}, got {actual}")]
    ViewCountMismatch { expected: usize, actual: usize },
    #[error("no pixel is valid in both rendered and semantic flow in any view")]
    NoSignal,
    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

impl Reduction {
    /// Multiplier applied to a sum over `n` items.
    pub fn scale<T: Real>(self, n: usize) -> T {
        match self {
            Self::Mean if n > 0 => T::one() / T::from_usize_lossy(n),
            _ => T::one(),
        }
    }
}

impl std::str::FromStr for Reduction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Self::Mean),
            "sum" => Ok(Self::Sum),
            other => Err(format!("unknown reduction `{other}`")),
        }
    }
}

impl std::fmt::Display for Reduction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Sum => "sum",
        })
    }
}

/// Value of a term and its gradient.
#[derive(Debug, Clone)]
pub struct TermOutput<G, T> {
    pub value: T,
    pub grad: G,
}

/// One value per loss term, in the fixed order flow, chamfer, normal,
/// identity, shear.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Terms<T> {
    pub flow: T,
    pub chamfer: T,
    pub normal: T,
    pub identity: T,
    pub shear: T,
}

impl<T: Copy> Terms<T> {
    pub fn as_array(&self) -> [T; 5] {
        [self.flow, self.chamfer, self.normal, self.identity, self.shear]
    }
}

pub const TERM_NAMES: [&str; 5] = ["flow", "chamfer", "normal", "identity", "shear"];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Reductions {
    pub flow: Reduction,
    pub chamfer: Reduction,
    pub normal: Reduction,
    pub identity: Reduction,
    pub shear: Reduction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub flow: f64,
    pub chamfer: f64,
    pub normal: f64,
    pub shear: f64,
    /// Identity weight at the first iteration, decaying linearly to `identity_end`.
    pub identity_start: f64,
    pub identity_end: f64,
    pub reductions: Reductions,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            flow: 10.0,
            chamfer: 1.0,
            normal: 0.1,
            shear: 0.1,
            identity_start: 0.01,
            identity_end: 0.0001,
            reductions: Reductions::default(),
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        Self {
            flow: 0.0,
            chamfer: 0.0,
            normal: 0.0,
            shear: 0.0,
            identity_start: 0.0,
            identity_end: 0.0,
            reductions: Reductions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        let all = [
            ("flow", self.flow),
            ("chamfer", self.chamfer),
            ("normal", self.normal),
            ("shear", self.shear),
            ("identity_start", self.identity_start),
            ("identity_end", self.identity_end),
        ];
        if let Some((name, v)) = all.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(LossError::InvalidWeights(format!("{name} = {v} must be finite and nonnegative")));
        }
        if self.identity_start < self.identity_end {
            return Err(LossError::InvalidWeights(format!(
                "identity schedule must not increase ({} -> {})",
                self.identity_start, self.identity_end
            )));
        }
        Ok(())
    }

    /// Linear schedule, exact at both endpoints.
    pub fn identity_weight(&self, iteration: usize, total_iterations: usize) -> f64 {
        if total_iterations <= 1 {
            return self.identity_start;
        }
        let a = iteration.min(total_iterations - 1) as f64 / (total_iterations - 1) as f64;
        self.identity_start * (1.0 - a) + self.identity_end * a
    }

    /// Every weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            flow: self.flow * s,
            chamfer: self.chamfer * s,
            normal: self.normal * s,
            shear: self.shear * s,
            identity_start: self.identity_start * s,
            identity_end: self.identity_end * s,
            reductions: self.reductions,
        }
    }
}

/// Per-term values, weighted total, and gradient with respect to the field.
#[derive(Debug, Clone)]
pub struct LossReport<T: Real> {
    pub terms: Terms<T>,
    pub weights: Terms<f64>,
    pub total: T,
    pub grad: FieldGradient<T>,
    pub flow_valid: Vec<usize>,
    pub normal_overlap: Vec<usize>,
    /// Deformed vertices behind a camera, summed over views.
    pub behind_camera: usize,
}

impl<T: Real> LossReport<T> {
    pub fn grad_norm(&self) -> T {
        self.grad.norm()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.grad.is_finite()
    }
}
