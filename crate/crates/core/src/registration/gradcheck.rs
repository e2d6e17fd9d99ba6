use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::RegistrationError;
use crate::deform::JacobianField;
use crate::loss::{LossWeights, Objective, Terms};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    /// Random matrix entries probed; the three translation components are
    /// always probed in addition.
    pub probes: usize,
    pub step: f64,
    pub seed: u64,
    /// Iteration at which the identity weight is read from its schedule.
    pub iteration: usize,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { probes: 50, step: 1e-5, seed: 0, iteration: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeResult {
    pub parameter: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub probes: Vec<ProbeResult>,
    pub max_rel_error: f64,
    /// Largest error per loss term, each checked with only that term weighted.
    pub per_term: Terms<f64>,
}

/// Identity field plus uniform noise in `[-amplitude, amplitude)` on every
/// matrix entry and a fixed small translation.
pub fn perturbed_field(face_count: usize, amplitude: f64, seed: u64) -> JacobianField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise = || if amplitude > 0.0 { rng.random_range(-amplitude..amplitude) } else { 0.0 };
    let matrices = (0..face_count)
        .map(|_| Matrix3::identity() + Matrix3::from_fn(|_, _| noise()))
        .collect();
    JacobianField { matrices, translation: Vector3::new(0.02, -0.01, 0.03) }
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / a.abs().max(b.abs()).max(1e-8)
}

fn only(w: &LossWeights, term: usize) -> LossWeights {
    let mut o = LossWeights { reductions: w.reductions, ..LossWeights::zero() };
    match term {
        0 => o.flow = w.flow,
        1 => o.chamfer = w.chamfer,
        2 => o.normal = w.normal,
        3 => {
            o.identity_start = w.identity_start;
            o.identity_end = w.identity_end;
        }
        _ => o.shear = w.shear,
    }
    o
}

fn probe(
    objective: &Objective<f64>,
    field: &JacobianField<f64>,
    params: &[usize],
    opts: &GradcheckOptions,
) -> Result<Vec<ProbeResult>, RegistrationError> {
    let base = objective.evaluate(field, opts.iteration, None)?;
    let frozen = &base.frozen;
    params
        .iter()
        .map(|&k| {
            let mut plus = field.clone();
            *plus.get_mut(k) += opts.step;
            let mut minus = field.clone();
            *minus.get_mut(k) -= opts.step;
            let fp = objective.evaluate(&plus, opts.iteration, Some(frozen))?.report.total;
            let fm = objective.evaluate(&minus, opts.iteration, Some(frozen))?.report.total;
            let numeric = (fp - fm) / (2.0 * opts.step);
            let analytic = base.report.grad.get(k);
            Ok(ProbeResult { parameter: k, analytic, numeric, rel_error: relative_error(analytic, numeric) })
        })
        .collect()
}

fn max_error(p: &[ProbeResult]) -> f64 {
    p.iter().map(|r| r.rel_error).fold(0.0, f64::max)
}

/// Compares the analytic gradient with central differences at `field`.
/// Nearest-neighbour assignments, polar rotations and normal-map
/// rasterizations are frozen at `field` for every probe.
pub fn gradcheck(
    objective: &Objective<f64>,
    field: &JacobianField<f64>,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport, RegistrationError> {
    let matrix_params = 9 * field.len();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = rand::seq::index::sample(&mut rng, matrix_params, opts.probes.min(matrix_params)).into_vec();
    params.sort_unstable();
    params.extend(matrix_params..matrix_params + 3);

    let probes = probe(objective, field, &params, opts)?;
    let weights = *objective.weights();
    let mut per = [0.0; 5];
    for (term, slot) in per.iter_mut().enumerate() {
        let single = objective.with_weights(only(&weights, term))?;
        *slot = max_error(&probe(&single, field, &params, opts)?);
    }
    Ok(GradcheckReport {
        max_rel_error: max_error(&probes),
        probes,
        per_term: Terms { flow: per[0], chamfer: per[1], normal: per[2], identity: per[3], shear: per[4] },
    })
}
