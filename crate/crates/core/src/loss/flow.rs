use nalgebra::Vector2;

use super::{LossError, Reduction};
use crate::render::FlowMap;
use crate::scalar::Real;

/// One view's L1 flow discrepancy over pixels valid in both maps.
#[derive(Debug, Clone)]
pub struct ViewFlowLoss<T: Real> {
    pub value: T,
    pub valid: usize,
    /// Per-pixel `∂value/∂rendered`.
    pub grad: Vec<Vector2<T>>,
}

pub fn flow_view_loss<T: Real>(
    rendered: &FlowMap<T>,
    semantic: &FlowMap<T>,
    reduction: Reduction,
) -> Result<ViewFlowLoss<T>, LossError> {
    if rendered.width != semantic.width || rendered.height != semantic.height {
        return Err(LossError::ResolutionMismatch {
            expected: (rendered.width, rendered.height),
            actual: (semantic.width, semantic.height),
        });
    }
    let both: Vec<usize> = (0..rendered.flow.len())
        .filter(|&i| rendered.valid[i] && semantic.valid[i])
        .collect();
    let mut grad = vec![Vector2::zeros(); rendered.flow.len()];
    if both.is_empty() {
        return Ok(ViewFlowLoss { value: T::zero(), valid: 0, grad });
    }
    let scale = reduction.scale::<T>(both.len());
    let mut value = T::zero();
    for &i in &both {
        let d = rendered.flow[i] - semantic.flow[i];
        value += d.x.abs() + d.y.abs();
        grad[i] = Vector2::new(d.x.sign0(), d.y.sign0()) * scale;
    }
    Ok(ViewFlowLoss { value: value * scale, valid: both.len(), grad })
}

/// Sum over views of the per-view L1 loss. Errors when no view has a pixel
/// valid in both maps.
pub fn flow_loss<T: Real>(
    rendered: &[FlowMap<T>],
    semantic: &[FlowMap<T>],
    reduction: Reduction,
) -> Result<(T, Vec<ViewFlowLoss<T>>), LossError> {
    if rendered.len() != semantic.len() {
        return Err(LossError::ViewCountMismatch {
            expected: rendered.len(),
            actual: semantic.len(),
        });
    }
    let views = rendered
        .iter()
        .zip(semantic)
        .map(|(r, s)| flow_view_loss(r, s, reduction))
        .collect::<Result<Vec<_>, _>>()?;
    if views.iter().all(|v| v.valid == 0) {
        return Err(LossError::NoSignal);
    }
    let total = views.iter().fold(T::zero(), |acc, v| acc + v.value);
    Ok((total, views))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FlowMap<f64> {
        let mut m = FlowMap::empty(w, h);
        for i in 0..w * h {
            if rng.random_bool(0.7) {
                m.valid[i] = true;
                m.flow[i] = Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            }
        }
        m
    }

    #[test]
    fn equal_maps_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_map(&mut rng, 16, 16);
        let (v, views) = flow_loss(std::slice::from_ref(&m), std::slice::from_ref(&m), Reduction::Mean).unwrap();
        assert_eq!(v, 0.0);
        assert!(views[0].grad.iter().all(|g| *g == Vector2::zeros()));
    }

    #[test]
    fn constant_offset() {
        let mut a = FlowMap::<f64>::empty(8, 8);
        a.valid.iter_mut().for_each(|v| *v = true);
        let mut b = a.clone();
        b.flow.iter_mut().for_each(|f| *f = Vector2::new(0.125, -0.125));
        let (v, _) = flow_loss(std::slice::from_ref(&a), &[b.clone()], Reduction::Mean).unwrap();
        assert_eq!(v, 0.25);
        let (v, _) = flow_loss(&[a], &[b], Reduction::Sum).unwrap();
        assert_eq!(v, 0.25 * 64.0);
    }

    #[test]
    fn matches_brute_force_pixel_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r: Vec<_> = (0..3).map(|_| random_map(&mut rng, 12, 12)).collect();
        let s: Vec<_> = (0..3).map(|_| random_map(&mut rng, 12, 12)).collect();
        let mut brute = 0.0;
        for (a, b) in r.iter().zip(&s) {
            let (mut sum, mut n) = (0.0, 0usize);
            for i in 0..144 {
                if a.valid[i] && b.valid[i] {
                    sum += (a.flow[i].x - b.flow[i].x).abs() + (a.flow[i].y - b.flow[i].y).abs();
                    n += 1;
                }
            }
            brute += sum / n as f64;
        }
        let (v, _) = flow_loss(&r, &s, Reduction::Mean).unwrap();
        assert!((v - brute).abs() < 1e-7);
    }

    #[test]
    fn errors() {
        let a = FlowMap::<f64>::empty(8, 8);
        let b = FlowMap::<f64>::empty(4, 4);
        assert!(matches!(flow_loss(std::slice::from_ref(&a), &[b], Reduction::Mean), Err(LossError::ResolutionMismatch { .. })));
        assert!(matches!(flow_loss(std::slice::from_ref(&a), std::slice::from_ref(&a), Reduction::Mean), Err(LossError::NoSignal)));
        assert!(matches!(flow_loss(std::slice::from_ref(&a), &[], Reduction::Mean), Err(LossError::ViewCountMismatch { .. })));
    }
}
