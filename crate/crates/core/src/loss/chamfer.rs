use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Reduction, TermOutput};
use crate::scalar::Real;
use crate::spatial::PointIndex;

/// Nearest-neighbour assignments for both chamfer directions, frozen for
/// one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferAssignments {
    /// For each deformed vertex, its nearest target vertex.
    pub forward: Vec<usize>,
    /// For each target vertex, its nearest deformed vertex.
    pub backward: Vec<usize>,
}

impl ChamferAssignments {
    pub fn compute<T: Real>(deformed: &[Vector3<T>], target: &PointIndex<T>) -> Self {
        let forward = deformed
            .par_iter()
            .map(|p| target.nearest(p).expect("nonempty target").0)
            .collect();
        let own = PointIndex::new(deformed);
        let backward = target
            .points()
            .par_iter()
            .map(|q| own.nearest(q).expect("nonempty deformed set").0)
            .collect();
        Self { forward, backward }
    }

    /// O(N·M) reference search.
    pub fn brute_force<T: Real>(deformed: &[Vector3<T>], target: &[Vector3<T>]) -> Self {
        let nearest = |q: &Vector3<T>, set: &[Vector3<T>]| {
            let mut best = (0, (set[0] - q).norm_squared());
            for (i, p) in set.iter().enumerate().skip(1) {
                let d = (p - q).norm_squared();
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        };
        Self {
            forward: deformed.iter().map(|p| nearest(p, target)).collect(),
            backward: target.iter().map(|q| nearest(q, deformed)).collect(),
        }
    }
}

/// Symmetric chamfer distance `½(mean‖x − nn(x)‖² + mean‖y − nn(y)‖²)`
/// with assignments held fixed; gradient with respect to the deformed set.
pub fn chamfer_with_assignments<T: Real>(
    deformed: &[Vector3<T>],
    target: &[Vector3<T>],
    assign: &ChamferAssignments,
    reduction: Reduction,
) -> TermOutput<Vec<Vector3<T>>, T> {
    let half = T::lit(0.5);
    let sx = reduction.scale::<T>(deformed.len());
    let sy = reduction.scale::<T>(target.len());
    let mut grad = vec![Vector3::zeros(); deformed.len()];
    let mut fwd = T::zero();
    for (i, x) in deformed.iter().enumerate() {
        let d = x - target[assign.forward[i]];
        fwd += d.norm_squared();
        grad[i] += d * sx;
    }
    let mut bwd = T::zero();
    for (j, y) in target.iter().enumerate() {
        let i = assign.backward[j];
        let d = deformed[i] - y;
        bwd += d.norm_squared();
        grad[i] += d * sy;
    }
    TermOutput { value: half * (fwd * sx + bwd * sy), grad }
}

pub fn chamfer_loss<T: Real>(
    deformed: &[Vector3<T>],
    target: &PointIndex<T>,
    reduction: Reduction,
) -> (TermOutput<Vec<Vector3<T>>, T>, ChamferAssignments) {
    let assign = ChamferAssignments::compute(deformed, target);
    (chamfer_with_assignments(deformed, target.points(), &assign, reduction), assign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_sets_give_zero() {
        let pts: Vec<_> = crate::mesh::shapes::icosphere::<f64>(1).vertices().to_vec();
        let (out, _) = chamfer_loss(&pts, &PointIndex::new(&pts), Reduction::Mean);
        assert_eq!(out.value, 0.0);
        assert!(out.grad.iter().all(|g| *g == Vector3::zeros()));
    }

    #[test]
    fn two_points() {
        let d: f64 = 0.75;
        let a = vec![Vector3::new(0.0, 0.0, 0.0)];
        let b = vec![Vector3::new(0.0, d, 0.0)];
        let (out, _) = chamfer_loss(&a, &PointIndex::new(&b), Reduction::Mean);
        assert!((out.value - d * d).abs() < 1e-15);
        assert!((out.grad[0] - Vector3::new(0.0, -2.0 * d, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn gradient_with_frozen_assignments() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Vector3<f64>> = (0..20).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let b: Vec<Vector3<f64>> = (0..25).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let (out, assign) = chamfer_loss(&a, &PointIndex::new(&b), Reduction::Mean);
        let h = 1e-6;
        for i in 0..20 {
            for k in 0..3 {
                let mut p = a.clone();
                p[i][k] += h;
                let mut m = a.clone();
                m[i][k] -= h;
                let fd = (chamfer_with_assignments(&p, &b, &assign, Reduction::Mean).value
                    - chamfer_with_assignments(&m, &b, &assign, Reduction::Mean).value)
                    / (2.0 * h);
                assert!((out.grad[i][k] - fd).abs() < 1e-8);
            }
        }
    }
}
