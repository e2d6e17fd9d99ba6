use nalgebra::{Matrix3, SVD};
use rayon::prelude::*;

use super::{Reduction, TermOutput};
use crate::deform::JacobianField;
use crate::scalar::Real;

/// Closest rotation to `j` in Frobenius norm, `U·diag(1, 1, det(UVᵀ))·Vᵀ`,
/// with the sign flip applied along the smallest singular value.
pub fn polar_rotation<T: Real>(j: &Matrix3<T>) -> Matrix3<T> {
    let svd = SVD::new(*j, true, true);
    let mut u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    if (u * v_t).determinant() < T::zero() {
        let s = &svd.singular_values;
        let mut k = 0;
        for i in 1..3 {
            if s[i] < s[k] {
                k = i;
            }
        }
        let mut col = u.column_mut(k);
        col.neg_mut();
    }
    u * v_t
}

pub fn polar_rotations<T: Real>(field: &JacobianField<T>) -> Vec<Matrix3<T>> {
    field.matrices.par_iter().map(polar_rotation).collect()
}

/// `Σ‖J̃ᵢ − Tᵢ‖_F` reduced over faces, with gradient `(J̃ᵢ − Tᵢ)/‖·‖` and zero
/// gradient where the residual vanishes. Targets are held constant.
fn frobenius_distance<T: Real>(
    field: &JacobianField<T>,
    target: impl Fn(usize) -> Matrix3<T>,
    reduction: Reduction,
) -> TermOutput<Vec<Matrix3<T>>, T> {
    let scale = reduction.scale::<T>(field.len());
    let mut value = T::zero();
    let grad = field
        .matrices
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let r = m - target(i);
            let n = r.norm();
            value += n;
            if n > T::zero() {
                r * (scale / n)
            } else {
                Matrix3::zeros()
            }
        })
        .collect();
    TermOutput { value: value * scale, grad }
}

/// Distance of every face matrix from the identity.
pub fn identity_loss<T: Real>(field: &JacobianField<T>, reduction: Reduction) -> TermOutput<Vec<Matrix3<T>>, T> {
    frobenius_distance(field, |_| Matrix3::identity(), reduction)
}

/// Distance of every face matrix from its rotational part. Rotations are
/// treated as constants for the gradient.
pub fn shear_loss<T: Real>(
    field: &JacobianField<T>,
    rotations: &[Matrix3<T>],
    reduction: Reduction,
) -> TermOutput<Vec<Matrix3<T>>, T> {
    frobenius_distance(field, |i| rotations[i], reduction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rotation_is_fixed_point() {
        let r = *Rotation3::from_euler_angles(0.3, 1.2, -0.4).matrix();
        assert!((polar_rotation(&r) - r).norm() < 1e-10);
    }

    #[test]
    fn spd_maps_to_identity() {
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(2.0, 3.0, 4.0));
        assert!((polar_rotation(&d) - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn reflection_gets_proper_rotation() {
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::<f64>::new(2.0, 3.0, -0.5));
        let r = polar_rotation(&d);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn identity_examples() {
        let mut f = JacobianField::<f64>::identity(4);
        assert_eq!(identity_loss(&f, Reduction::Mean).value, 0.0);
        f.matrices[2] = Matrix3::identity() * 2.0;
        let out = identity_loss(&f, Reduction::Mean);
        assert!((out.value - 3f64.sqrt() / 4.0).abs() < 1e-15);
        assert_eq!(out.grad[0], Matrix3::zeros());
    }

    #[test]
    fn identity_matches_entrywise_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = JacobianField {
            matrices: (0..30).map(|_| Matrix3::from_fn(|_, _| rng.random_range(-2.0..2.0))).collect(),
            translation: nalgebra::Vector3::zeros(),
        };
        let mut brute: f64 = 0.0;
        for m in &f.matrices {
            let mut s: f64 = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    let d = m[(r, c)] - if r == c { 1.0 } else { 0.0 };
                    s += d * d;
                }
            }
            brute += s.sqrt();
        }
        assert!((identity_loss(&f, Reduction::Sum).value - brute).abs() < 1e-9);
        assert!((identity_loss(&f, Reduction::Mean).value - brute / 30.0).abs() < 1e-9);
    }

    #[test]
    fn shear_examples() {
        let r = *Rotation3::from_euler_angles(0.1, 0.2, 0.3).matrix();
        let f = JacobianField::<f64>::uniform(3, r);
        assert!(shear_loss(&f, &polar_rotations(&f), Reduction::Mean).value < 1e-12);
        let s = 0.25;
        let f = JacobianField::<f64>::uniform(2, Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0 + s, 1.0, 1.0)));
        let out = shear_loss(&f, &polar_rotations(&f), Reduction::Mean);
        assert!((out.value - s).abs() < 1e-12);
    }

    #[test]
    fn shear_gradient_with_frozen_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f: JacobianField<f64> = JacobianField {
            matrices: (0..5).map(|_| Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect(),
            translation: nalgebra::Vector3::zeros(),
        };
        let rot = polar_rotations(&f);
        let out = shear_loss(&f, &rot, Reduction::Mean);
        let h = 1e-6;
        for i in 0..5 {
            for k in 0..9 {
                let mut p = f.clone();
                p.matrices[i][k] += h;
                let mut m = f.clone();
                m.matrices[i][k] -= h;
                let fd = (shear_loss(&p, &rot, Reduction::Mean).value - shear_loss(&m, &rot, Reduction::Mean).value) / (2.0 * h);
                let a = out.grad[i][k];
                assert!((a - fd).abs() / a.abs().max(fd.abs()).max(1e-8) < 1e-6);
            }
        }
    }
}
