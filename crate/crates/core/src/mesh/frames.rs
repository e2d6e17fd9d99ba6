use nalgebra::{Matrix3x2, Vector3};

use super::{MeshError, TriMesh};
use crate::scalar::Real;

/// Per-face orthonormal tangent bases, areas, and unit normals.
///
/// For face `[j, k, l]` the first basis column is the normalized edge
/// `v_k - v_j`; the second is the Gram-Schmidt completion with `v_l - v_j`.
#[derive(Debug, Clone)]
pub struct TangentFrames<T: Real> {
    pub bases: Vec<Matrix3x2<T>>,
    pub areas: Vec<T>,
    pub normals: Vec<Vector3<T>>,
}

impl<T: Real> TangentFrames<T> {
    pub fn build(mesh: &TriMesh<T>) -> Result<Self, MeshError> {
        let n = mesh.face_count();
        let mut bases = Vec::with_capacity(n);
        let mut areas = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        for fi in 0..n {
            let [a, b, c] = mesh.face_vertices(fi);
            let (e1, e2) = (b - a, c - a);
            let cross = e1.cross(&e2);
            let double_area = cross.norm();
            let l1 = e1.norm();
            if !(double_area > T::zero()) || !(l1 > T::zero()) {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: "collinear vertices".into(),
                });
            }
            let b1 = e1 / l1;
            let w = e2 - b1 * b1.dot(&e2);
            let b2 = w.normalize();
            bases.push(Matrix3x2::from_columns(&[b1, b2]));
            areas.push(double_area * T::lit(0.5));
            normals.push(cross / double_area);
        }
        Ok(Self { bases, areas, normals })
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::{Matrix2, Rotation3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flat_face_has_axis_basis() {
        let f = TangentFrames::build(&shapes::right_triangle::<f64>()).unwrap();
        assert_eq!(f.bases[0].column(0), Vector3::x());
        assert_eq!(f.bases[0].column(1), Vector3::y());
        assert_eq!(f.normals[0], Vector3::z());
        assert_eq!(f.areas[0], 0.5);
    }

    #[test]
    fn rotation_equivariance() {
        let m = shapes::right_triangle::<f64>();
        let r = Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rotated = m.with_vertices(m.vertices().iter().map(|p| r * p).collect()).unwrap();
        let (f0, f1) = (TangentFrames::build(&m).unwrap(), TangentFrames::build(&rotated).unwrap());
        assert!((r.matrix() * f0.bases[0] - f1.bases[0]).norm() < 1e-14);
        let g = f1.bases[0].transpose() * r.matrix().transpose() * r.matrix() * f1.bases[0];
        assert!((g - Matrix2::identity()).norm() < 1e-14);
    }

    #[test]
    fn random_triangles_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p: Vec<Vector3<f64>> = (0..3)
                .map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let Ok(m) = TriMesh::new(p, vec![[0, 1, 2]]) else { continue };
            let f = TangentFrames::build(&m).unwrap();
            let b = f.bases[0];
            assert!((b.transpose() * b - Matrix2::identity()).norm() < 1e-12);
            assert!((b.transpose() * f.normals[0]).norm() < 1e-12);
            assert!((f.areas[0] - m.face_area(0)).abs() < 1e-15);
        }
    }
}
