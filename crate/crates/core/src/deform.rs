//! Per-face Jacobian deformation model.
//!
//! The optimization state is a 3×3 matrix per source face plus a global
//! translation. Matrices are restricted to each face's tangent plane
//! (`Jᵢ = J̃ᵢ Bᵢ`) and integrated into vertex positions by the Poisson
//! solve. The solve pins one vertex at the origin; positions are returned
//! as `Φ* + anchor + t` where `anchor` is the pinned source vertex, so the
//! identity field with `t = 0` reproduces the source mesh.

use nalgebra::{Matrix3, Matrix3x2, Vector3};

use crate::mesh::{MeshError, PoissonSystem, TangentFrames, TriMesh};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct JacobianField<T: Real> {
    pub matrices: Vec<Matrix3<T>>,
    pub translation: Vector3<T>,
}

impl<T: Real> JacobianField<T> {
    /// Identity matrix on every face, zero translation.
    pub fn identity(face_count: usize) -> Self {
        Self {
            matrices: vec![Matrix3::identity(); face_count],
            translation: Vector3::zeros(),
        }
    }

    pub fn init_identity(mesh: &TriMesh<T>) -> Self {
        Self::identity(mesh.face_count())
    }

    pub fn uniform(face_count: usize, m: Matrix3<T>) -> Self {
        Self {
            matrices: vec![m; face_count],
            translation: Vector3::zeros(),
        }
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.matrices.iter().all(|m| m.iter().all(|x| x.is_finite()))
            && self.translation.iter().all(|x| x.is_finite())
    }

    /// Number of scalar parameters (9 per face plus 3).
    pub fn parameter_count(&self) -> usize {
        9 * self.matrices.len() + 3
    }

    /// Flat parameter view: column-major matrix entries, then translation.
    pub fn get(&self, k: usize) -> T {
        match k / 9 {
            f if f < self.matrices.len() => self.matrices[f][k % 9],
            _ => self.translation[k - 9 * self.matrices.len()],
        }
    }

    pub fn get_mut(&mut self, k: usize) -> &mut T {
        let nf = self.matrices.len();
        match k / 9 {
            f if f < nf => &mut self.matrices[f][k % 9],
            _ => &mut self.translation[k - 9 * nf],
        }
    }
}

/// Gradient with respect to a [`JacobianField`], same layout.
pub type FieldGradient<T> = JacobianField<T>;

impl<T: Real> FieldGradient<T> {
    pub fn zeros(face_count: usize) -> Self {
        Self {
            matrices: vec![Matrix3::zeros(); face_count],
            translation: Vector3::zeros(),
        }
    }

    pub fn norm(&self) -> T {
        let s = self
            .matrices
            .iter()
            .fold(T::zero(), |acc, m| acc + m.norm_squared())
            + self.translation.norm_squared();
        s.sqrt()
    }

    pub fn scale_add(&mut self, other: &Self, w: T) {
        for (a, b) in self.matrices.iter_mut().zip(&other.matrices) {
            *a += b * w;
        }
        self.translation += other.translation * w;
    }
}

/// Deformed vertex positions aligned with source indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedVertices<T: Real>(pub Vec<Vector3<T>>);

impl<T: Real> DeformedVertices<T> {
    pub fn positions(&self) -> &[Vector3<T>] {
        &self.0
    }
}

/// `Jᵢ = J̃ᵢ Bᵢ` for every face.
pub fn project_to_tangent<T: Real>(field: &JacobianField<T>, frames: &TangentFrames<T>) -> Vec<Matrix3x2<T>> {
    field.matrices.iter().zip(&frames.bases).map(|(m, b)| m * b).collect()
}

/// Adjoint of [`project_to_tangent`]: `∂/∂J̃ᵢ = (∂/∂Jᵢ) Bᵢᵀ`.
pub fn project_to_tangent_adjoint<T: Real>(
    grad_jacobians: &[Matrix3x2<T>],
    frames: &TangentFrames<T>,
) -> Vec<Matrix3<T>> {
    grad_jacobians
        .iter()
        .zip(&frames.bases)
        .map(|(g, b)| g * b.transpose())
        .collect()
}

/// Source geometry, frames, and a factored Poisson system, built once per
/// registration and reused for every forward and adjoint solve.
#[derive(Debug, Clone)]
pub struct Deformer<T: Real> {
    source: TriMesh<T>,
    frames: TangentFrames<T>,
    system: PoissonSystem<T>,
    anchor: Vector3<T>,
}

impl<T: Real> Deformer<T> {
    pub fn new(source: &TriMesh<T>, pinned: usize) -> Result<Self, MeshError> {
        let frames = TangentFrames::build(source)?;
        let system = PoissonSystem::build(source, &frames, pinned)?;
        Ok(Self {
            anchor: source.vertices()[pinned],
            source: source.clone(),
            frames,
            system,
        })
    }

    pub fn source(&self) -> &TriMesh<T> {
        &self.source
    }

    pub fn frames(&self) -> &TangentFrames<T> {
        &self.frames
    }

    pub fn system(&self) -> &PoissonSystem<T> {
        &self.system
    }

    /// Source position of the pinned vertex.
    pub fn anchor(&self) -> Vector3<T> {
        self.anchor
    }

    fn check_len(&self, field: &JacobianField<T>) -> Result<(), MeshError> {
        if field.len() != self.source.face_count() {
            return Err(MeshError::SizeMismatch {
                expected: self.source.face_count(),
                actual: field.len(),
            });
        }
        Ok(())
    }

    /// `Φ* + anchor + t`, evaluated as the source plus the solve of the
    /// difference to the source Jacobians `Bᵢ`, so the identity field
    /// reproduces the source exactly.
    pub fn deform(&self, field: &JacobianField<T>) -> Result<DeformedVertices<T>, MeshError> {
        self.check_len(field)?;
        let delta: Vec<Matrix3x2<T>> = project_to_tangent(field, &self.frames)
            .into_iter()
            .zip(&self.frames.bases)
            .map(|(j, b)| j - b)
            .collect();
        let phi = self.system.solve(&delta)?;
        Ok(DeformedVertices(
            phi.into_iter()
                .zip(self.source.vertices())
                .map(|(p, s)| s + p + field.translation)
                .collect(),
        ))
    }

    /// Pulls a gradient on deformed positions back to the field.
    pub fn backward(&self, grad_positions: &[Vector3<T>]) -> Result<FieldGradient<T>, MeshError> {
        let grad_j = self.system.solve_adjoint(grad_positions)?;
        let translation = grad_positions.iter().fold(Vector3::zeros(), |acc, g| acc + g);
        Ok(FieldGradient {
            matrices: project_to_tangent_adjoint(&grad_j, &self.frames),
            translation,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_round_trip() {
        for mesh in [shapes::equilateral_triangle::<f64>(), shapes::icosphere(2)] {
            let d = Deformer::new(&mesh, 0).unwrap();
            let phi = d.deform(&JacobianField::init_identity(&mesh)).unwrap();
            for (p, v) in phi.positions().iter().zip(mesh.vertices()) {
                assert!((p - v).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn identity_field_sizes() {
        let f = JacobianField::<f64>::init_identity(&shapes::equilateral_triangle());
        assert_eq!(f.len(), 1);
        assert_eq!(f.translation, Vector3::zeros());
        assert_eq!(f.parameter_count(), 12);
    }

    #[test]
    fn projection_examples() {
        let mesh = shapes::icosphere::<f64>(1);
        let frames = TangentFrames::build(&mesh).unwrap();
        let j = project_to_tangent(&JacobianField::uniform(mesh.face_count(), Matrix3::identity() * 2.0), &frames);
        for (a, b) in j.iter().zip(&frames.bases) {
            assert_eq!(*a, b * 2.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_matrix(&mut rng);
        let j = project_to_tangent(&JacobianField::uniform(mesh.face_count(), m), &frames);
        let b = frames.bases[5];
        for r in 0..3 {
            for c in 0..2 {
                let dot: f64 = (0..3).map(|k| m[(r, k)] * b[(k, c)]).sum();
                assert!((j[5][(r, c)] - dot).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn global_rotation_and_scale_are_exact() {
        let mesh = shapes::icosphere::<f64>(2);
        let d = Deformer::new(&mesh, 3).unwrap();
        let p = mesh.vertices()[3];
        let r = *Rotation3::from_euler_angles(0.4, 0.2, -0.7).matrix();
        for m in [r, Matrix3::identity() * 2.0] {
            let phi = d.system().solve(&project_to_tangent(&JacobianField::uniform(mesh.face_count(), m), d.frames())).unwrap();
            for (got, v) in phi.iter().zip(mesh.vertices()) {
                assert!((got - m * (v - p)).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_gradient_in_zero_out() {
        let mesh = shapes::icosphere::<f64>(1);
        let d = Deformer::new(&mesh, 0).unwrap();
        let g = d.backward(&vec![Vector3::zeros(); mesh.vertex_count()]).unwrap();
        assert_eq!(g.norm(), 0.0);
    }

    #[test]
    fn adjoint_matches_central_differences_on_a_triangle() {
        // loss = Σ_v w_v · Φ_v² (quadratic), h = 1e-6
        let mesh = shapes::equilateral_triangle::<f64>();
        let d = Deformer::new(&mesh, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let weights: Vec<Vector3<f64>> = (0..3).map(|_| Vector3::from_fn(|_, _| rng.random_range(0.5..2.0))).collect();
        let loss = |f: &JacobianField<f64>| -> f64 {
            d.deform(f).unwrap().0.iter().zip(&weights).map(|(p, w)| p.component_mul(&p.component_mul(w)).sum()).sum()
        };
        let mut field = JacobianField::uniform(1, random_matrix(&mut rng));
        field.translation = Vector3::new(0.1, -0.2, 0.3);
        let phi = d.deform(&field).unwrap();
        let grad_phi: Vec<Vector3<f64>> = phi.0.iter().zip(&weights).map(|(p, w)| p.component_mul(w) * 2.0).collect();
        let g = d.backward(&grad_phi).unwrap();
        let h = 1e-6;
        for k in 0..field.parameter_count() {
            let mut plus = field.clone();
            *plus.get_mut(k) += h;
            let mut minus = field.clone();
            *minus.get_mut(k) -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = g.get(k);
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(rel < 1e-6 || (a - fd).abs() < 1e-9, "param {k}: {a} vs {fd}");
        }
    }

    #[test]
    fn linear_loss_adjoint_is_constant_and_exact() {
        let mesh = shapes::icosphere::<f64>(1);
        let d = Deformer::new(&mesh, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c: Vec<Vector3<f64>> = (0..mesh.vertex_count()).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let loss = |f: &JacobianField<f64>| -> f64 { d.deform(f).unwrap().0.iter().zip(&c).map(|(p, ci)| p.dot(ci)).sum() };
        let g = d.backward(&c).unwrap();
        let field = JacobianField::uniform(mesh.face_count(), random_matrix(&mut rng));
        let h = 1e-3;
        for _ in 0..20 {
            let k = rng.random_range(0..field.parameter_count());
            let mut plus = field.clone();
            *plus.get_mut(k) += h;
            let mut minus = field.clone();
            *minus.get_mut(k) -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((g.get(k) - fd).abs() < 1e-8, "param {k}");
        }
    }
}
