use nalgebra::{Matrix2, Matrix3x2, Vector3};

use super::sparse::{CsrMatrix, EnvelopeCholesky};
use super::{MeshError, TangentFrames, TriMesh};
use crate::scalar::Real;

pub use super::sparse::FactorizationDiagnostics;

/// Gradient operator, mass weights, cotangent Laplacian `L = ∇ᵀA∇`, and a
/// factorization of `L` with one vertex pinned to remove the constant
/// nullspace.
///
/// The per-face gradient block maps the three corner values of face
/// `[j, k, l]` to the in-plane gradient expressed in the face's tangent
/// basis. Stacked, `∇` is `2F × n` with rows `2i` and `2i + 1` for face `i`.
#[derive(Debug, Clone)]
pub struct PoissonSystem<T: Real> {
    faces: Vec<[usize; 3]>,
    gradients: Vec<[[T; 3]; 2]>,
    areas: Vec<T>,
    vertex_count: usize,
    laplacian: CsrMatrix<T>,
    pinned: usize,
    factor: Option<EnvelopeCholesky<T>>,
}

impl<T: Real> PoissonSystem<T> {
    pub fn build(mesh: &TriMesh<T>, frames: &TangentFrames<T>, pinned: usize) -> Result<Self, MeshError> {
        let n = mesh.vertex_count();
        if pinned >= n {
            return Err(MeshError::InvalidPin { pinned, vertex_count: n });
        }
        if frames.len() != mesh.face_count() {
            return Err(MeshError::SizeMismatch {
                expected: mesh.face_count(),
                actual: frames.len(),
            });
        }
        mesh.check_connected()?;

        let mut gradients = Vec::with_capacity(mesh.face_count());
        for fi in 0..mesh.face_count() {
            let [a, b, c] = mesh.face_vertices(fi);
            let bt = frames.bases[fi].transpose();
            let local = Matrix2::from_columns(&[bt * (b - a), bt * (c - a)]);
            let w = local.try_inverse().ok_or_else(|| MeshError::DegenerateFace {
                face: fi,
                reason: "singular local edge matrix".into(),
            })?;
            let row = |r: usize| [-(w[(0, r)] + w[(1, r)]), w[(0, r)], w[(1, r)]];
            gradients.push([row(0), row(1)]);
        }
        let areas = frames.areas.clone();

        let mut trip = Vec::with_capacity(mesh.face_count() * 9);
        for (fi, f) in mesh.faces().iter().enumerate() {
            let g = &gradients[fi];
            for p in 0..3 {
                for q in 0..3 {
                    let v = areas[fi] * (g[0][p] * g[0][q] + g[1][p] * g[1][q]);
                    trip.push((f[p], f[q], v));
                }
            }
        }
        let laplacian = CsrMatrix::from_triplets(n, n, &trip);

        let factor = if n > 1 {
            Some(EnvelopeCholesky::factor(&laplacian.without_row_col(pinned)).map_err(|mut d| {
                if d.failed_row >= pinned {
                    d.failed_row += 1;
                }
                MeshError::Factorization(d)
            })?)
        } else {
            None
        };

        Ok(Self {
            faces: mesh.faces().to_vec(),
            gradients,
            areas,
            vertex_count: n,
            laplacian,
            pinned,
            factor,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn pinned(&self) -> usize {
        self.pinned
    }

    pub fn laplacian(&self) -> &CsrMatrix<T> {
        &self.laplacian
    }

    /// Per-face gradient coefficients: `block[r][c]` is the weight of corner
    /// `c` in tangent component `r`.
    pub fn gradient_blocks(&self) -> &[[[T; 3]; 2]] {
        &self.gradients
    }

    /// Diagonal of the mass matrix `A` (face area repeated per tangent row).
    pub fn mass_diagonal(&self) -> Vec<T> {
        self.areas.iter().flat_map(|&a| [a, a]).collect()
    }

    /// `∇` as an explicit `2F × n` sparse matrix.
    pub fn gradient_matrix(&self) -> CsrMatrix<T> {
        let mut trip = Vec::with_capacity(self.faces.len() * 6);
        for (fi, f) in self.faces.iter().enumerate() {
            for r in 0..2 {
                for c in 0..3 {
                    trip.push((2 * fi + r, f[c], self.gradients[fi][r][c]));
                }
            }
        }
        CsrMatrix::from_triplets(2 * self.faces.len(), self.vertex_count, &trip)
    }

    /// Per-face Jacobians `Φ∇ᵢᵀ` (3×2) of a vertex embedding.
    pub fn face_jacobians(&self, positions: &[Vector3<T>]) -> Vec<Matrix3x2<T>> {
        self.faces
            .iter()
            .zip(&self.gradients)
            .map(|(f, g)| {
                let col = |r: usize| (0..3).fold(Vector3::zeros(), |acc, c| acc + positions[f[c]] * g[r][c]);
                Matrix3x2::from_columns(&[col(0), col(1)])
            })
            .collect()
    }

    /// `∇ᵀ A J` for stacked per-face Jacobians.
    pub fn rhs(&self, jacobians: &[Matrix3x2<T>]) -> Vec<Vector3<T>> {
        let mut b = vec![Vector3::zeros(); self.vertex_count];
        for ((f, g), (j, &area)) in self.faces.iter().zip(&self.gradients).zip(jacobians.iter().zip(&self.areas)) {
            for c in 0..3 {
                b[f[c]] += (j.column(0) * g[0][c] + j.column(1) * g[1][c]) * area;
            }
        }
        b
    }

    /// Solves `L x = b` per coordinate with the pinned vertex fixed at 0.
    pub fn solve_laplacian(&self, b: &[Vector3<T>]) -> Result<Vec<Vector3<T>>, MeshError> {
        if b.len() != self.vertex_count {
            return Err(MeshError::SizeMismatch {
                expected: self.vertex_count,
                actual: b.len(),
            });
        }
        if b.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(MeshError::NonFiniteRhs);
        }
        let mut out = vec![Vector3::zeros(); self.vertex_count];
        let Some(factor) = &self.factor else {
            return Ok(out);
        };
        let p = self.pinned;
        for axis in 0..3 {
            let reduced: Vec<T> = b
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != p)
                .map(|(_, v)| v[axis])
                .collect();
            let x = factor.solve(&reduced);
            for (k, xi) in x.into_iter().enumerate() {
                out[if k >= p { k + 1 } else { k }][axis] = xi;
            }
        }
        Ok(out)
    }

    /// Least-squares vertex positions `Φ* = L⁻¹∇ᵀAJ` minimizing
    /// `Σ |tᵢ| ‖Φ∇ᵢᵀ − Jᵢ‖²` with the pinned vertex at the origin.
    pub fn solve(&self, jacobians: &[Matrix3x2<T>]) -> Result<Vec<Vector3<T>>, MeshError> {
        if jacobians.len() != self.faces.len() {
            return Err(MeshError::SizeMismatch {
                expected: self.faces.len(),
                actual: jacobians.len(),
            });
        }
        self.solve_laplacian(&self.rhs(jacobians))
    }

    /// Reverse-mode pass through [`PoissonSystem::solve`]: maps `∂loss/∂Φ*`
    /// to `∂loss/∂Jᵢ` using the symmetry of `L`.
    pub fn solve_adjoint(&self, grad_positions: &[Vector3<T>]) -> Result<Vec<Matrix3x2<T>>, MeshError> {
        let mut g = grad_positions.to_vec();
        if g.len() != self.vertex_count {
            return Err(MeshError::SizeMismatch {
                expected: self.vertex_count,
                actual: g.len(),
            });
        }
        // the pinned coordinate is a constant of the solve
        g[self.pinned] = Vector3::zeros();
        let y = self.solve_laplacian(&g)?;
        Ok(self
            .faces
            .iter()
            .zip(&self.gradients)
            .zip(&self.areas)
            .map(|((f, gr), &area)| {
                let col = |r: usize| (0..3).fold(Vector3::zeros(), |acc, c| acc + y[f[c]] * gr[r][c]) * area;
                Matrix3x2::from_columns(&[col(0), col(1)])
            })
            .collect())
    }
}

/// Classical cotangent Laplacian, `L_ab = −½(cot α + cot β)` off the
/// diagonal with rows summing to zero.
pub fn cotangent_laplacian<T: Real>(mesh: &TriMesh<T>) -> CsrMatrix<T> {
    let n = mesh.vertex_count();
    let half = T::lit(0.5);
    let mut trip = Vec::with_capacity(mesh.face_count() * 12);
    for f in mesh.faces() {
        for c in 0..3 {
            let (a, b) = (f[(c + 1) % 3], f[(c + 2) % 3]);
            let pc = mesh.vertices()[f[c]];
            let (ea, eb) = (mesh.vertices()[a] - pc, mesh.vertices()[b] - pc);
            let w = half * ea.dot(&eb) / ea.cross(&eb).norm();
            trip.push((a, b, -w));
            trip.push((b, a, -w));
            trip.push((a, a, w));
            trip.push((b, b, w));
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;

    fn system(mesh: &TriMesh<f64>) -> PoissonSystem<f64> {
        PoissonSystem::build(mesh, &TangentFrames::build(mesh).unwrap(), 0).unwrap()
    }

    #[test]
    fn equilateral_entries() {
        let s = system(&shapes::equilateral_triangle());
        let l = s.laplacian();
        let cot60 = 1.0 / 3f64.sqrt();
        for i in 0..3 {
            for j in 0..3 {
                let expected = if i == j { cot60 } else { -0.5 * cot60 };
                assert!((l.get(i, j) - expected).abs() < 1e-12);
            }
        }
        assert!((l.get(0, 1) + 0.288675).abs() < 1e-6);
        assert!((l.get(0, 0) - 0.577350).abs() < 1e-6);
    }

    #[test]
    fn right_angle_decouples_hypotenuse() {
        let s = system(&shapes::right_triangle());
        assert!(s.laplacian().get(1, 2).abs() < 1e-12);
    }

    #[test]
    fn matches_classical_assembly_and_kills_constants() {
        for mesh in [shapes::icosphere::<f64>(2), shapes::grid(5), shapes::quad_fan()] {
            let s = system(&mesh);
            let classical = cotangent_laplacian(&mesh);
            let (a, b) = (s.laplacian().to_dense(), classical.to_dense());
            for i in 0..mesh.vertex_count() {
                for j in 0..mesh.vertex_count() {
                    assert!((a[i][j] - b[i][j]).abs() < 1e-9);
                    assert!((a[i][j] - a[j][i]).abs() < 1e-10);
                }
                assert!(a[i].iter().sum::<f64>().abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_jacobians_reproduce_geometry() {
        let mesh = shapes::icosphere::<f64>(2);
        let s = system(&mesh);
        let phi = s.solve(&TangentFrames::build(&mesh).unwrap().bases).unwrap();
        let p0 = mesh.vertices()[0];
        for (got, v) in phi.iter().zip(mesh.vertices()) {
            assert!((got - (v - p0)).norm() < 1e-10);
        }
    }

    #[test]
    fn gradient_of_embedding_is_tangent_basis() {
        let mesh = shapes::icosphere::<f64>(1);
        let frames = TangentFrames::build(&mesh).unwrap();
        let s = system(&mesh);
        for (j, b) in s.face_jacobians(mesh.vertices()).iter().zip(&frames.bases) {
            assert!((j - b).norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_matches_sparse_products() {
        let mesh = shapes::grid::<f64>(3);
        let s = system(&mesh);
        let grad = s.gradient_matrix();
        let mass = s.mass_diagonal();
        let js: Vec<Matrix3x2<f64>> = (0..mesh.face_count())
            .map(|i| Matrix3x2::from_fn(|r, c| ((i * 7 + r * 3 + c) % 5) as f64 - 2.0))
            .collect();
        let b = s.rhs(&js);
        let gt = grad.transpose();
        for axis in 0..3 {
            let stacked: Vec<f64> = (0..2 * mesh.face_count())
                .map(|row| js[row / 2][(axis, row % 2)] * mass[row])
                .collect();
            let expect = gt.mul_vec(&stacked);
            for (v, e) in b.iter().zip(expect) {
                assert!((v[axis] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bad_pin_rejected() {
        let mesh = shapes::equilateral_triangle::<f64>();
        let frames = TangentFrames::build(&mesh).unwrap();
        assert!(matches!(
            PoissonSystem::build(&mesh, &frames, 3),
            Err(MeshError::InvalidPin { pinned: 3, vertex_count: 3 })
        ));
    }

    #[test]
    fn non_finite_rhs_rejected() {
        let mesh = shapes::equilateral_triangle::<f64>();
        let s = system(&mesh);
        let mut b = vec![Vector3::zeros(); 3];
        b[1].x = f64::NAN;
        assert!(matches!(s.solve_laplacian(&b), Err(MeshError::NonFiniteRhs)));
    }
}
