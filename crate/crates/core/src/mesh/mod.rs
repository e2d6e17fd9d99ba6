//! Indexed triangle meshes and the discrete operators built on them.

mod frames;
mod normalize;
mod obj;
mod poisson;
pub mod shapes;
pub mod sparse;

pub use frames::TangentFrames;
pub use normalize::{normalize_mesh, SimilarityTransform};
pub use obj::{load_obj, parse_obj, write_obj, write_obj_string};
pub use poisson::{cotangent_laplacian, FactorizationDiagnostics, PoissonSystem};

use nalgebra::Vector3;
use thiserror::Error;

use crate::scalar::Real;

/// Minimum face area, measured in normalized coordinates.
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read mesh file: {0}")]
    Io(#[from] std::io::Error),
    #[error("OBJ parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        vertex_count: usize,
    },
    #[error("face {face} is degenerate: {reason}")]
    DegenerateFace { face: usize, reason: String },
    #[error("mesh has no vertices or no faces")]
    Empty,
    #[error("mesh has {components} connected components, expected one")]
    Disconnected { components: usize },
    #[error("mesh has zero spatial extent")]
    ZeroExtent,
    #[error("non-finite vertex coordinate at vertex {0}")]
    NonFinite(usize),
    #[error("Poisson factorization failed: {0}")]
    Factorization(FactorizationDiagnostics),
    #[error("pinned vertex {pinned} out of range for {vertex_count} vertices")]
    InvalidPin { pinned: usize, vertex_count: usize },
    #[error("right-hand side has non-finite entries")]
    NonFiniteRhs,
    #[error("size mismatch: expected {expected}, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
}

/// Indexed triangle mesh with counter-clockwise faces.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh<T: Real> {
    vertices: Vec<Vector3<T>>,
    faces: Vec<[usize; 3]>,
    normals: Option<Vec<Vector3<T>>>,
}

impl<T: Real> TriMesh<T> {
    /// Builds a mesh and checks indices, repeated corners, and face areas.
    ///
    /// Connectivity is not checked here; see [`TriMesh::check_connected`].
    pub fn new(vertices: Vec<Vector3<T>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || faces.is_empty() {
            return Err(MeshError::Empty);
        }
        if let Some(i) = vertices
            .iter()
            .position(|v| !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()))
        {
            return Err(MeshError::NonFinite(i));
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= n) {
                return Err(MeshError::IndexOutOfRange {
                    face: fi,
                    index: bad,
                    vertex_count: n,
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: format!("repeated vertex index in {f:?}"),
                });
            }
        }
        let mesh = Self {
            vertices,
            faces,
            normals: None,
        };
        mesh.check_face_areas()?;
        Ok(mesh)
    }

    /// Face areas are compared against [`MIN_FACE_AREA`] after rescaling the
    /// mesh so its longest bounding-box side is 2.
    fn check_face_areas(&self) -> Result<(), MeshError> {
        let (lo, hi) = self.bounding_box();
        let extent = (hi - lo).max();
        if extent <= T::zero() {
            return Err(MeshError::ZeroExtent);
        }
        let s = T::lit(2.0) / extent;
        let min_area = T::lit(MIN_FACE_AREA);
        for fi in 0..self.faces.len() {
            let a = self.face_area(fi) * s * s;
            if !(a > min_area) {
                return Err(MeshError::DegenerateFace {
                    face: fi,
                    reason: format!("normalized area {} below {MIN_FACE_AREA:e}", a.as_f64()),
                });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vector3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Stored per-vertex normals, if they were computed.
    pub fn normals(&self) -> Option<&[Vector3<T>]> {
        self.normals.as_deref()
    }

    pub fn with_recomputed_normals(mut self) -> Self {
        self.normals = Some(vertex_normals_of(&self.vertices, &self.faces));
        self
    }

    /// Same connectivity, new positions. Positions must keep every face non-degenerate.
    pub fn with_vertices(&self, vertices: Vec<Vector3<T>>) -> Result<Self, MeshError> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::SizeMismatch {
                expected: self.vertices.len(),
                actual: vertices.len(),
            });
        }
        let mut m = Self::new(vertices, self.faces.clone())?;
        if self.normals.is_some() {
            m = m.with_recomputed_normals();
        }
        Ok(m)
    }

    pub fn face_vertices(&self, fi: usize) -> [Vector3<T>; 3] {
        let [a, b, c] = self.faces[fi];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, fi: usize) -> T {
        let [a, b, c] = self.face_vertices(fi);
        (b - a).cross(&(c - a)).norm() * T::lit(0.5)
    }

    pub fn bounding_box(&self) -> (Vector3<T>, Vector3<T>) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices[1..] {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    /// Sum of face areas.
    pub fn total_surface_area(&self) -> T {
        (0..self.faces.len()).fold(T::zero(), |acc, fi| acc + self.face_area(fi))
    }

    /// Area-weighted vertex normals.
    pub fn vertex_normals(&self) -> Vec<Vector3<T>> {
        vertex_normals_of(&self.vertices, &self.faces)
    }

    /// Number of connected components of the vertex-edge graph.
    pub fn connected_components(&self) -> usize {
        let mut parent: Vec<usize> = (0..self.vertices.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for f in &self.faces {
            for k in 0..3 {
                let (a, b) = (find(&mut parent, f[k]), find(&mut parent, f[(k + 1) % 3]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        (0..parent.len())
            .filter(|&i| find(&mut parent, i) == i)
            .count()
    }

    pub fn check_connected(&self) -> Result<(), MeshError> {
        match self.connected_components() {
            1 => Ok(()),
            components => Err(MeshError::Disconnected { components }),
        }
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| (0..3).map(move |k| (f[k].min(f[(k + 1) % 3]), f[k].max(f[(k + 1) % 3]))))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Concatenates two meshes without checking connectivity.
    pub fn concat(&self, other: &Self) -> Result<Self, MeshError> {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces = self.faces.clone();
        faces.extend(other.faces.iter().map(|f| f.map(|i| i + offset)));
        Self::new(vertices, faces)
    }

    pub fn cast<U: Real>(&self) -> TriMesh<U> {
        let conv = |v: &Vector3<T>| v.map(|x| U::lit(x.as_f64()));
        TriMesh {
            vertices: self.vertices.iter().map(conv).collect(),
            faces: self.faces.clone(),
            normals: self.normals.as_ref().map(|n| n.iter().map(conv).collect()),
        }
    }
}

/// Area-weighted average of incident face normals. Vertices whose weighted
/// sum vanishes fall back to the normal of their first incident face.
pub fn vertex_normals_of<T: Real>(vertices: &[Vector3<T>], faces: &[[usize; 3]]) -> Vec<Vector3<T>> {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    let mut first_face: Vec<Option<Vector3<T>>> = vec![None; vertices.len()];
    for f in faces {
        let c = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
        for &v in f {
            acc[v] += c;
            if first_face[v].is_none() {
                first_face[v] = Some(c);
            }
        }
    }
    acc.into_iter()
        .zip(first_face)
        .map(|(a, ff)| {
            let n = a.norm();
            if n > T::zero() {
                a / n
            } else {
                ff.map(|c| c.normalize()).unwrap_or_else(Vector3::zeros)
            }
        })
        .collect()
}
