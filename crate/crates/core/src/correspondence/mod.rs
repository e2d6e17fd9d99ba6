//! Dense correspondences from a registered mesh onto the target surface and
//! their geodesic evaluation.

mod geodesic;

pub use geodesic::{geodesic_error, GeodesicIndex, GeodesicReport};

use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::TriMesh;
use crate::scalar::Real;
use crate::spatial::{TriangleHit, TriangleIndex};

/// Barycentric tolerance for stored correspondences.
pub const BARY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed correspondence file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("target graph has {components} connected components")]
    Disconnected { components: usize },
    #[error("correspondence lengths differ: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("entry {entry}: face {face} out of range for {face_count} faces")]
    FaceOutOfRange { entry: usize, face: usize, face_count: usize },
    #[error("entry {entry}: barycentric {bary:?} is not a convex combination")]
    InvalidBarycentric { entry: usize, bary: [f64; 3] },
    #[error("prediction and ground truth refer to different targets ({pred} vs {gt})")]
    TargetMismatch { pred: String, gt: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceEntry {
    pub face: u32,
    pub bary: [f64; 3],
}

impl CorrespondenceEntry {
    /// Corner with the largest weight; ties go to the lower corner.
    pub fn dominant_corner(&self) -> usize {
        let mut best = 0;
        for k in 1..3 {
            if self.bary[k] > self.bary[best] {
                best = k;
            }
        }
        best
    }
}

/// Per source vertex, a point on the target given as face and barycentric
/// weights. Entries are ordered by source vertex id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMap {
    pub target_mesh: String,
    pub entries: Vec<CorrespondenceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_hash: Option<String>,
}

impl CorrespondenceMap {
    /// Each vertex of `mesh` mapped onto itself through its lowest incident face.
    pub fn identity<T: Real>(mesh: &TriMesh<T>, target_mesh: impl Into<String>) -> Self {
        let mut entries: Vec<Option<CorrespondenceEntry>> = vec![None; mesh.vertex_count()];
        for (fi, f) in mesh.faces().iter().enumerate() {
            for (k, &v) in f.iter().enumerate() {
                if entries[v].is_none() {
                    let mut bary = [0.0; 3];
                    bary[k] = 1.0;
                    entries[v] = Some(CorrespondenceEntry { face: fi as u32, bary });
                }
            }
        }
        Self {
            target_mesh: target_mesh.into(),
            entries: entries.into_iter().map(|e| e.expect("validated meshes have no isolated vertices")).collect(),
            target_hash: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn validate(&self, face_count: usize) -> Result<(), EvalError> {
        for (i, e) in self.entries.iter().enumerate() {
            if e.face as usize >= face_count {
                return Err(EvalError::FaceOutOfRange { entry: i, face: e.face as usize, face_count });
            }
            let sum: f64 = e.bary.iter().sum();
            let ok = e.bary.iter().all(|b| b.is_finite() && *b >= -BARY_TOLERANCE) && (sum - 1.0).abs() <= BARY_TOLERANCE;
            if !ok {
                return Err(EvalError::InvalidBarycentric { entry: i, bary: e.bary });
            }
        }
        Ok(())
    }

    /// Points on `target` named by each entry.
    pub fn reconstruct<T: Real>(&self, target: &TriMesh<T>) -> Result<Vec<Vector3<T>>, EvalError> {
        self.validate(target.face_count())?;
        Ok(self
            .entries
            .iter()
            .map(|e| {
                let [a, b, c] = target.face_vertices(e.face as usize);
                a * T::lit(e.bary[0]) + b * T::lit(e.bary[1]) + c * T::lit(e.bary[2])
            })
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("correspondence maps serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Closest target surface point for every query, via a bounding volume
/// hierarchy; ties go to the lower face id.
pub fn closest_hits<T: Real>(points: &[Vector3<T>], target: &TriMesh<T>) -> Vec<TriangleHit<T>> {
    let index = TriangleIndex::new(target.vertices(), target.faces());
    points
        .par_iter()
        .map(|p| index.closest(p).expect("target has faces"))
        .collect()
}

pub fn extract_correspondence<T: Real>(
    deformed: &[Vector3<T>],
    target: &TriMesh<T>,
    target_mesh: impl Into<String>,
) -> CorrespondenceMap {
    let entries = closest_hits(deformed, target)
        .into_iter()
        .map(|h| CorrespondenceEntry {
            face: h.face as u32,
            bary: h.bary.map(|b| b.as_f64()),
        })
        .collect();
    CorrespondenceMap { target_mesh: target_mesh.into(), entries, target_hash: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use rand::{Rng, SeedableRng};

    #[test]
    fn vertex_query_gives_corner_weight() {
        let m = shapes::icosphere::<f64>(1);
        let map = extract_correspondence(m.vertices(), &m, "t.obj");
        for (v, e) in map.entries.iter().enumerate() {
            let f = m.faces()[e.face as usize];
            let k = e.dominant_corner();
            assert_eq!(f[k], v);
            assert!((e.bary[k] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn point_above_centroid() {
        let m = shapes::equilateral_triangle::<f64>();
        let [a, b, c] = m.face_vertices(0);
        let n = (b - a).cross(&(c - a)).normalize();
        let q = (a + b + c) / 3.0 + n * 0.3;
        let map = extract_correspondence(&[q], &m, "");
        for b in map.entries[0].bary {
            assert!((b - 1.0 / 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn accelerated_matches_brute_force() {
        let m = shapes::icosphere::<f64>(2);
        let index = TriangleIndex::new(m.vertices(), m.faces());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5));
            let a = index.closest(&q).unwrap();
            let b = index.closest_brute_force(&q).unwrap();
            assert_eq!(a.face, b.face);
            assert!((a.dist2 - b.dist2).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_distance_matches_reported() {
        let m = shapes::icosphere::<f64>(2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let qs: Vec<_> = (0..100).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.5..1.5))).collect();
        let hits = closest_hits(&qs, &m);
        let map = extract_correspondence(&qs, &m, "");
        let pts = map.reconstruct(&m).unwrap();
        for ((q, h), p) in qs.iter().zip(&hits).zip(&pts) {
            assert!(((p - q).norm() - h.dist2.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_map_validates_and_reconstructs() {
        let m = shapes::octahedron::<f64>();
        let map = CorrespondenceMap::identity(&m, "oct.obj");
        assert_eq!(map.reconstruct(&m).unwrap(), m.vertices());
    }

    #[test]
    fn invalid_entries_rejected() {
        let m = shapes::octahedron::<f64>();
        let mut map = CorrespondenceMap::identity(&m, "");
        map.entries[0].bary = [0.5, 0.6, -0.1];
        assert!(matches!(map.validate(8), Err(EvalError::InvalidBarycentric { entry: 0, .. })));
        map.entries[0] = CorrespondenceEntry { face: 8, bary: [1.0, 0.0, 0.0] };
        assert!(matches!(map.validate(8), Err(EvalError::FaceOutOfRange { .. })));
    }

    #[test]
    fn json_round_trip_and_optional_hash() {
        let m = shapes::octahedron::<f64>();
        let mut map = CorrespondenceMap::identity(&m, "oct.obj");
        let text = map.to_json();
        assert!(!text.contains("target_hash"));
        assert_eq!(CorrespondenceMap::from_json(&text).unwrap(), map);
        map.target_hash = Some("ab".into());
        assert_eq!(CorrespondenceMap::from_json(&map.to_json()).unwrap(), map);
    }
}
