use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{MeshError, TriMesh};
use crate::scalar::Real;

/// Uniform similarity `x ↦ (x + translation) · scale` mapping model units
/// into the normalized frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub translation: [f64; 3],
    pub scale: f64,
}

impl SimilarityTransform {
    pub const IDENTITY: Self = Self {
        translation: [0.0; 3],
        scale: 1.0,
    };

    pub fn apply<T: Real>(&self, p: &Vector3<T>) -> Vector3<T> {
        let t = Vector3::new(
            T::lit(self.translation[0]),
            T::lit(self.translation[1]),
            T::lit(self.translation[2]),
        );
        (p + t) * T::lit(self.scale)
    }

    /// Maps a normalized-frame point back to model units.
    pub fn invert<T: Real>(&self, p: &Vector3<T>) -> Vector3<T> {
        let t = Vector3::new(
            T::lit(self.translation[0]),
            T::lit(self.translation[1]),
            T::lit(self.translation[2]),
        );
        p / T::lit(self.scale) - t
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transform serializes")
    }
}

/// Centers the bounding box at the origin and scales the longest
/// axis-aligned extent to 2, so the mesh fits in `[-1, 1]³`.
pub fn normalize_mesh<T: Real>(mesh: &TriMesh<T>) -> Result<(TriMesh<T>, SimilarityTransform), MeshError> {
    let (lo, hi) = mesh.bounding_box();
    let extent = (hi - lo).max().as_f64();
    if !(extent > 0.0) {
        return Err(MeshError::ZeroExtent);
    }
    let center = (lo + hi).map(|x| x.as_f64()) / 2.0;
    let transform = SimilarityTransform {
        translation: [-center.x, -center.y, -center.z],
        scale: 2.0 / extent,
    };
    let vertices = mesh.vertices().iter().map(|p| transform.apply(p)).collect();
    Ok((mesh.with_vertices(vertices)?, transform))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(lo: [f64; 3], hi: [f64; 3]) -> TriMesh<f64> {
        let mut v = Vec::new();
        for k in 0..8 {
            v.push(Vector3::new(
                if k & 1 == 0 { lo[0] } else { hi[0] },
                if k & 2 == 0 { lo[1] } else { hi[1] },
                if k & 4 == 0 { lo[2] } else { hi[2] },
            ));
        }
        let faces = vec![
            [0, 2, 1], [1, 2, 3], [4, 5, 6], [5, 7, 6],
            [0, 1, 4], [1, 5, 4], [2, 6, 3], [3, 6, 7],
            [0, 4, 2], [2, 4, 6], [1, 3, 5], [3, 7, 5],
        ];
        TriMesh::new(v, faces).unwrap()
    }

    #[test]
    fn unit_cube_becomes_centered() {
        let (m, t) = normalize_mesh(&cube([0.0; 3], [1.0; 3])).unwrap();
        assert_eq!(t.scale, 2.0);
        let (lo, hi) = m.bounding_box();
        assert_eq!(lo, Vector3::repeat(-1.0));
        assert_eq!(hi, Vector3::repeat(1.0));
    }

    #[test]
    fn normalized_mesh_gets_identity() {
        let (_, t) = normalize_mesh(&cube([-1.0; 3], [1.0; 3])).unwrap();
        assert!(t.is_identity());
    }

    #[test]
    fn longest_extent_drives_scale() {
        let (m, t) = normalize_mesh(&cube([0.0; 3], [4.0, 2.0, 2.0])).unwrap();
        assert_eq!(t.scale, 0.5);
        let (lo, hi) = m.bounding_box();
        assert_eq!(hi - lo, Vector3::new(2.0, 1.0, 1.0));
        let p = Vector3::new(1.0, 2.0, 0.5);
        assert!((t.invert(&t.apply(&p)) - p).norm() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let t = SimilarityTransform { translation: [1.0, 2.0, 3.0], scale: 0.5 };
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["scale"], 0.5);
        assert_eq!(v["translation"].as_array().unwrap().len(), 3);
    }
}
