//! Synthetic source/target pairs with exact ground truth, used by the
//! oracle end-to-end runs and the gradient check.

use nalgebra::{Rotation3, Vector3};

use crate::correspondence::CorrespondenceMap;
use crate::mesh::{normalize_mesh, shapes, MeshError, TriMesh};
use crate::scalar::Real;

/// Subdivision level of the fixture sphere (642 vertices).
pub const FIXTURE_SUBDIVISIONS: usize = 3;

#[derive(Debug, Clone)]
pub struct Fixture<T: Real> {
    pub source: TriMesh<T>,
    pub target: TriMesh<T>,
    /// Source vertex `i` corresponds to target vertex `i`.
    pub ground_truth: CorrespondenceMap,
}

impl<T: Real> Fixture<T> {
    /// Normalizes the source, applies `map` per vertex, and normalizes the
    /// result. Both meshes share connectivity.
    pub fn from_map(source: &TriMesh<T>, map: impl Fn(&Vector3<T>) -> Vector3<T>) -> Result<Self, MeshError> {
        let (source, _) = normalize_mesh(source)?;
        let moved = source.with_vertices(source.vertices().iter().map(map).collect())?;
        let (target, _) = normalize_mesh(&moved)?;
        let ground_truth = CorrespondenceMap::identity(&target, "fixture");
        Ok(Self { source, target, ground_truth })
    }

    /// Ground-truth target position of every source vertex.
    pub fn true_positions(&self) -> &[Vector3<T>] {
        self.target.vertices()
    }

    /// Mean distance between `positions` and the ground truth.
    pub fn mean_vertex_error(&self, positions: &[Vector3<T>]) -> f64 {
        let sum: f64 = positions
            .iter()
            .zip(self.true_positions())
            .map(|(p, q)| (p - q).norm().as_f64())
            .sum();
        sum / positions.len() as f64
    }
}

pub fn sphere<T: Real>() -> TriMesh<T> {
    shapes::icosphere(FIXTURE_SUBDIVISIONS)
}

/// Sphere and a copy rotated by `degrees` about +y.
pub fn rigid_rotation<T: Real>(degrees: f64) -> Fixture<T> {
    let r = Rotation3::from_axis_angle(&Vector3::y_axis(), T::lit(degrees.to_radians()));
    Fixture::from_map(&sphere(), |v| r * v).expect("rotated sphere is valid")
}

/// Sphere and an ellipsoid with axes (1.0, 0.7, 1.3) bent along x by a
/// quadratic in y.
pub fn anisotropic_bend<T: Real>() -> Fixture<T> {
    Fixture::from_map(&sphere(), |v| {
        let s = Vector3::new(v.x, v.y * T::lit(0.7), v.z * T::lit(1.3));
        Vector3::new(s.x + T::lit(0.2) * s.y * s.y, s.y, s.z)
    })
    .expect("bent ellipsoid is valid")
}

/// Sphere paired with an identical copy.
pub fn identity<T: Real>() -> Fixture<T> {
    let (source, _) = normalize_mesh(&sphere()).expect("sphere is valid");
    let ground_truth = CorrespondenceMap::identity(&source, "fixture");
    Fixture { target: source.clone(), source, ground_truth }
}

/// Octahedron and a sheared, scaled copy; small enough for tight
/// finite-difference checks.
pub fn toy<T: Real>() -> Fixture<T> {
    Fixture::from_map(&shapes::octahedron(), |v| {
        Vector3::new(v.x * T::lit(1.2) + v.y * T::lit(0.1), v.y * T::lit(0.8), v.z + v.x * T::lit(0.2))
    })
    .expect("sheared octahedron is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_normalized_and_share_connectivity() {
        for f in [rigid_rotation::<f64>(10.0), anisotropic_bend(), identity(), toy()] {
            assert_eq!(f.source.faces(), f.target.faces());
            for m in [&f.source, &f.target] {
                let (lo, hi) = m.bounding_box();
                let ext = hi - lo;
                assert!((ext.max() - 2.0).abs() < 1e-12);
                assert!(((hi + lo) / 2.0).norm() < 1e-12);
            }
            assert_eq!(f.ground_truth.reconstruct(&f.target).unwrap(), f.target.vertices());
        }
        assert_eq!(identity::<f64>().mean_vertex_error(identity::<f64>().source.vertices()), 0.0);
    }
}
