use nalgebra::Vector3;

use super::camera::Camera;
use super::raster::{rasterize, RasterView};
use crate::mesh::vertex_normals_of;
use crate::scalar::Real;

/// Per-pixel unit normals in camera space with coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap<T: Real> {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vector3<T>>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct NormalRender<T: Real> {
    pub raster: RasterView<T>,
    pub map: NormalMap<T>,
}

/// Rasterizes `positions` and shades with interpolated, renormalized
/// area-weighted vertex normals.
pub fn render_normals<T: Real>(positions: &[Vector3<T>], faces: &[[usize; 3]], camera: &Camera<T>) -> NormalRender<T> {
    let raster = rasterize(positions, faces, camera);
    let map = shade_normals(&raster, camera, faces, positions);
    NormalRender { raster, map }
}

/// Shading pass with a fixed rasterization.
pub fn shade_normals<T: Real>(
    raster: &RasterView<T>,
    camera: &Camera<T>,
    faces: &[[usize; 3]],
    positions: &[Vector3<T>],
) -> NormalMap<T> {
    let vn: Vec<Vector3<T>> = vertex_normals_of(positions, faces)
        .into_iter()
        .map(|n| camera.rotation * n)
        .collect();
    let mut map = NormalMap {
        width: raster.width,
        height: raster.height,
        normals: vec![Vector3::zeros(); raster.width * raster.height],
        valid: vec![false; raster.width * raster.height],
    };
    for &px in &raster.covered {
        let px = px as usize;
        let f = faces[raster.face[px] as usize];
        let lam = raster.bary[px];
        let q = vn[f[0]] * lam[0] + vn[f[1]] * lam[1] + vn[f[2]] * lam[2];
        let len = q.norm();
        if len > T::zero() {
            map.normals[px] = q / len;
            map.valid[px] = true;
        }
    }
    map
}

/// Reverse pass of [`shade_normals`] with respect to vertex positions,
/// through the interpolated vertex normals only.
pub fn shade_normals_backward<T: Real>(
    raster: &RasterView<T>,
    camera: &Camera<T>,
    faces: &[[usize; 3]],
    positions: &[Vector3<T>],
    upstream: &[Vector3<T>],
) -> Vec<Vector3<T>> {
    let n = positions.len();
    let crosses: Vec<Vector3<T>> = faces
        .iter()
        .map(|f| (positions[f[1]] - positions[f[0]]).cross(&(positions[f[2]] - positions[f[0]])))
        .collect();
    let mut acc = vec![Vector3::zeros(); n];
    for (f, c) in faces.iter().zip(&crosses) {
        for &v in f {
            acc[v] += c;
        }
    }
    let unit: Vec<Vector3<T>> = acc
        .iter()
        .map(|m| {
            let l = m.norm();
            if l > T::zero() {
                m / l
            } else {
                Vector3::zeros()
            }
        })
        .collect();
    let cam_normals: Vec<Vector3<T>> = unit.iter().map(|u| camera.rotation * u).collect();

    // pixel → camera-space vertex normal gradients
    let mut g_cam = vec![Vector3::zeros(); n];
    for &px in &raster.covered {
        let px = px as usize;
        let g = upstream[px];
        if g == Vector3::zeros() {
            continue;
        }
        let f = faces[raster.face[px] as usize];
        let lam = raster.bary[px];
        let q = cam_normals[f[0]] * lam[0] + cam_normals[f[1]] * lam[1] + cam_normals[f[2]] * lam[2];
        let len = q.norm();
        if !(len > T::zero()) {
            continue;
        }
        let nn = q / len;
        let gq = (g - nn * nn.dot(&g)) / len;
        for k in 0..3 {
            g_cam[f[k]] += gq * lam[k];
        }
    }

    // normalization of the area-weighted sum, then face cross products
    let rt = camera.rotation.transpose();
    let g_acc: Vec<Vector3<T>> = (0..n)
        .map(|v| {
            let l = acc[v].norm();
            if !(l > T::zero()) || g_cam[v] == Vector3::zeros() {
                return Vector3::zeros();
            }
            let gw = rt * g_cam[v];
            (gw - unit[v] * unit[v].dot(&gw)) / l
        })
        .collect();
    let mut grad = vec![Vector3::zeros(); n];
    for f in faces {
        let gc = g_acc[f[0]] + g_acc[f[1]] + g_acc[f[2]];
        if gc == Vector3::zeros() {
            continue;
        }
        let a = positions[f[1]] - positions[f[0]];
        let b = positions[f[2]] - positions[f[0]];
        let ga = b.cross(&gc);
        let gb = gc.cross(&a);
        grad[f[1]] += ga;
        grad[f[2]] += gb;
        grad[f[0]] -= ga + gb;
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::render::Projection;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ortho(res: usize) -> Camera<f64> {
        Camera::look_at(
            Vector3::new(0.0, 0.0, 2.8),
            Vector3::zeros(),
            Vector3::y(),
            Projection::Orthographic { half_extent: 1.2 },
            res,
        )
        .unwrap()
    }

    #[test]
    fn flat_triangle_is_constant() {
        let m = shapes::equilateral_triangle::<f64>();
        let r = render_normals(m.vertices(), m.faces(), &ortho(32));
        assert!(r.raster.coverage() > 0);
        for &px in &r.raster.covered {
            assert!((r.map.normals[px as usize] - Vector3::z()).norm() < 1e-12);
        }
    }

    #[test]
    fn sphere_center_faces_camera() {
        let m = shapes::icosphere::<f64>(3);
        // odd resolution puts a pixel center on the optical axis
        let r = render_normals(m.vertices(), m.faces(), &ortho(65));
        let center = 32 * 65 + 32;
        assert!(r.map.valid[center]);
        assert!((r.map.normals[center] - Vector3::z()).norm() < 1e-2);
        for &px in &r.raster.covered {
            assert!((r.map.normals[px as usize].norm() - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn back_facing_geometry_is_rendered() {
        let m = shapes::equilateral_triangle::<f64>();
        let flipped: Vec<[usize; 3]> = m.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        let r = render_normals(m.vertices(), &flipped, &ortho(32));
        assert!(r.raster.coverage() > 0);
        assert!((r.map.normals[r.raster.covered[0] as usize] + Vector3::z()).norm() < 1e-12);
    }

    #[test]
    fn backward_matches_differences_with_frozen_raster() {
        let m = shapes::icosphere::<f64>(1);
        let cam = Camera::look_at(
            Vector3::new(0.7, 0.8, 2.4),
            Vector3::zeros(),
            Vector3::y(),
            Projection::Perspective { fov_y_deg: 40.0 },
            24,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos: Vec<Vector3<f64>> = m
            .vertices()
            .iter()
            .map(|p| p + Vector3::from_fn(|_, _| rng.random_range(-0.05..0.05)))
            .collect();
        let raster = rasterize(&pos, m.faces(), &cam);
        let weights: Vec<Vector3<f64>> = (0..24 * 24).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let loss = |p: &[Vector3<f64>]| -> f64 {
            let map = shade_normals(&raster, &cam, m.faces(), p);
            map.normals.iter().zip(&weights).map(|(n, w)| n.dot(w)).sum()
        };
        let grad = shade_normals_backward(&raster, &cam, m.faces(), &pos, &weights);
        let h = 1e-6;
        for v in 0..pos.len() {
            for k in 0..3 {
                let mut plus = pos.clone();
                plus[v][k] += h;
                let mut minus = pos.clone();
                minus[v][k] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((grad[v][k] - fd).abs() < 1e-6 * (1.0 + fd.abs()), "v{v} k{k}: {} vs {fd}", grad[v][k]);
            }
        }
    }
}
