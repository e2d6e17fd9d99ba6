use nalgebra::{Vector2, Vector3};

use super::camera::Camera;
use crate::scalar::Real;

pub const NO_FACE: u32 = u32::MAX;

/// Hard z-buffered rasterization of one view: per pixel the visible face and
/// perspective-correct barycentric weights of its corners.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterView<T: Real> {
    pub width: usize,
    pub height: usize,
    pub face: Vec<u32>,
    pub bary: Vec<[T; 3]>,
    pub depth: Vec<T>,
    /// Covered pixel indices in row-major order.
    pub covered: Vec<u32>,
}

impl<T: Real> RasterView<T> {
    pub fn is_covered(&self, pixel: usize) -> bool {
        self.face[pixel] != NO_FACE
    }

    pub fn coverage(&self) -> usize {
        self.covered.len()
    }
}

fn cross2<T: Real>(a: Vector2<T>, b: Vector2<T>) -> T {
    a.x * b.y - a.y * b.x
}

/// Rasterizes `faces` over `positions` at pixel centers. Faces are visited
/// in index order and replace a pixel only when strictly nearer, so equal
/// depths keep the lower face id. No back-face culling. In perspective
/// mode faces with a corner behind the camera are skipped.
pub fn rasterize<T: Real>(positions: &[Vector3<T>], faces: &[[usize; 3]], camera: &Camera<T>) -> RasterView<T> {
    let (w, h) = (camera.width(), camera.height());
    let mut face = vec![NO_FACE; w * h];
    let mut bary = vec![[T::zero(); 3]; w * h];
    let mut depth = vec![T::max_value().unwrap(); w * h];
    let projected: Vec<_> = positions.iter().map(|p| camera.project(p).ok()).collect();
    let perspective = matches!(camera.projection, super::Projection::Perspective { .. });
    let (wf, hf) = (T::from_usize_lossy(w), T::from_usize_lossy(h));
    let half = T::lit(0.5);

    for (fi, f) in faces.iter().enumerate() {
        let (Some(pa), Some(pb), Some(pc)) = (projected[f[0]], projected[f[1]], projected[f[2]]) else {
            continue;
        };
        let (a, b, c) = (pa.ndc, pb.ndc, pc.ndc);
        let area = cross2(b - a, c - a);
        if !(area.abs() > T::lit(1e-14)) {
            continue;
        }
        let xmin = a.x.min(b.x).min(c.x);
        let xmax = a.x.max(b.x).max(c.x);
        let ymin = a.y.min(b.y).min(c.y);
        let ymax = a.y.max(b.y).max(c.y);
        // pixel index ranges whose centers may fall inside the box
        let col_lo = ((xmin + T::one()) * wf * half - half).ceil().max(T::zero());
        let col_hi = ((xmax + T::one()) * wf * half - half).floor().min(wf - T::one());
        let row_lo = ((T::one() - ymax) * hf * half - half).ceil().max(T::zero());
        let row_hi = ((T::one() - ymin) * hf * half - half).floor().min(hf - T::one());
        if col_lo > col_hi || row_lo > row_hi {
            continue;
        }
        let (c0, c1) = (col_lo.as_f64() as usize, col_hi.as_f64() as usize);
        let (r0, r1) = (row_lo.as_f64() as usize, row_hi.as_f64() as usize);
        let depths = [pa.depth, pb.depth, pc.depth];
        for row in r0..=r1 {
            for col in c0..=c1 {
                let p = camera.pixel_center(row, col);
                let l0 = cross2(b - p, c - p) / area;
                let l1 = cross2(c - p, a - p) / area;
                let l2 = cross2(a - p, b - p) / area;
                if l0 < T::zero() || l1 < T::zero() || l2 < T::zero() {
                    continue;
                }
                let mut lam = [l0, l1, l2];
                if perspective {
                    let q = [l0 / depths[0], l1 / depths[1], l2 / depths[2]];
                    let s = q[0] + q[1] + q[2];
                    lam = [q[0] / s, q[1] / s, q[2] / s];
                } else {
                    let s = l0 + l1 + l2;
                    lam = lam.map(|l| l / s);
                }
                let z = lam[0] * depths[0] + lam[1] * depths[1] + lam[2] * depths[2];
                let px = row * w + col;
                if z < depth[px] {
                    depth[px] = z;
                    face[px] = fi as u32;
                    bary[px] = lam;
                }
            }
        }
    }
    let covered = (0..w * h).filter(|&i| face[i] != NO_FACE).map(|i| i as u32).collect();
    RasterView { width: w, height: h, face, bary, depth, covered }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::Projection;

    fn ortho(res: usize) -> Camera<f64> {
        Camera::look_at(
            Vector3::new(0.0, 0.0, 2.8),
            Vector3::zeros(),
            Vector3::y(),
            Projection::Orthographic { half_extent: 1.0 },
            res,
        )
        .unwrap()
    }

    #[test]
    fn screen_filling_triangle() {
        let pos = vec![Vector3::new(-3.0, -3.0, 0.0), Vector3::new(5.0, -3.0, 0.0), Vector3::new(-3.0, 5.0, 0.0)];
        let r = rasterize(&pos, &[[0, 1, 2]], &ortho(16));
        assert_eq!(r.coverage(), 256);
        assert!(r.face.iter().all(|&f| f == 0));
        for b in &r.bary {
            assert!(b.iter().all(|&x| x >= 0.0));
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nearer_face_wins() {
        let tri = |z: f64| vec![Vector3::new(-3.0, -3.0, z), Vector3::new(5.0, -3.0, z), Vector3::new(-3.0, 5.0, z)];
        let mut pos = tri(0.0);
        pos.extend(tri(0.5));
        let r = rasterize(&pos, &[[0, 1, 2], [3, 4, 5]], &ortho(16));
        assert!(r.face.iter().all(|&f| f == 1));
        let r = rasterize(&pos, &[[3, 4, 5], [0, 1, 2]], &ortho(16));
        assert!(r.face.iter().all(|&f| f == 0));
    }

    #[test]
    fn equal_depth_keeps_lower_face_id() {
        let pos = vec![Vector3::new(-3.0, -3.0, 0.0), Vector3::new(5.0, -3.0, 0.0), Vector3::new(-3.0, 5.0, 0.0)];
        let r = rasterize(&pos, &[[0, 1, 2], [0, 2, 1]], &ortho(16));
        assert!(r.face.iter().all(|&f| f == 0));
    }

    #[test]
    fn half_screen_coverage_matches_brute_force() {
        // diagonal triangle covering the lower-left half of the image
        let cam = ortho(64);
        let pos = vec![Vector3::new(-1.0, -1.0, 0.0), Vector3::new(1.0, -1.0, 0.0), Vector3::new(-1.0, 1.0, 0.0)];
        let r = rasterize(&pos, &[[0, 1, 2]], &cam);
        let mut brute = 0;
        for row in 0..64 {
            for col in 0..64 {
                let x = -1.0 + (2.0 * col as f64 + 1.0) / 64.0;
                let y = 1.0 - (2.0 * row as f64 + 1.0) / 64.0;
                if x >= -1.0 && y >= -1.0 && x + y <= 0.0 {
                    brute += 1;
                }
            }
        }
        assert_eq!(r.coverage(), brute);
        assert!((r.coverage() as i64 - 2048).abs() <= 64);
    }

    #[test]
    fn deterministic() {
        let m = crate::mesh::shapes::icosphere::<f64>(2);
        let cam = Camera::look_at(
            Vector3::new(1.0, 1.0, 2.5),
            Vector3::zeros(),
            Vector3::y(),
            Projection::Perspective { fov_y_deg: 40.0 },
            48,
        )
        .unwrap();
        let a = rasterize(m.vertices(), m.faces(), &cam);
        let b = rasterize(m.vertices(), m.faces(), &cam);
        assert_eq!(a, b);
        assert!(a.coverage() > 0);
    }
}
