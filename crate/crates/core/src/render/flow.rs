use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use super::camera::{Camera, CameraRig};
use super::raster::{rasterize, RasterView};
use crate::scalar::Real;

/// Per-pixel 2D displacement in NDC units with a validity mask.
/// Invalid pixels carry zero displacement.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowMap<T: Real> {
    pub width: usize,
    pub height: usize,
    pub flow: Vec<Vector2<T>>,
    pub valid: Vec<bool>,
}

impl<T: Real> FlowMap<T> {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            flow: vec![Vector2::zeros(); width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn cast<U: Real>(&self) -> FlowMap<U> {
        FlowMap {
            width: self.width,
            height: self.height,
            flow: self.flow.iter().map(|f| f.map(|x| U::lit(x.as_f64()))).collect(),
            valid: self.valid.clone(),
        }
    }

    /// Drops valid pixels that have an invalid 4-neighbour, `iterations` times.
    pub fn eroded(&self, iterations: usize) -> Self {
        let mut out = self.clone();
        for _ in 0..iterations {
            let prev = out.valid.clone();
            for r in 0..self.height {
                for c in 0..self.width {
                    let i = r * self.width + c;
                    if !prev[i] {
                        continue;
                    }
                    let edge = r == 0 || c == 0 || r + 1 == self.height || c + 1 == self.width;
                    if edge
                        || !prev[i - 1]
                        || !prev[i + 1]
                        || !prev[i - self.width]
                        || !prev[i + self.width]
                    {
                        out.valid[i] = false;
                        out.flow[i] = Vector2::zeros();
                    }
                }
            }
        }
        out
    }
}

/// Rasterization of the fixed source mesh, one view per rig camera. Built
/// once per registration; flow shading only changes vertex colors.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterCache<T: Real> {
    pub views: Vec<RasterView<T>>,
}

impl<T: Real> RasterCache<T> {
    pub fn build(positions: &[Vector3<T>], faces: &[[usize; 3]], rig: &CameraRig<T>) -> Self {
        let views = rig.cameras().par_iter().map(|cam| rasterize(positions, faces, cam)).collect();
        Self { views }
    }
}

#[derive(Debug, Clone)]
pub struct FlowRender<T: Real> {
    pub map: FlowMap<T>,
    /// Deformed vertices that fell behind the camera.
    pub behind_camera: usize,
}

/// Per-vertex `F = Π(deformed) − Π(source)`; `None` where the deformed
/// vertex cannot be projected.
pub fn vertex_flow<T: Real>(
    camera: &Camera<T>,
    source: &[Vector3<T>],
    deformed: &[Vector3<T>],
) -> Vec<Option<Vector2<T>>> {
    source
        .iter()
        .zip(deformed)
        .map(|(s, d)| match (camera.project(s), camera.project(d)) {
            (Ok(ps), Ok(pd)) => Some(pd.ndc - ps.ndc),
            _ => None,
        })
        .collect()
}

/// Shades the cached source rasterization with per-vertex flow and
/// interpolates it with the cached barycentric weights.
pub fn render_flow<T: Real>(
    view: &RasterView<T>,
    camera: &Camera<T>,
    faces: &[[usize; 3]],
    source: &[Vector3<T>],
    deformed: &[Vector3<T>],
) -> FlowRender<T> {
    let per_vertex = vertex_flow(camera, source, deformed);
    let behind_camera = per_vertex.iter().filter(|f| f.is_none()).count();
    let mut map = FlowMap::empty(view.width, view.height);
    for &px in &view.covered {
        let px = px as usize;
        let f = faces[view.face[px] as usize];
        let lam = view.bary[px];
        if let (Some(a), Some(b), Some(c)) = (per_vertex[f[0]], per_vertex[f[1]], per_vertex[f[2]]) {
            map.flow[px] = a * lam[0] + b * lam[1] + c * lam[2];
            map.valid[px] = true;
        }
    }
    FlowRender { map, behind_camera }
}

/// Reverse pass of [`render_flow`] with respect to the deformed vertices.
/// Coverage and weights are constants. Pixels touching a vertex behind the
/// camera carry no gradient.
pub fn render_flow_backward<T: Real>(
    view: &RasterView<T>,
    camera: &Camera<T>,
    faces: &[[usize; 3]],
    deformed: &[Vector3<T>],
    upstream: &[Vector2<T>],
) -> Vec<Vector3<T>> {
    let mut grad_flow = vec![Vector2::zeros(); deformed.len()];
    let jac: Vec<_> = deformed.iter().map(|p| camera.projection_jacobian(p).ok()).collect();
    for &px in &view.covered {
        let px = px as usize;
        let g = upstream[px];
        if g == Vector2::zeros() {
            continue;
        }
        let f = faces[view.face[px] as usize];
        if f.iter().any(|&v| jac[v].is_none()) {
            continue;
        }
        for (k, &v) in f.iter().enumerate() {
            grad_flow[v] += g * view.bary[px][k];
        }
    }
    grad_flow
        .into_iter()
        .zip(jac)
        .map(|(g, j)| match j {
            Some(j) if g != Vector2::zeros() => j.transpose() * g,
            _ => Vector3::zeros(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::shapes;
    use crate::render::{Projection, ProjectionMode, RigSpec};

    fn ortho() -> Camera<f64> {
        Camera::look_at(
            Vector3::new(0.0, 0.0, 2.8),
            Vector3::zeros(),
            Vector3::y(),
            Projection::Orthographic { half_extent: 1.2 },
            32,
        )
        .unwrap()
    }

    #[test]
    fn identity_deformation_gives_zero_flow() {
        let m = shapes::icosphere::<f64>(2);
        let cam = ortho();
        let view = rasterize(m.vertices(), m.faces(), &cam);
        let out = render_flow(&view, &cam, m.faces(), m.vertices(), m.vertices());
        assert_eq!(out.map.valid_count(), view.coverage());
        assert!(out.map.flow.iter().all(|f| *f == Vector2::zeros()));
    }

    #[test]
    fn translation_gives_constant_flow() {
        let m = shapes::icosphere::<f64>(2);
        let cam = ortho();
        let view = rasterize(m.vertices(), m.faces(), &cam);
        let moved: Vec<_> = m.vertices().iter().map(|p| p + Vector3::new(0.2, 0.0, 0.0)).collect();
        let out = render_flow(&view, &cam, m.faces(), m.vertices(), &moved);
        for &px in &view.covered {
            let f = out.map.flow[px as usize];
            assert!((f - Vector2::new(0.2 / 1.2, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn corner_weight_reproduces_vertex_flow() {
        let m = shapes::icosphere::<f64>(1);
        let cam = ortho();
        let mut view = rasterize(m.vertices(), m.faces(), &cam);
        let px = view.covered[view.covered.len() / 2] as usize;
        view.bary[px] = [1.0, 0.0, 0.0];
        let moved: Vec<_> = m.vertices().iter().map(|p| p * 1.1 + Vector3::new(0.0, 0.05, 0.0)).collect();
        let out = render_flow(&view, &cam, m.faces(), m.vertices(), &moved);
        let v = m.faces()[view.face[px] as usize][0];
        let expect = vertex_flow(&cam, m.vertices(), &moved)[v].unwrap();
        assert_eq!(out.map.flow[px], expect);
    }

    #[test]
    fn backward_single_pixel_orthographic() {
        let m = shapes::icosphere::<f64>(1);
        let cam = ortho();
        let full = rasterize(m.vertices(), m.faces(), &cam);
        let px = full.covered[10] as usize;
        let mut view = full.clone();
        view.covered = vec![px as u32];
        view.bary[px] = [1.0, 0.0, 0.0];
        let mut up = vec![Vector2::zeros(); 32 * 32];
        up[px] = Vector2::new(0.3, -0.7);
        let g = render_flow_backward(&view, &cam, m.faces(), m.vertices(), &up);
        let v = m.faces()[view.face[px] as usize][0];
        // ∂ndc/∂world = (1/1.2)·[x-row; y-row] for a camera on +z
        assert!((g[v] - Vector3::new(0.3, -0.7, 0.0) / 1.2).norm() < 1e-14);
        let zero = render_flow_backward(&full, &cam, m.faces(), m.vertices(), &vec![Vector2::zeros(); 32 * 32]);
        assert!(zero.iter().all(|x| *x == Vector3::zeros()));
    }

    #[test]
    fn cache_equals_fresh_rasterization() {
        let m = shapes::icosphere::<f64>(2);
        let rig = CameraRig::build(&RigSpec {
            azimuth_step_deg: 120.0,
            elevations_deg: vec![-30.0, 30.0],
            resolution: 32,
            mode: ProjectionMode::Perspective,
        })
        .unwrap();
        let cache = RasterCache::build(m.vertices(), m.faces(), &rig);
        for (view, cam) in cache.views.iter().zip(rig.cameras()) {
            assert_eq!(*view, rasterize(m.vertices(), m.faces(), cam));
        }
    }

    #[test]
    fn erosion_shrinks_mask() {
        let mut map = FlowMap::<f64>::empty(5, 5);
        for r in 1..4 {
            for c in 1..4 {
                map.valid[r * 5 + c] = true;
            }
        }
        let e = map.eroded(1);
        assert_eq!(e.valid_count(), 1);
        assert!(e.valid[12]);
    }
}
