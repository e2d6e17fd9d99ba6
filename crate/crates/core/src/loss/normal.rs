use nalgebra::Vector3;
use rayon::prelude::*;

use super::{LossError, Reduction};
use crate::render::{rasterize, shade_normals, shade_normals_backward, CameraRig, NormalMap, RasterView};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct ViewNormalLoss<T: Real> {
    pub value: T,
    pub overlap: usize,
    pub grad: Vec<Vector3<T>>,
}

/// L1 between two normal maps over the intersection of their coverage.
pub fn normal_view_loss<T: Real>(
    rendered: &NormalMap<T>,
    target: &NormalMap<T>,
    reduction: Reduction,
) -> Result<ViewNormalLoss<T>, LossError> {
    if rendered.width != target.width || rendered.height != target.height {
        return Err(LossError::ResolutionMismatch {
            expected: (target.width, target.height),
            actual: (rendered.width, rendered.height),
        });
    }
    let both: Vec<usize> = (0..rendered.normals.len())
        .filter(|&i| rendered.valid[i] && target.valid[i])
        .collect();
    let mut grad = vec![Vector3::zeros(); rendered.normals.len()];
    if both.is_empty() {
        return Ok(ViewNormalLoss { value: T::zero(), overlap: 0, grad });
    }
    let scale = reduction.scale::<T>(both.len());
    let mut value = T::zero();
    for &i in &both {
        let d = rendered.normals[i] - target.normals[i];
        value += d.x.abs() + d.y.abs() + d.z.abs();
        grad[i] = d.map(|x| x.sign0()) * scale;
    }
    Ok(ViewNormalLoss { value: value * scale, overlap: both.len(), grad })
}

#[derive(Debug, Clone)]
pub struct NormalLossOutput<T: Real> {
    pub value: T,
    pub overlap: Vec<usize>,
    pub grad: Vec<Vector3<T>>,
    /// Rasterizations of the deformed mesh used for shading.
    pub rasters: Vec<RasterView<T>>,
}

impl<T: Real> NormalLossOutput<T> {
    /// True when no view had any overlapping coverage.
    pub fn is_empty(&self) -> bool {
        self.overlap.iter().all(|&n| n == 0)
    }
}

/// Renders the deformed mesh in every view and compares against the target
/// normal maps. Pass `rasters` to shade with a frozen rasterization.
pub fn normal_loss<T: Real>(
    positions: &[Vector3<T>],
    faces: &[[usize; 3]],
    target_maps: &[NormalMap<T>],
    rig: &CameraRig<T>,
    rasters: Option<&[RasterView<T>]>,
    reduction: Reduction,
) -> Result<NormalLossOutput<T>, LossError> {
    if target_maps.len() != rig.len() {
        return Err(LossError::ViewCountMismatch {
            expected: rig.len(),
            actual: target_maps.len(),
        });
    }
    let per_view = rig
        .cameras()
        .par_iter()
        .enumerate()
        .map(|(k, cam)| {
            let raster = match rasters {
                Some(r) => r[k].clone(),
                None => rasterize(positions, faces, cam),
            };
            let map = shade_normals(&raster, cam, faces, positions);
            let view = normal_view_loss(&map, &target_maps[k], reduction)?;
            let grad = if view.overlap > 0 {
                shade_normals_backward(&raster, cam, faces, positions, &view.grad)
            } else {
                vec![Vector3::zeros(); positions.len()]
            };
            Ok((view.value, view.overlap, grad, raster))
        })
        .collect::<Result<Vec<_>, LossError>>()?;
    let mut value = T::zero();
    let mut grad = vec![Vector3::zeros(); positions.len()];
    let mut overlap = Vec::with_capacity(per_view.len());
    let mut out_rasters = Vec::with_capacity(per_view.len());
    for (v, n, g, r) in per_view {
        value += v;
        overlap.push(n);
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
        out_rasters.push(r);
    }
    Ok(NormalLossOutput { value, overlap, grad, rasters: out_rasters })
}
