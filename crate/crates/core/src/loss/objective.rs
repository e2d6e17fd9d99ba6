use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::{
    chamfer_with_assignments, flow_view_loss, identity_loss, normal_loss, polar_rotations, shear_loss,
    ChamferAssignments, LossError, LossReport, LossWeights, Terms,
};
use crate::deform::{DeformedVertices, Deformer, FieldGradient, JacobianField};
use crate::mesh::TriMesh;
use crate::render::{render_flow, render_flow_backward, render_normals, CameraRig, FlowMap, NormalMap, RasterCache, RasterView};
use crate::scalar::Real;
use crate::spatial::PointIndex;

/// Quantities that are piecewise constant in the state: nearest-neighbour
/// assignments, polar rotations, and the deformed-mesh rasterizations used
/// for normal shading. Reusing them makes the objective smooth, which is
/// what finite-difference checks need.
#[derive(Debug, Clone)]
pub struct Frozen<T: Real> {
    pub chamfer: ChamferAssignments,
    pub rotations: Vec<Matrix3<T>>,
    pub normal_rasters: Vec<RasterView<T>>,
}

#[derive(Debug, Clone)]
pub struct Evaluation<T: Real> {
    pub report: LossReport<T>,
    pub frozen: Frozen<T>,
    pub deformed: DeformedVertices<T>,
}

/// Everything static across one registration: the factored source, the
/// target and its point index, the rig with cached source rasterizations,
/// semantic flows, and target normal maps.
#[derive(Debug, Clone)]
pub struct Objective<T: Real> {
    deformer: Deformer<T>,
    target: TriMesh<T>,
    target_points: PointIndex<T>,
    rig: CameraRig<T>,
    source_cache: RasterCache<T>,
    semantic: Vec<FlowMap<T>>,
    target_normals: Vec<NormalMap<T>>,
    weights: LossWeights,
    total_iterations: usize,
}

impl<T: Real> Objective<T> {
    pub fn new(
        deformer: Deformer<T>,
        target: TriMesh<T>,
        rig: CameraRig<T>,
        semantic: Vec<FlowMap<T>>,
        weights: LossWeights,
        total_iterations: usize,
    ) -> Result<Self, LossError> {
        weights.validate()?;
        if semantic.len() != rig.len() {
            return Err(LossError::ViewCountMismatch {
                expected: rig.len(),
                actual: semantic.len(),
            });
        }
        let res = rig.resolution();
        if let Some(m) = semantic.iter().find(|m| m.width != res || m.height != res) {
            return Err(LossError::ResolutionMismatch {
                expected: (res, res),
                actual: (m.width, m.height),
            });
        }
        let source = deformer.source();
        let source_cache = RasterCache::build(source.vertices(), source.faces(), &rig);
        let target_normals = rig
            .cameras()
            .par_iter()
            .map(|cam| render_normals(target.vertices(), target.faces(), cam).map)
            .collect();
        Ok(Self {
            target_points: PointIndex::new(target.vertices()),
            deformer,
            target,
            rig,
            source_cache,
            semantic,
            target_normals,
            weights,
            total_iterations,
        })
    }

    pub fn deformer(&self) -> &Deformer<T> {
        &self.deformer
    }

    pub fn target(&self) -> &TriMesh<T> {
        &self.target
    }

    pub fn rig(&self) -> &CameraRig<T> {
        &self.rig
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn total_iterations(&self) -> usize {
        self.total_iterations
    }

    pub fn source_cache(&self) -> &RasterCache<T> {
        &self.source_cache
    }

    pub fn target_normals(&self) -> &[NormalMap<T>] {
        &self.target_normals
    }

    pub fn with_weights(&self, weights: LossWeights) -> Result<Self, LossError> {
        weights.validate()?;
        Ok(Self { weights, ..self.clone() })
    }

    /// Rendered flow of `deformed` in every view.
    pub fn render_flows(&self, deformed: &[Vector3<T>]) -> Vec<FlowMap<T>> {
        let src = self.deformer.source();
        self.rig
            .cameras()
            .par_iter()
            .zip(&self.source_cache.views)
            .map(|(cam, view)| render_flow(view, cam, src.faces(), src.vertices(), deformed).map)
            .collect()
    }

    /// Total loss and gradient at `iteration`; `frozen` pins the piecewise
    /// constant parts, otherwise they are recomputed from the current state.
    pub fn evaluate(
        &self,
        field: &JacobianField<T>,
        iteration: usize,
        frozen: Option<&Frozen<T>>,
    ) -> Result<Evaluation<T>, LossError> {
        let w = &self.weights;
        let red = &w.reductions;
        let lambda = Terms {
            flow: w.flow,
            chamfer: w.chamfer,
            normal: w.normal,
            identity: w.identity_weight(iteration, self.total_iterations),
            shear: w.shear,
        };
        let deformed = self.deformer.deform(field)?;
        let pos = deformed.positions();
        let src = self.deformer.source();
        let faces = src.faces();
        let nv = pos.len();

        // flow, per view in rig order
        let flow_views = self
            .rig
            .cameras()
            .par_iter()
            .zip(&self.source_cache.views)
            .zip(&self.semantic)
            .map(|((cam, view), sem)| {
                let rendered = render_flow(view, cam, faces, src.vertices(), pos);
                let loss = flow_view_loss(&rendered.map, sem, red.flow)?;
                let grad = if lambda.flow > 0.0 && loss.valid > 0 {
                    Some(render_flow_backward(view, cam, faces, pos, &loss.grad))
                } else {
                    None
                };
                Ok((loss.value, loss.valid, rendered.behind_camera, grad))
            })
            .collect::<Result<Vec<_>, LossError>>()?;
        let mut flow_value = T::zero();
        let mut flow_grad = vec![Vector3::zeros(); nv];
        let mut flow_valid = Vec::with_capacity(flow_views.len());
        let mut behind_camera = 0;
        for (v, n, behind, g) in flow_views {
            flow_value += v;
            flow_valid.push(n);
            behind_camera += behind;
            if let Some(g) = g {
                for (a, b) in flow_grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        if lambda.flow > 0.0 && flow_valid.iter().all(|&n| n == 0) {
            return Err(LossError::NoSignal);
        }

        let chamfer_assign = match frozen {
            Some(f) => f.chamfer.clone(),
            None => ChamferAssignments::compute(pos, &self.target_points),
        };
        let chamfer = chamfer_with_assignments(pos, self.target.vertices(), &chamfer_assign, red.chamfer);

        let normal = normal_loss(
            pos,
            faces,
            &self.target_normals,
            &self.rig,
            frozen.map(|f| f.normal_rasters.as_slice()),
            red.normal,
        )?;

        let rotations = match frozen {
            Some(f) => f.rotations.clone(),
            None => polar_rotations(field),
        };
        let identity = identity_loss(field, red.identity);
        let shear = shear_loss(field, &rotations, red.shear);

        let terms = Terms {
            flow: flow_value,
            chamfer: chamfer.value,
            normal: normal.value,
            identity: identity.value,
            shear: shear.value,
        };
        let lt = Terms {
            flow: T::lit(lambda.flow),
            chamfer: T::lit(lambda.chamfer),
            normal: T::lit(lambda.normal),
            identity: T::lit(lambda.identity),
            shear: T::lit(lambda.shear),
        };
        let total = lt.flow * terms.flow
            + lt.chamfer * terms.chamfer
            + lt.normal * terms.normal
            + lt.identity * terms.identity
            + lt.shear * terms.shear;

        let mut grad = if lambda.flow > 0.0 || lambda.chamfer > 0.0 || lambda.normal > 0.0 {
            let vertex_grad: Vec<Vector3<T>> = (0..nv)
                .map(|i| flow_grad[i] * lt.flow + chamfer.grad[i] * lt.chamfer + normal.grad[i] * lt.normal)
                .collect();
            self.deformer.backward(&vertex_grad)?
        } else {
            FieldGradient::zeros(field.len())
        };
        for ((g, gi), gs) in grad.matrices.iter_mut().zip(&identity.grad).zip(&shear.grad) {
            *g += gi * lt.identity + gs * lt.shear;
        }

        Ok(Evaluation {
            report: LossReport {
                terms,
                weights: lambda,
                total,
                grad,
                flow_valid,
                normal_overlap: normal.overlap,
                behind_camera,
            },
            frozen: Frozen {
                chamfer: chamfer_assign,
                rotations,
                normal_rasters: normal.rasters,
            },
            deformed,
        })
    }
}
