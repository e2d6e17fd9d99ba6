//! Multi-view cameras and a deterministic hard rasterizer for flow and
//! normal maps, with reverse passes through the shaded attributes.

mod camera;
mod flow;
mod normals;
mod raster;

pub use camera::{
    Camera, CameraRig, Projected, Projection, ProjectionMode, RigSpec, DEFAULT_FOV_Y_DEG,
    DEFAULT_ORTHO_HALF_EXTENT, MIN_RESOLUTION, NEAR_PLANE, RIG_RADIUS,
};
pub use flow::{render_flow, render_flow_backward, vertex_flow, FlowMap, FlowRender, RasterCache};
pub use normals::{render_normals, shade_normals, shade_normals_backward, NormalMap, NormalRender};
pub use raster::{rasterize, RasterView, NO_FACE};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error("point lies behind the camera")]
    BehindCamera,
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("invalid camera rig: {0}")]
    InvalidRig(String),
}
