//! Mesh registration driven by multi-view 2D flow supervision.
//!
//! A source mesh is deformed through a per-face Jacobian field integrated
//! by a Poisson solve. The field is optimized with Adam against rendered
//! flow, chamfer, normal-map, and Jacobian regularization losses, all with
//! hand-derived gradients. The registered mesh yields dense correspondences
//! onto the target, scored by normalized geodesic error.
//!
//! Every numerical type is generic over [`scalar::Real`]; the aliases below
//! fix double precision, which the command-line tool uses throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correspondence;
pub mod deform;
pub mod fixtures;
pub mod loss;
pub mod mesh;
pub mod registration;
pub mod render;
pub mod scalar;
pub mod semflow;
pub mod spatial;

pub use scalar::Real;

pub type Mesh = mesh::TriMesh<f64>;
pub type Field = deform::JacobianField<f64>;
pub type Deformer = deform::Deformer<f64>;
pub type Camera = render::Camera<f64>;
pub type Rig = render::CameraRig<f64>;
pub type Flow = render::FlowMap<f64>;
pub type Objective = loss::Objective<f64>;
pub type Registration = registration::Registration<f64>;
