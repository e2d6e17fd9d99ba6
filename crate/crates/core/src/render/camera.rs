use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::RenderError;
use crate::scalar::Real;

/// Distance of rig cameras from the origin.
pub const RIG_RADIUS: f64 = 2.8;
pub const DEFAULT_FOV_Y_DEG: f64 = 40.0;
pub const DEFAULT_ORTHO_HALF_EXTENT: f64 = 1.2;
pub const MIN_RESOLUTION: usize = 16;
/// Perspective points closer than this along the view axis count as behind the camera.
pub const NEAR_PLANE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionMode {
    Perspective,
    Orthographic,
}

impl std::str::FromStr for ProjectionMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "perspective" => Ok(Self::Perspective),
            "orthographic" | "ortho" => Ok(Self::Orthographic),
            other => Err(format!("unknown projection mode `{other}`")),
        }
    }
}

impl std::fmt::Display for ProjectionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Perspective => "perspective",
            Self::Orthographic => "orthographic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    /// Pinhole camera with a vertical field of view in degrees.
    Perspective { fov_y_deg: f64 },
    Orthographic { half_extent: f64 },
}

impl Projection {
    pub fn mode(&self) -> ProjectionMode {
        match self {
            Self::Perspective { .. } => ProjectionMode::Perspective,
            Self::Orthographic { .. } => ProjectionMode::Orthographic,
        }
    }

    /// Field of view (perspective) or half extent (orthographic).
    pub fn parameter(&self) -> f64 {
        match *self {
            Self::Perspective { fov_y_deg } => fov_y_deg,
            Self::Orthographic { half_extent } => half_extent,
        }
    }
}

/// Projected point: NDC in `[-1, 1]²` for visible points, and depth as the
/// distance along the view axis (camera-space `-z`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projected<T: Real> {
    pub ndc: Vector2<T>,
    pub depth: T,
}

/// Camera with a world-to-camera rigid transform; camera space is x right,
/// y up, looking down `-z`. Images are square.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
    pub projection: Projection,
    pub resolution: usize,
}

impl<T: Real> Camera<T> {
    pub fn new(
        rotation: Matrix3<T>,
        translation: Vector3<T>,
        projection: Projection,
        resolution: usize,
    ) -> Result<Self, RenderError> {
        if resolution < MIN_RESOLUTION {
            return Err(RenderError::InvalidCamera(format!(
                "resolution {resolution} below minimum {MIN_RESOLUTION}"
            )));
        }
        let err = (rotation.transpose() * rotation - Matrix3::identity()).norm().as_f64();
        if !(err <= 1e-10) {
            return Err(RenderError::InvalidCamera(format!("rotation not orthonormal (error {err:e})")));
        }
        Ok(Self { rotation, translation, projection, resolution })
    }

    pub fn look_at(
        eye: Vector3<T>,
        target: Vector3<T>,
        up: Vector3<T>,
        projection: Projection,
        resolution: usize,
    ) -> Result<Self, RenderError> {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up);
        if !(right.norm() > T::lit(1e-12)) {
            return Err(RenderError::InvalidCamera("view direction parallel to up vector".into()));
        }
        let right = right.normalize();
        let true_up = right.cross(&forward);
        let rotation = Matrix3::from_rows(&[right.transpose(), true_up.transpose(), (-forward).transpose()]);
        Self::new(rotation, -(rotation * eye), projection, resolution)
    }

    pub fn width(&self) -> usize {
        self.resolution
    }

    pub fn height(&self) -> usize {
        self.resolution
    }

    pub fn to_camera(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    fn focal(&self) -> T {
        match self.projection {
            Projection::Perspective { fov_y_deg } => T::lit(1.0 / (fov_y_deg.to_radians() / 2.0).tan()),
            Projection::Orthographic { half_extent } => T::lit(1.0 / half_extent),
        }
    }

    pub fn project(&self, p: &Vector3<T>) -> Result<Projected<T>, RenderError> {
        let c = self.to_camera(p);
        let depth = -c.z;
        let f = self.focal();
        match self.projection {
            Projection::Perspective { .. } => {
                if !(depth > T::lit(NEAR_PLANE)) {
                    return Err(RenderError::BehindCamera);
                }
                Ok(Projected {
                    ndc: Vector2::new(c.x * f / depth, c.y * f / depth),
                    depth,
                })
            }
            Projection::Orthographic { .. } => Ok(Projected {
                ndc: Vector2::new(c.x * f, c.y * f),
                depth,
            }),
        }
    }

    /// `∂ndc/∂p` in world coordinates.
    pub fn projection_jacobian(&self, p: &Vector3<T>) -> Result<Matrix2x3<T>, RenderError> {
        let f = self.focal();
        let local = match self.projection {
            Projection::Perspective { .. } => {
                let c = self.to_camera(p);
                let depth = -c.z;
                if !(depth > T::lit(NEAR_PLANE)) {
                    return Err(RenderError::BehindCamera);
                }
                // x_ndc = f·x / (−z)
                let inv = T::one() / depth;
                Matrix2x3::new(
                    f * inv,
                    T::zero(),
                    f * c.x * inv * inv,
                    T::zero(),
                    f * inv,
                    f * c.y * inv * inv,
                )
            }
            Projection::Orthographic { .. } => Matrix2x3::new(f, T::zero(), T::zero(), T::zero(), f, T::zero()),
        };
        Ok(local * self.rotation)
    }

    /// NDC of a pixel center; row 0 is the top of the image.
    pub fn pixel_center(&self, row: usize, col: usize) -> Vector2<T> {
        let w = T::from_usize_lossy(self.width());
        let h = T::from_usize_lossy(self.height());
        let two = T::lit(2.0);
        Vector2::new(
            -T::one() + (two * T::from_usize_lossy(col) + T::one()) / w,
            T::one() - (two * T::from_usize_lossy(row) + T::one()) / h,
        )
    }

    /// World-to-camera transform as a row-major 4×4 matrix.
    pub fn world_to_cam_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        let mut m = [0.0; 16];
        for i in 0..3 {
            for j in 0..3 {
                m[4 * i + j] = r[(i, j)].as_f64();
            }
            m[4 * i + 3] = t[i].as_f64();
        }
        m[15] = 1.0;
        m
    }
}

/// Rig construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigSpec {
    pub azimuth_step_deg: f64,
    pub elevations_deg: Vec<f64>,
    pub resolution: usize,
    pub mode: ProjectionMode,
}

impl Default for RigSpec {
    fn default() -> Self {
        Self {
            azimuth_step_deg: 60.0,
            elevations_deg: vec![-30.0, -10.0, 10.0, 30.0, 50.0],
            resolution: 512,
            mode: ProjectionMode::Perspective,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig<T: Real> {
    cameras: Vec<Camera<T>>,
}

#[derive(Serialize, Deserialize)]
struct RigCameraJson {
    world_to_cam: Vec<f64>,
    fov_or_extent: f64,
}

#[derive(Serialize, Deserialize)]
struct RigJson {
    mode: ProjectionMode,
    resolution: usize,
    cameras: Vec<RigCameraJson>,
}

impl<T: Real> CameraRig<T> {
    pub fn new(cameras: Vec<Camera<T>>) -> Result<Self, RenderError> {
        let first = cameras
            .first()
            .ok_or_else(|| RenderError::InvalidRig("rig needs at least one camera".into()))?;
        if cameras
            .iter()
            .any(|c| c.resolution != first.resolution || c.projection.mode() != first.projection.mode())
        {
            return Err(RenderError::InvalidRig("cameras differ in resolution or projection mode".into()));
        }
        Ok(Self { cameras })
    }

    /// Cameras on a sphere around the origin, looking at it with `+y` up.
    /// Ordered elevation-major, azimuth-minor; azimuth 0 sits on `+z`.
    pub fn build(spec: &RigSpec) -> Result<Self, RenderError> {
        let step = spec.azimuth_step_deg;
        let count = 360.0 / step;
        if !(step > 0.0) || (count - count.round()).abs() > 1e-9 {
            return Err(RenderError::InvalidRig(format!("azimuth step {step} does not divide 360")));
        }
        if spec.elevations_deg.is_empty() {
            return Err(RenderError::InvalidRig("no elevations given".into()));
        }
        if let Some(e) = spec.elevations_deg.iter().find(|e| !(e.abs() < 90.0)) {
            return Err(RenderError::InvalidRig(format!("elevation {e} must lie strictly inside (-90, 90)")));
        }
        let projection = match spec.mode {
            ProjectionMode::Perspective => Projection::Perspective { fov_y_deg: DEFAULT_FOV_Y_DEG },
            ProjectionMode::Orthographic => Projection::Orthographic { half_extent: DEFAULT_ORTHO_HALF_EXTENT },
        };
        let mut cameras = Vec::new();
        for &el in &spec.elevations_deg {
            for k in 0..count.round() as usize {
                let az = (k as f64 * step).to_radians();
                let el = el.to_radians();
                let eye = Vector3::new(el.cos() * az.sin(), el.sin(), el.cos() * az.cos()) * RIG_RADIUS;
                cameras.push(Camera::look_at(
                    eye.map(T::lit),
                    Vector3::zeros(),
                    Vector3::y(),
                    projection,
                    spec.resolution,
                )?);
            }
        }
        Self::new(cameras)
    }

    pub fn cameras(&self) -> &[Camera<T>] {
        &self.cameras
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.cameras[0].resolution
    }

    pub fn to_json(&self) -> String {
        let doc = RigJson {
            mode: self.cameras[0].projection.mode(),
            resolution: self.resolution(),
            cameras: self
                .cameras
                .iter()
                .map(|c| RigCameraJson {
                    world_to_cam: c.world_to_cam_row_major().to_vec(),
                    fov_or_extent: c.projection.parameter(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("rig serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RenderError> {
        let doc: RigJson = serde_json::from_str(text).map_err(|e| RenderError::InvalidRig(e.to_string()))?;
        let cameras = doc
            .cameras
            .iter()
            .map(|c| {
                if c.world_to_cam.len() != 16 {
                    return Err(RenderError::InvalidRig("world_to_cam needs 16 entries".into()));
                }
                let m = &c.world_to_cam;
                let rotation = Matrix3::from_fn(|i, j| T::lit(m[4 * i + j]));
                let translation = Vector3::new(T::lit(m[3]), T::lit(m[7]), T::lit(m[11]));
                let projection = match doc.mode {
                    ProjectionMode::Perspective => Projection::Perspective { fov_y_deg: c.fov_or_extent },
                    ProjectionMode::Orthographic => Projection::Orthographic { half_extent: c.fov_or_extent },
                };
                Camera::new(rotation, translation, projection, doc.resolution)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(cameras)
    }
}
