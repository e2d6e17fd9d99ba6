//! Binary flow-map files and geometric oracle flows.
//!
//! Layout, all little-endian: magic `SFLW`, version `u32 = 1`, view count
//! `u32`; per view a camera index `u32`, width `u32`, height `u32`, then
//! `height × width` records of three `f32` values `(u, v, valid)` in
//! row-major order from the top-left pixel. `valid` is exactly 0.0 or 1.0.

use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use crate::correspondence::{CorrespondenceMap, EvalError};
use crate::mesh::TriMesh;
use crate::render::{rasterize, CameraRig, FlowMap};
use crate::scalar::Real;

pub const FLOW_MAGIC: [u8; 4] = *b"SFLW";
pub const FLOW_VERSION: u32 = 1;
const HEADER_BYTES: usize = 12;
const VIEW_HEADER_BYTES: usize = 12;
const RECORD_BYTES: usize = 12;

#[derive(Debug, Error)]
pub enum SemflowError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected \"SFLW\"")]
    BadMagic([u8; 4]),
    #[error("unsupported flow file version {0}")]
    Version(u32),
    #[error("file truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("{0} trailing bytes after the last view")]
    TrailingBytes(usize),
    #[error("view {view}: {width}×{height} does not match rig resolution {resolution}")]
    DimensionMismatch { view: usize, width: usize, height: usize, resolution: usize },
    #[error("file holds {found} views, rig has {expected}")]
    ViewCount { expected: usize, found: usize },
    #[error("view {view}: camera index {camera} invalid or repeated")]
    CameraIndex { view: usize, camera: u32 },
    #[error("view {view}, pixel {pixel}: valid flag {value} is neither 0 nor 1")]
    InvalidFlag { view: usize, pixel: usize, value: f32 },
    #[error("view {view}, pixel {pixel}: non-finite flow")]
    NonFinite { view: usize, pixel: usize },
    #[error("ground truth has {found} entries for {expected} source vertices")]
    GroundTruthLength { expected: usize, found: usize },
    #[error(transparent)]
    Correspondence(#[from] EvalError),
}

/// One stored view: the rig camera it belongs to and its flow map.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowView<T: Real> {
    pub camera: u32,
    pub map: FlowMap<T>,
}

pub fn encode_flows<T: Real>(views: &[FlowView<T>]) -> Vec<u8> {
    let records: usize = views.iter().map(|v| v.map.width * v.map.height).sum();
    let mut out = Vec::with_capacity(HEADER_BYTES + views.len() * VIEW_HEADER_BYTES + records * RECORD_BYTES);
    out.extend_from_slice(&FLOW_MAGIC);
    out.extend_from_slice(&FLOW_VERSION.to_le_bytes());
    out.extend_from_slice(&(views.len() as u32).to_le_bytes());
    for v in views {
        out.extend_from_slice(&v.camera.to_le_bytes());
        out.extend_from_slice(&(v.map.width as u32).to_le_bytes());
        out.extend_from_slice(&(v.map.height as u32).to_le_bytes());
        for (f, &ok) in v.map.flow.iter().zip(&v.map.valid) {
            let (u, w) = if ok { (f.x.as_f64() as f32, f.y.as_f64() as f32) } else { (0.0, 0.0) };
            out.extend_from_slice(&u.to_le_bytes());
            out.extend_from_slice(&w.to_le_bytes());
            out.extend_from_slice(&(if ok { 1.0f32 } else { 0.0f32 }).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], SemflowError> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(SemflowError::Truncated { offset: self.pos, needed: n, available });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SemflowError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn f32_at(b: &[u8], i: usize) -> f32 {
    f32::from_le_bytes(b[i..i + 4].try_into().expect("4 bytes"))
}

pub fn decode_flows<T: Real>(bytes: &[u8]) -> Result<Vec<FlowView<T>>, SemflowError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
    if magic != FLOW_MAGIC {
        return Err(SemflowError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != FLOW_VERSION {
        return Err(SemflowError::Version(version));
    }
    let count = r.u32()? as usize;
    let mut views = Vec::with_capacity(count.min(1024));
    for view in 0..count {
        let camera = r.u32()?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let n = width.checked_mul(height).and_then(|n| n.checked_mul(RECORD_BYTES));
        let body = r.take(n.unwrap_or(usize::MAX))?;
        let mut map = FlowMap::empty(width, height);
        for pixel in 0..width * height {
            let o = pixel * RECORD_BYTES;
            let (u, v, flag) = (f32_at(body, o), f32_at(body, o + 4), f32_at(body, o + 8));
            if flag != 0.0 && flag != 1.0 {
                return Err(SemflowError::InvalidFlag { view, pixel, value: flag });
            }
            if !(u.is_finite() && v.is_finite()) {
                return Err(SemflowError::NonFinite { view, pixel });
            }
            if flag == 1.0 {
                map.valid[pixel] = true;
                map.flow[pixel] = Vector2::new(T::lit(u as f64), T::lit(v as f64));
            }
        }
        views.push(FlowView { camera, map });
    }
    if r.pos != bytes.len() {
        return Err(SemflowError::TrailingBytes(bytes.len() - r.pos));
    }
    Ok(views)
}

/// Orders decoded views by camera index and checks them against the rig.
pub fn match_rig<T: Real>(views: Vec<FlowView<T>>, rig: &CameraRig<T>) -> Result<Vec<FlowMap<T>>, SemflowError> {
    if views.len() != rig.len() {
        return Err(SemflowError::ViewCount { expected: rig.len(), found: views.len() });
    }
    let res = rig.resolution();
    let mut slots: Vec<Option<FlowMap<T>>> = vec![None; rig.len()];
    for (view, v) in views.into_iter().enumerate() {
        if v.map.width != res || v.map.height != res {
            return Err(SemflowError::DimensionMismatch {
                view,
                width: v.map.width,
                height: v.map.height,
                resolution: res,
            });
        }
        match slots.get_mut(v.camera as usize) {
            Some(slot @ None) => *slot = Some(v.map),
            _ => return Err(SemflowError::CameraIndex { view, camera: v.camera }),
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("every slot filled")).collect())
}

/// Writes one view per map, camera index equal to its position.
pub fn write_flows<T: Real>(path: impl AsRef<Path>, maps: &[FlowMap<T>]) -> Result<(), SemflowError> {
    let views: Vec<_> = maps
        .iter()
        .enumerate()
        .map(|(i, m)| FlowView { camera: i as u32, map: m.clone() })
        .collect();
    std::fs::write(path, encode_flows(&views))?;
    Ok(())
}

pub fn read_flows<T: Real>(path: impl AsRef<Path>, rig: &CameraRig<T>) -> Result<Vec<FlowMap<T>>, SemflowError> {
    let bytes = std::fs::read(path)?;
    match_rig(decode_flows(&bytes)?, rig)
}

/// Flow a perfect 2D correspondence model would predict: the source is
/// rasterized per camera, corresponded target points are interpolated at
/// each covered pixel, and the flow is their projection minus that of the
/// source surface point seen at the pixel (the pixel center up to
/// rounding). Validity is source coverage; occlusion is not filtered.
pub fn oracle_flows<T: Real>(
    source: &TriMesh<T>,
    target: &TriMesh<T>,
    gt: &CorrespondenceMap,
    rig: &CameraRig<T>,
) -> Result<Vec<FlowMap<T>>, SemflowError> {
    if gt.len() != source.vertex_count() {
        return Err(SemflowError::GroundTruthLength { expected: source.vertex_count(), found: gt.len() });
    }
    let corresponded: Vec<Vector3<T>> = gt.reconstruct(target)?;
    let maps = rig
        .cameras()
        .par_iter()
        .map(|cam| {
            let view = rasterize(source.vertices(), source.faces(), cam);
            let mut map = FlowMap::empty(view.width, view.height);
            for &px in &view.covered {
                let px = px as usize;
                let f = source.faces()[view.face[px] as usize];
                let b = view.bary[px];
                let interp = |p: &[Vector3<T>]| p[f[0]] * b[0] + p[f[1]] * b[1] + p[f[2]] * b[2];
                if let (Ok(to), Ok(from)) = (cam.project(&interp(&corresponded)), cam.project(&interp(source.vertices()))) {
                    map.flow[px] = to.ndc - from.ndc;
                    map.valid[px] = true;
                }
            }
            map
        })
        .collect();
    Ok(maps)
}
