//! Camera list as JSON: `[{id, width, height, fx, fy, cx, cy,
//! world_to_camera: [16 row-major], image_path?}]`.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use super::atomic_write;
use crate::scene::{CameraView, SceneError};

/// Orthonormality tolerance for rotations read from disk.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CameraError {
    #[error("camera {id}: {source}")]
    Invalid { id: u32, source: SceneError },
    #[error("camera {0}: bottom row of world_to_camera must be [0, 0, 0, 1]")]
    NotRigid(u32),
    #[error("camera file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: u32,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub world_to_camera: [f64; 16],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
}

impl CameraRecord {
    pub fn from_view(id: u32, v: &CameraView) -> Self {
        let m = v.world_to_camera_matrix();
        Self {
            id,
            width: v.width,
            height: v.height,
            fx: v.fx,
            fy: v.fy,
            cx: v.cx,
            cy: v.cy,
            world_to_camera: std::array::from_fn(|k| m[(k / 4, k % 4)]),
            image_path: None,
        }
    }

    /// Maps one COLMAP `images.txt` entry with a PINHOLE camera. COLMAP stores
    /// the world-to-camera rotation as a wxyz quaternion plus translation, in
    /// the same x-right, y-down, z-forward convention used here, so the
    /// mapping is direct. SIMPLE_PINHOLE sets `fy = fx`; distortion models are
    /// not supported.
    pub fn from_colmap(id: u32, qvec: [f64; 4], tvec: [f64; 3], intrinsics: [f64; 4], width: u32, height: u32) -> Self {
        let r = crate::scene::quaternion_to_matrix(&qvec);
        let mut m = [0.0; 16];
        for i in 0..3 {
            for j in 0..3 {
                m[4 * i + j] = r[(i, j)];
            }
            m[4 * i + 3] = tvec[i];
        }
        m[15] = 1.0;
        let [fx, fy, cx, cy] = intrinsics;
        Self {
            id,
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            world_to_camera: m,
            image_path: None,
        }
    }

    pub fn to_view(&self) -> Result<CameraView, CameraError> {
        let m = Matrix4::from_row_slice(&self.world_to_camera);
        if m.fixed_view::<1, 4>(3, 0)
            .iter()
            .zip([0.0, 0.0, 0.0, 1.0])
            .any(|(a, b)| (a - b).abs() > ROTATION_TOLERANCE)
        {
            return Err(CameraError::NotRigid(self.id));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into();
        CameraView::validated(
            r,
            t,
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.width,
            self.height,
            ROTATION_TOLERANCE,
        )
        .map_err(|source| CameraError::Invalid { id: self.id, source })
    }
}

pub fn parse_cameras(text: &str) -> Result<Vec<CameraRecord>, CameraError> {
    let records: Vec<CameraRecord> = serde_json::from_str(text)?;
    for r in &records {
        r.to_view()?;
    }
    Ok(records)
}

pub fn load_cameras(path: &Path) -> Result<Vec<CameraRecord>, CameraError> {
    parse_cameras(&std::fs::read_to_string(path)?)
}

pub fn save_cameras(path: &Path, records: &[CameraRecord]) -> Result<(), CameraError> {
    let text = serde_json::to_string_pretty(records)?;
    atomic_write(path, text.as_bytes())?;
    Ok(())
}
