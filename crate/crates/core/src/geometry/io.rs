//! Camera file format.
//!
//! Cameras are stored as TOML with one `[[cameras]]` record per camera:
//!
//! ```toml
//! [[cameras]]
//! id = "cam0"
//! intrinsics = [400.0, 0.0, 159.5, 0.0, 400.0, 159.5, 0.0, 0.0, 1.0]  # row-major
//! rotation = [...9 entries, row-major...]
//! translation = [0.0, 0.0, 3000.0]                                    # mm
//! width = 320
//! height = 320
//! ```
//!
//! Values round-trip at full f64 precision.

use super::{CameraParams, GeometryError};
use crate::{Mat3, Vec3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CameraFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("camera file parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("camera file encode error: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error(transparent)]
    Camera(#[from] GeometryError),
}

#[derive(Serialize, Deserialize)]
struct CameraFile {
    cameras: Vec<CameraRecord>,
}

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    id: String,
    intrinsics: [f64; 9],
    rotation: [f64; 9],
    translation: [f64; 3],
    width: u32,
    height: u32,
}

impl From<&CameraParams> for CameraRecord {
    fn from(cam: &CameraParams) -> Self {
        let flat = |m: &Mat3| {
            let mut out = [0.0; 9];
            for r in 0..3 {
                for c in 0..3 {
                    out[3 * r + c] = m[(r, c)];
                }
            }
            out
        };
        let t = cam.translation();
        Self {
            id: cam.id().to_string(),
            intrinsics: flat(cam.intrinsics()),
            rotation: flat(cam.rotation()),
            translation: [t.x, t.y, t.z],
            width: cam.image_dims().0,
            height: cam.image_dims().1,
        }
    }
}

impl CameraRecord {
    fn into_camera(self) -> Result<CameraParams, GeometryError> {
        let unflat = |v: &[f64; 9]| {
            Mat3::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8])
        };
        CameraParams::new(
            self.id,
            unflat(&self.intrinsics),
            unflat(&self.rotation),
            Vec3::new(self.translation[0], self.translation[1], self.translation[2]),
            (self.width, self.height),
        )
    }
}

/// Writes a camera file.
pub fn write_cameras(path: &Path, cameras: &[CameraParams]) -> Result<(), CameraFileError> {
    let file = CameraFile {
        cameras: cameras.iter().map(CameraRecord::from).collect(),
    };
    let text = toml::to_string_pretty(&file)?;
    std::fs::write(path, text).map_err(|source| CameraFileError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a camera file and validates every record.
pub fn read_cameras(path: &Path) -> Result<Vec<CameraParams>, CameraFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| CameraFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: CameraFile = toml::from_str(&text)?;
    file.cameras
        .into_iter()
        .map(|r| r.into_camera().map_err(CameraFileError::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::generate_rig;

    #[test]
    fn camera_file_round_trip_is_exact() {
        let rig = generate_rig(4, 3000.0, Vec3::new(0.0, 0.0, 1000.0), (320, 320), 400.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.toml");
        write_cameras(&path, &rig).unwrap();
        let back = read_cameras(&path).unwrap();
        assert_eq!(rig.len(), back.len());
        for (a, b) in rig.iter().zip(back.iter()) {
            assert_eq!(a.id(), b.id());
            assert_eq!(a.intrinsics(), b.intrinsics());
            assert_eq!(a.rotation(), b.rotation());
            assert_eq!(a.translation(), b.translation());
            assert_eq!(a.image_dims(), b.image_dims());
        }
    }

    #[test]
    fn invalid_rotation_is_rejected_on_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cameras.toml");
        let text = r#"
[[cameras]]
id = "bad"
intrinsics = [400.0, 0.0, 160.0, 0.0, 400.0, 160.0, 0.0, 0.0, 1.0]
rotation = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]
translation = [0.0, 0.0, 0.0]
width = 320
height = 320
"#;
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            read_cameras(&path),
            Err(CameraFileError::Camera(_))
        ));
    }
}
