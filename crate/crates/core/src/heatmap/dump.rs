//! Heatmap dump format.
//!
//! A dump is a TOML manifest plus one flat binary file of 32-bit
//! little-endian floats in `(view, joint, row, col)` order:
//!
//! ```toml
//! views = ["cam0", "cam1"]
//! joints = 17
//! height = 80
//! width = 80
//! stride = 4.0
//! byte_order = "little"
//! data_file = "frame_0000.bin"
//! ```
//!
//! `data_file` is resolved relative to the manifest. Round trips are
//! bit-exact.

use super::{Heatmap, HeatmapSet};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("manifest encode error: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("unsupported byte order `{0}` (only `little` is written)")]
    ByteOrder(String),
    #[error("binary payload holds {actual} floats, manifest implies {expected}")]
    SizeMismatch { expected: usize, actual: usize },
}

#[derive(Serialize, Deserialize)]
struct DumpManifest {
    views: Vec<String>,
    joints: usize,
    height: usize,
    width: usize,
    stride: f64,
    byte_order: String,
    data_file: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DumpError + '_ {
    move |source| DumpError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `set` as `manifest_path` plus a sibling `.bin` payload.
pub fn write_dump(manifest_path: &Path, set: &HeatmapSet) -> Result<(), DumpError> {
    let bin_path = manifest_path.with_extension("bin");
    let bin_name = bin_path
        .file_name()
        .expect("manifest path has a file name")
        .to_string_lossy()
        .into_owned();
    let dims = set.get(0, 0).dims();
    let manifest = DumpManifest {
        views: set.view_ids().to_vec(),
        joints: set.num_joints(),
        height: dims.0,
        width: dims.1,
        stride: set.get(0, 0).stride,
        byte_order: "little".to_string(),
        data_file: bin_name,
    };
    std::fs::write(manifest_path, toml::to_string_pretty(&manifest)?)
        .map_err(io_err(manifest_path))?;

    let mut out = std::io::BufWriter::new(
        std::fs::File::create(&bin_path).map_err(io_err(&bin_path))?,
    );
    for view in 0..set.num_views() {
        for joint in 0..set.num_joints() {
            for &v in set.get(view, joint).values() {
                out.write_all(&v.to_le_bytes()).map_err(io_err(&bin_path))?;
            }
        }
    }
    out.flush().map_err(io_err(&bin_path))?;
    Ok(())
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump(manifest_path: &Path) -> Result<HeatmapSet, DumpError> {
    let text = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: DumpManifest = toml::from_str(&text)?;
    if manifest.byte_order != "little" {
        return Err(DumpError::ByteOrder(manifest.byte_order));
    }
    let bin_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let mut bytes = Vec::new();
    std::fs::File::open(&bin_path)
        .map_err(io_err(&bin_path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(&bin_path))?;

    let per_map = manifest.height * manifest.width;
    let expected = manifest.views.len() * manifest.joints * per_map;
    if bytes.len() != expected * 4 {
        return Err(DumpError::SizeMismatch {
            expected,
            actual: bytes.len() / 4,
        });
    }

    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let mut per_view = Vec::with_capacity(manifest.views.len());
    for _ in 0..manifest.views.len() {
        let mut stack = Vec::with_capacity(manifest.joints);
        for _ in 0..manifest.joints {
            let values: Vec<f32> = floats.by_ref().take(per_map).collect();
            stack.push(
                Heatmap::from_values(values, (manifest.height, manifest.width), manifest.stride)
                    .expect("sizes checked above"),
            );
        }
        per_view.push(stack);
    }
    Ok(HeatmapSet::new(manifest.views, per_view).expect("manifest shapes are uniform"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec2;

    fn sample_set() -> HeatmapSet {
        let stacks: Vec<Vec<Heatmap>> = (0..2)
            .map(|v| {
                (0..3)
                    .map(|j| {
                        Heatmap::render_gaussian(
                            Vec2::new(10.0 + 7.0 * v as f64, 5.0 + 3.0 * j as f64),
                            3.5,
                            (16, 12),
                            2.0,
                        )
                    })
                    .collect()
            })
            .collect();
        HeatmapSet::new(vec!["cam0".into(), "cam1".into()], stacks).unwrap()
    }

    #[test]
    fn dump_round_trip_is_bit_exact() {
        let set = sample_set();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.toml");
        write_dump(&path, &set).unwrap();
        let back = read_dump(&path).unwrap();
        assert_eq!(back.num_views(), set.num_views());
        assert_eq!(back.num_joints(), set.num_joints());
        for v in 0..set.num_views() {
            for j in 0..set.num_joints() {
                let a = set.get(v, j).values();
                let b = back.get(v, j).values();
                let bits_a: Vec<u32> = a.iter().map(|x| x.to_bits()).collect();
                let bits_b: Vec<u32> = b.iter().map(|x| x.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let set = sample_set();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frame.toml");
        write_dump(&path, &set).unwrap();
        let bin = dir.path().join("frame.bin");
        let bytes = std::fs::read(&bin).unwrap();
        std::fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(
            read_dump(&path),
            Err(DumpError::SizeMismatch { .. })
        ));
    }
}
