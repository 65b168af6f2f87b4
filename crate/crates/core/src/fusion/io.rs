//! Fusion weight serialization: TOML manifest plus a binary triplet file
//! (row index u32, col index u32, weight f32; all little-endian), triplets
//! sorted by (row, col). The stored weight is the effective (normalized)
//! coefficient applied during fusion.

use super::{FusionError, FusionWeights};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct WeightsManifest {
    target_view: String,
    source_view: String,
    target_height: usize,
    target_width: usize,
    source_height: usize,
    source_width: usize,
    sigma_px: f64,
    entries: usize,
    data_file: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FusionError + '_ {
    move |source| FusionError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes weights as `manifest_path` plus a sibling `.bin` triplet file.
pub fn write_weights(manifest_path: &Path, weights: &FusionWeights) -> Result<(), FusionError> {
    let bin_path = manifest_path.with_extension("bin");
    let manifest = WeightsManifest {
        target_view: weights.target_id().to_string(),
        source_view: weights.source_id().to_string(),
        target_height: weights.target_dims().0,
        target_width: weights.target_dims().1,
        source_height: weights.source_dims().0,
        source_width: weights.source_dims().1,
        sigma_px: weights.sigma_px(),
        entries: weights.num_entries(),
        data_file: bin_path
            .file_name()
            .expect("manifest path has a file name")
            .to_string_lossy()
            .into_owned(),
    };
    std::fs::write(manifest_path, toml::to_string_pretty(&manifest)?)
        .map_err(io_err(manifest_path))?;

    let mut out =
        std::io::BufWriter::new(std::fs::File::create(&bin_path).map_err(io_err(&bin_path))?);
    for row in 0..weights.num_rows() {
        for (col, w) in weights.row(row) {
            out.write_all(&(row as u32).to_le_bytes())
                .map_err(io_err(&bin_path))?;
            out.write_all(&(col as u32).to_le_bytes())
                .map_err(io_err(&bin_path))?;
            out.write_all(&(w as f32).to_le_bytes())
                .map_err(io_err(&bin_path))?;
        }
    }
    out.flush().map_err(io_err(&bin_path))?;
    Ok(())
}

/// Reads weights written by [`write_weights`]. The loaded entries are the
/// effective coefficients, so no further normalization is applied.
pub fn read_weights(manifest_path: &Path) -> Result<FusionWeights, FusionError> {
    let text = std::fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: WeightsManifest = toml::from_str(&text)?;
    let bin_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&manifest.data_file);
    let mut bytes = Vec::new();
    std::fs::File::open(&bin_path)
        .map_err(io_err(&bin_path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(&bin_path))?;
    if bytes.len() != manifest.entries * 12 {
        return Err(FusionError::Payload(format!(
            "expected {} triplets, file holds {} bytes",
            manifest.entries,
            bytes.len()
        )));
    }

    let num_rows = manifest.target_height * manifest.target_width;
    let num_cols = manifest.source_height * manifest.source_width;
    let mut rows: Vec<Vec<(u32, f32)>> = vec![Vec::new(); num_rows];
    let mut last = None::<(u32, u32)>;
    for chunk in bytes.chunks_exact(12) {
        let row = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        let col = u32::from_le_bytes([chunk[4], chunk[5], chunk[6], chunk[7]]);
        let w = f32::from_le_bytes([chunk[8], chunk[9], chunk[10], chunk[11]]);
        if row as usize >= num_rows || col as usize >= num_cols {
            return Err(FusionError::Payload(format!(
                "triplet ({row}, {col}) out of range"
            )));
        }
        if let Some(prev) = last {
            if (row, col) <= prev {
                return Err(FusionError::Payload(
                    "triplets are not sorted by (row, col)".into(),
                ));
            }
        }
        last = Some((row, col));
        rows[row as usize].push((col, w));
    }

    Ok(FusionWeights::from_rows(
        manifest.target_view,
        manifest.source_view,
        (manifest.target_height, manifest.target_width),
        (manifest.source_height, manifest.source_width),
        manifest.sigma_px,
        rows,
        false,
    ))
}
