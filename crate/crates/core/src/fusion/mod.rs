//! Cross-view heatmap fusion along epipolar lines.
//!
//! For an ordered view pair (target, source), every target cell owns a row
//! of sparse weights over source cells: a Gaussian kernel in the point-line
//! distance to the target cell's epipolar line, truncated at `3σ` and
//! normalized to sum 1. Fusing adds, per joint channel, the weighted source
//! evidence onto the detected map:
//!
//! ```text
//! out_i = x_i + Σ_{v != u} Σ_j ω_{j,i} x_j^v
//! ```
//!
//! The weights depend only on camera geometry, so all joint channels share
//! one weight matrix per view pair. `line_sum` / `line_max` replace the
//! weighted inner sum with the raw sum or maximum over the same epipolar
//! support; `identity` passes the input through.
//!
//! Weights are held in row form (normalized on access against an exact f64
//! row total) plus a precomputed transpose, so fusion can skip zero source
//! cells — rendered maps are mostly zeros. Accumulation order is fixed
//! (sources ascending, entries ascending), making results independent of
//! thread count.

mod fit;
mod io;

pub use fit::fit_fusion_weights;
pub use io::{read_weights, write_weights};

use crate::geometry::{epipolar_line_from_f, fundamental_matrix, CameraParams, GeometryError};
use crate::heatmap::{Heatmap, HeatmapSet};
use crate::par;
use crate::Vec2;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("missing fusion weights for view pair ({target_view}, {source_view})")]
    MissingWeights {
        target_view: usize,
        source_view: usize,
    },
    #[error("dimension mismatch: weights expect {expected:?} cells, maps have {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("singular normal system while fitting row {row} (lambda = 0)")]
    SingularSystem { row: usize },
    #[error("weight fitting needs at least one training pair")]
    NoTrainingPairs,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("weight manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("weight manifest encode error: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("weight payload corrupt: {0}")]
    Payload(String),
}

/// How source-view evidence is combined into a target map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Epipolar Gaussian kernel weights (the full fusion rule).
    Weighted,
    /// Sum of source values on the epipolar support.
    LineSum,
    /// Maximum source value on the epipolar support.
    LineMax,
    /// Pass the input through unchanged.
    Identity,
}

impl FusionMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "weighted" => Some(Self::Weighted),
            "line-sum" | "line_sum" => Some(Self::LineSum),
            "line-max" | "line_max" => Some(Self::LineMax),
            "identity" => Some(Self::Identity),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Weighted => "weighted",
            Self::LineSum => "line-sum",
            Self::LineMax => "line-max",
            Self::Identity => "identity",
        }
    }
}

/// Sparse epipolar weights for one ordered (target, source) view pair.
///
/// Row `i` (a target cell) holds kernel values over source cells within
/// `3σ` of its epipolar line; rows whose line misses the source image are
/// empty. The effective weight of an entry is its kernel value divided by
/// the row total, so non-empty rows sum to 1 exactly in f64.
#[derive(Debug, Clone)]
pub struct FusionWeights {
    target_id: String,
    source_id: String,
    target_dims: (usize, usize),
    source_dims: (usize, usize),
    sigma_px: f64,
    /// Row start offsets into `cols` / `kernel`, length `rows + 1`.
    row_ptr: Vec<u32>,
    /// Source cell index per entry, ascending within a row.
    cols: Vec<u32>,
    /// Raw (unnormalized) kernel value per entry.
    kernel: Vec<f32>,
    /// Per-row normalization totals; 1.0 when the stored kernel is already
    /// the effective weight (fitted or deserialized matrices).
    row_sums: Vec<f64>,
    /// Transpose: entry ranges per source cell, for sparse-source fusion.
    csc_ptr: Vec<u32>,
    /// Target row of each transposed entry.
    csc_rows: Vec<u32>,
    /// Index into `kernel`/`cols` of each transposed entry.
    csc_kidx: Vec<u32>,
}

impl FusionWeights {
    pub fn target_id(&self) -> &str {
        &self.target_id
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn target_dims(&self) -> (usize, usize) {
        self.target_dims
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn sigma_px(&self) -> f64 {
        self.sigma_px
    }

    pub fn num_rows(&self) -> usize {
        self.target_dims.0 * self.target_dims.1
    }

    pub fn num_entries(&self) -> usize {
        self.cols.len()
    }

    /// Effective (normalized) weights of one target cell's row.
    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[row] as usize;
        let hi = self.row_ptr[row + 1] as usize;
        let sum = self.row_sums[row];
        (lo..hi).map(move |k| (self.cols[k] as usize, self.kernel[k] as f64 / sum))
    }

    fn from_rows(
        target_id: String,
        source_id: String,
        target_dims: (usize, usize),
        source_dims: (usize, usize),
        sigma_px: f64,
        rows: Vec<Vec<(u32, f32)>>,
        normalize: bool,
    ) -> Self {
        let num_rows = target_dims.0 * target_dims.1;
        assert_eq!(rows.len(), num_rows);
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(num_rows + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut kernel = Vec::with_capacity(nnz);
        let mut row_sums = Vec::with_capacity(num_rows);
        row_ptr.push(0u32);
        for entries in &rows {
            let mut sum = 0.0f64;
            for &(col, w) in entries {
                cols.push(col);
                kernel.push(w);
                sum += w as f64;
            }
            row_sums.push(if normalize && sum > 0.0 { sum } else { 1.0 });
            row_ptr.push(cols.len() as u32);
        }

        // Transpose by counting sort over source cells; scanning rows in
        // ascending order keeps each column's targets sorted.
        let num_cols = source_dims.0 * source_dims.1;
        let mut counts = vec![0u32; num_cols + 1];
        for &c in &cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..num_cols {
            counts[i + 1] += counts[i];
        }
        let csc_ptr = counts.clone();
        let mut fill = counts;
        let mut csc_rows = vec![0u32; nnz];
        let mut csc_kidx = vec![0u32; nnz];
        for row in 0..num_rows {
            for k in row_ptr[row] as usize..row_ptr[row + 1] as usize {
                let c = cols[k] as usize;
                let slot = fill[c] as usize;
                csc_rows[slot] = row as u32;
                csc_kidx[slot] = k as u32;
                fill[c] += 1;
            }
        }

        Self {
            target_id,
            source_id,
            target_dims,
            source_dims,
            sigma_px,
            row_ptr,
            cols,
            kernel,
            row_sums,
            csc_ptr,
            csc_rows,
            csc_kidx,
        }
    }
}

/// Builds geometric epipolar weights for the ordered pair
/// (`cam_target`, `cam_source`).
///
/// For each target cell, source cells within `3 * kernel_sigma_px` of the
/// cell's epipolar line get kernel `exp(-d²/(2σ²))`; each non-empty row is
/// normalized to sum 1. Cells whose line misses the source image (or whose
/// pixel sits on the epipole, leaving the line undefined) produce empty
/// rows. The weights depend only on pixel geometry and are shared across
/// joint channels.
pub fn build_epipolar_weights(
    cam_target: &CameraParams,
    cam_source: &CameraParams,
    dims: (usize, usize),
    stride: f64,
    kernel_sigma_px: f64,
) -> Result<FusionWeights, FusionError> {
    assert!(kernel_sigma_px > 0.0, "kernel sigma must be positive");
    let f = fundamental_matrix(cam_target, cam_source)?;
    let (height, width) = dims;
    let cutoff = 3.0 * kernel_sigma_px;
    let inv_two_sigma_sq = 1.0 / (2.0 * kernel_sigma_px * kernel_sigma_px);

    let rows: Vec<Vec<(u32, f32)>> = par::map_indexed(height * width, |cell| {
        let row = cell / width;
        let col = cell % width;
        let pixel = Vec2::new(col as f64 * stride, row as f64 * stride);
        let Ok(line) = epipolar_line_from_f(&f, &pixel) else {
            // Pixel at the epipole: no unique epipolar line, empty row.
            return Vec::new();
        };

        let mut entries: Vec<(u32, f32)> = Vec::new();
        // Walk the band around the line, sweeping the axis the line is
        // closest to parallel with so the perpendicular extent stays bounded.
        if line.b.abs() >= line.a.abs() {
            for sc in 0..width {
                let x = sc as f64 * stride;
                let y_mid = -(line.c + line.a * x) / line.b;
                let half = cutoff / line.b.abs();
                let lo = (((y_mid - half) / stride).floor() as i64 - 1).max(0);
                let hi = (((y_mid + half) / stride).ceil() as i64 + 1).min(height as i64 - 1);
                for sr in lo..=hi {
                    let sr = sr as usize;
                    let p = Vec2::new(x, sr as f64 * stride);
                    let d = line.distance(&p);
                    if d <= cutoff {
                        let w = (-d * d * inv_two_sigma_sq).exp() as f32;
                        entries.push(((sr * width + sc) as u32, w));
                    }
                }
            }
        } else {
            for sr in 0..height {
                let y = sr as f64 * stride;
                let x_mid = -(line.c + line.b * y) / line.a;
                let half = cutoff / line.a.abs();
                let lo = (((x_mid - half) / stride).floor() as i64 - 1).max(0);
                let hi = (((x_mid + half) / stride).ceil() as i64 + 1).min(width as i64 - 1);
                for sc in lo..=hi {
                    let sc = sc as usize;
                    let p = Vec2::new(sc as f64 * stride, y);
                    let d = line.distance(&p);
                    if d <= cutoff {
                        let w = (-d * d * inv_two_sigma_sq).exp() as f32;
                        entries.push(((sr * width + sc) as u32, w));
                    }
                }
            }
        }
        entries.sort_unstable_by_key(|&(c, _)| c);
        entries
    });

    Ok(FusionWeights::from_rows(
        cam_target.id().to_string(),
        cam_source.id().to_string(),
        dims,
        dims,
        kernel_sigma_px,
        rows,
        true,
    ))
}

/// Builds all ordered-pair weights for a rig, keyed by (target, source)
/// view index.
pub fn build_all_pair_weights(
    cameras: &[CameraParams],
    dims: (usize, usize),
    stride: f64,
    kernel_sigma_px: f64,
) -> Result<BTreeMap<(usize, usize), FusionWeights>, FusionError> {
    let mut out = BTreeMap::new();
    for t in 0..cameras.len() {
        for s in 0..cameras.len() {
            if t != s {
                out.insert(
                    (t, s),
                    build_epipolar_weights(&cameras[t], &cameras[s], dims, stride, kernel_sigma_px)?,
                );
            }
        }
    }
    Ok(out)
}

/// One source view's contribution to every cell of a target map, before
/// adding onto the detected map. Iterates non-zero source cells through the
/// transpose so sparse rendered maps cost little.
fn accumulate_contribution(
    weights: &FusionWeights,
    source: &Heatmap,
    mode: FusionMode,
    acc: &mut [f64],
) {
    let values = source.values();
    match mode {
        FusionMode::Weighted => {
            for (j, &x) in values.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let xj = x as f64;
                for k in weights.csc_ptr[j] as usize..weights.csc_ptr[j + 1] as usize {
                    let i = weights.csc_rows[k] as usize;
                    let w = weights.kernel[weights.csc_kidx[k] as usize] as f64;
                    acc[i] += w / weights.row_sums[i] * xj;
                }
            }
        }
        FusionMode::LineSum => {
            for (j, &x) in values.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let xj = x as f64;
                for k in weights.csc_ptr[j] as usize..weights.csc_ptr[j + 1] as usize {
                    acc[weights.csc_rows[k] as usize] += xj;
                }
            }
        }
        FusionMode::LineMax => {
            for (j, &x) in values.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let xj = x as f64;
                for k in weights.csc_ptr[j] as usize..weights.csc_ptr[j + 1] as usize {
                    let i = weights.csc_rows[k] as usize;
                    if xj > acc[i] {
                        acc[i] = xj;
                    }
                }
            }
        }
        FusionMode::Identity => {}
    }
}

/// Fuses all joint channels of one target view given its (source, weights)
/// pairs, returning the new per-joint maps. Sources must be supplied in
/// ascending view order for deterministic accumulation.
pub fn fuse_view(
    set: &HeatmapSet,
    target_view: usize,
    sources: &[(usize, &FusionWeights)],
    mode: FusionMode,
) -> Result<Vec<Heatmap>, FusionError> {
    let dims = set.get(target_view, 0).dims();
    for &(source_view, weights) in sources {
        if weights.target_dims != dims {
            return Err(FusionError::DimensionMismatch {
                expected: weights.target_dims,
                actual: dims,
            });
        }
        if weights.source_dims != set.get(source_view, 0).dims() {
            return Err(FusionError::DimensionMismatch {
                expected: weights.source_dims,
                actual: set.get(source_view, 0).dims(),
            });
        }
    }

    let joints: Vec<usize> = (0..set.num_joints()).collect();
    let maps = par::map_slice(&joints, |&joint| {
        let target = set.get(target_view, joint);
        if mode == FusionMode::Identity {
            return target.clone();
        }
        let cells = dims.0 * dims.1;
        let mut total = vec![0.0f64; cells];
        // Per-source accumulators combined in ascending view order.
        let mut acc = vec![0.0f64; cells];
        for &(source_view, weights) in sources {
            acc.fill(0.0);
            accumulate_contribution(weights, set.get(source_view, joint), mode, &mut acc);
            for (t, a) in total.iter_mut().zip(acc.iter()) {
                *t += a;
            }
        }
        let mut out = target.clone();
        for (cell, value) in out.values_mut().iter_mut().enumerate() {
            *value = (*value as f64 + total[cell]) as f32;
        }
        out
    });
    Ok(maps)
}

/// Applies the fusion rule to every view of the set. `weights` must hold an
/// entry for every ordered pair of distinct views unless the mode is
/// `Identity`. The input set is not modified.
pub fn fuse_heatmaps(
    set: &HeatmapSet,
    weights: &BTreeMap<(usize, usize), FusionWeights>,
    mode: FusionMode,
) -> Result<HeatmapSet, FusionError> {
    if mode == FusionMode::Identity {
        return Ok(set.clone());
    }
    let n = set.num_views();
    let mut per_view = Vec::with_capacity(n);
    for target in 0..n {
        let mut sources = Vec::with_capacity(n - 1);
        for source in 0..n {
            if source == target {
                continue;
            }
            let w = weights
                .get(&(target, source))
                .ok_or(FusionError::MissingWeights {
                    target_view: target,
                    source_view: source,
                })?;
            sources.push((source, w));
        }
        per_view.push(fuse_view(set, target, &sources, mode)?);
    }
    Ok(HeatmapSet::new(set.view_ids().to_vec(), per_view).expect("dims preserved"))
}
