//! Least-squares fitting of fusion weights on an epipolar support.
//!
//! Rather than learning dense weights end to end, the fit is restricted to
//! the entries of a geometric support mask (off-line weights contribute
//! nothing, and a dense system would be hopelessly underdetermined). Rows
//! are independent: for target cell `i` with support cells `S_i`, minimize
//!
//! ```text
//! Σ_t (target_i - input_i - Σ_{j in S_i} w_j source_j)² + λ Σ w_j²
//! ```
//!
//! over the training pairs `t`, one observation per (pair, joint channel) —
//! channels share weights, so every channel is a training sample.

use super::{FusionError, FusionWeights};
use crate::heatmap::HeatmapSet;
use crate::par;
use nalgebra::{DMatrix, DVector};

/// Fits per-row weights for the ordered pair (`target_view`, `source_view`)
/// of the given sets. `pairs` holds (input, target) heatmap sets; `support`
/// supplies the sparsity pattern (its weight values are ignored). The
/// returned weights are the raw fitted coefficients (no normalization).
pub fn fit_fusion_weights(
    pairs: &[(&HeatmapSet, &HeatmapSet)],
    target_view: usize,
    source_view: usize,
    lambda: f64,
    support: &FusionWeights,
) -> Result<FusionWeights, FusionError> {
    if pairs.is_empty() {
        return Err(FusionError::NoTrainingPairs);
    }
    for (input, target) in pairs {
        let in_dims = input.get(target_view, 0).dims();
        let src_dims = input.get(source_view, 0).dims();
        if in_dims != support.target_dims() || src_dims != support.source_dims() {
            return Err(FusionError::DimensionMismatch {
                expected: support.target_dims(),
                actual: in_dims,
            });
        }
        if target.get(target_view, 0).dims() != in_dims {
            return Err(FusionError::DimensionMismatch {
                expected: in_dims,
                actual: target.get(target_view, 0).dims(),
            });
        }
    }

    let num_rows = support.num_rows();
    let row_indices: Vec<usize> = (0..num_rows).collect();
    let fitted: Vec<Result<Vec<(u32, f32)>, FusionError>> = par::map_slice(&row_indices, |&row| {
        let support_cols: Vec<usize> = support.row(row).map(|(col, _)| col).collect();
        let k = support_cols.len();
        if k == 0 {
            return Ok(Vec::new());
        }

        // Normal equations accumulated over observations.
        let mut ata = DMatrix::<f64>::zeros(k, k);
        let mut aty = DVector::<f64>::zeros(k);
        let mut a_row = vec![0.0f64; k];
        for (input, target) in pairs {
            for joint in 0..input.num_joints() {
                let src = input.get(source_view, joint).values();
                for (c, &col) in support_cols.iter().enumerate() {
                    a_row[c] = src[col] as f64;
                }
                let y = target.get(target_view, joint).values()[row] as f64
                    - input.get(target_view, joint).values()[row] as f64;
                for r in 0..k {
                    let ar = a_row[r];
                    if ar == 0.0 {
                        continue;
                    }
                    for c in r..k {
                        ata[(r, c)] += ar * a_row[c];
                    }
                    aty[r] += ar * y;
                }
            }
        }
        for r in 0..k {
            for c in 0..r {
                ata[(r, c)] = ata[(c, r)];
            }
            ata[(r, r)] += lambda;
        }

        let solution = match ata.cholesky() {
            Some(chol) => chol.solve(&aty),
            None => return Err(FusionError::SingularSystem { row }),
        };
        Ok(support_cols
            .iter()
            .zip(solution.iter())
            .map(|(&col, &w)| (col as u32, w as f32))
            .collect())
    });

    let mut rows = Vec::with_capacity(num_rows);
    for entry in fitted {
        rows.push(entry?);
    }
    Ok(FusionWeights::from_rows(
        support.target_id().to_string(),
        support.source_id().to_string(),
        support.target_dims(),
        support.source_dims(),
        support.sigma_px(),
        rows,
        false,
    ))
}
