//! Unary/pairwise potentials and exact MAP inference on the body tree.
//!
//! The posterior over a discrete pose assignment is the product of per-joint
//! unaries (average heatmap confidence over views) and binary limb-length
//! indicators per edge. The tree MAP is found by max-product dynamic
//! programming, run in log space so that 16-edge products cannot underflow;
//! an indicator of 0 maps to -inf. The reported score is re-computed in
//! product form from the selected bins, in a fixed order, so it matches an
//! exhaustive enumeration bit for bit.

use super::{BodyGraph, GridSpec, InferenceError, LimbPriors, Pose3D};
use crate::geometry::CameraParams;
use crate::heatmap::HeatmapSet;
use crate::par;
use crate::Vec3;

/// Average heatmap confidence per grid bin, per joint.
///
/// Each bin center is projected into every view and the joint's map sampled
/// bilinearly; projections behind a camera or outside the map contribute 0
/// while the denominator stays the view count.
pub fn unary_potentials(
    grids: &[GridSpec],
    set: &HeatmapSet,
    cameras: &[CameraParams],
) -> Vec<Vec<f64>> {
    assert_eq!(set.num_views(), cameras.len());
    let num_views = cameras.len() as f64;
    grids
        .iter()
        .enumerate()
        .map(|(joint, grid)| {
            par::map_indexed(grid.num_bins(), |bin| {
                let center = grid.bin_center(bin);
                let mut sum = 0.0;
                for (view, cam) in cameras.iter().enumerate() {
                    if let Ok(pixel) = cam.project(&center) {
                        sum += set.get(view, joint).sample_bilinear(&pixel);
                    }
                }
                sum / num_views
            })
        })
        .collect()
}

#[inline]
fn dist_sq(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

/// Limb-length indicator: 1 iff the distance between the two positions lies
/// in `[mean - eps, mean + eps]`, boundaries included.
#[inline]
pub fn pairwise_potential(a: &Vec3, b: &Vec3, mean: f64, eps: f64) -> bool {
    let lo = (mean - eps).max(0.0);
    let hi = mean + eps;
    let d2 = dist_sq(a, b);
    d2 >= lo * lo && d2 <= hi * hi
}

/// MAP solution of the pictorial-structure posterior.
#[derive(Debug, Clone)]
pub struct PsmSolution {
    pub pose: Pose3D,
    /// Selected bin index per joint.
    pub bins: Vec<usize>,
    /// Unnormalized posterior at the selected assignment: the product of the
    /// selected unaries and pairwise indicators.
    pub score: f64,
    /// Set when no assignment has positive score; the pose then falls back
    /// to the per-joint unary argmax.
    pub infeasible: bool,
}

/// Exact MAP over the product of unaries and limb indicators via
/// max-product DP on the tree (leaf-to-root messages, root argmax, downward
/// backtracking). Ties break to the smallest bin index at every argmax.
pub fn psm_infer(
    graph: &BodyGraph,
    grids: &[GridSpec],
    unaries: &[Vec<f64>],
    priors: &LimbPriors,
) -> Result<PsmSolution, InferenceError> {
    let m = graph.num_joints();
    if grids.len() != m {
        return Err(InferenceError::CountMismatch {
            what: "grids",
            expected: m,
            actual: grids.len(),
        });
    }
    if unaries.len() != m {
        return Err(InferenceError::CountMismatch {
            what: "unary tables",
            expected: m,
            actual: unaries.len(),
        });
    }
    for (j, u) in unaries.iter().enumerate() {
        if u.len() != grids[j].num_bins() {
            return Err(InferenceError::CountMismatch {
                what: "unary entries",
                expected: grids[j].num_bins(),
                actual: u.len(),
            });
        }
    }
    if priors.lengths().len() != graph.edges().len() {
        return Err(InferenceError::CountMismatch {
            what: "limb priors",
            expected: graph.edges().len(),
            actual: priors.lengths().len(),
        });
    }

    let centers: Vec<Vec<Vec3>> = grids.iter().map(GridSpec::bin_centers).collect();
    // Log-domain node totals: unary plus accumulated child messages.
    let mut node_total: Vec<Vec<f64>> = unaries
        .iter()
        .map(|u| u.iter().map(|&v| v.ln()).collect())
        .collect();

    let order = graph.edges_root_first();
    let edge_of = |parent: usize, child: usize| -> usize {
        graph
            .edges()
            .iter()
            .position(|&(a, b)| (a, b) == (parent, child) || (a, b) == (child, parent))
            .expect("traversal edge exists in the graph")
    };

    // Leaf-to-root sweep. For each edge, message[sp] is the best child total
    // over child states compatible with parent state sp; backtrack[sp] is the
    // child state attaining it.
    let mut backtracks: Vec<Vec<u32>> = vec![Vec::new(); order.len()];
    for (step, &(parent, child)) in order.iter().enumerate().rev() {
        let e = edge_of(parent, child);
        let mean = priors.length(e);
        let eps = priors.epsilon();
        let child_total = &node_total[child];
        let child_centers = &centers[child];
        let parent_centers = &centers[parent];

        let rows: Vec<(f64, u32)> = par::map_indexed(parent_centers.len(), |sp| {
            let pc = &parent_centers[sp];
            let mut best = f64::NEG_INFINITY;
            let mut best_sc = 0u32;
            for (sc, cc) in child_centers.iter().enumerate() {
                if pairwise_potential(pc, cc, mean, eps) {
                    let total = child_total[sc];
                    if total > best {
                        best = total;
                        best_sc = sc as u32;
                    }
                }
            }
            (best, best_sc)
        });

        let mut backtrack = Vec::with_capacity(rows.len());
        for (sp, (best, best_sc)) in rows.into_iter().enumerate() {
            node_total[parent][sp] += best;
            backtrack.push(best_sc);
        }
        backtracks[step] = backtrack;
    }

    // Root argmax, smallest index on ties.
    let root = graph.root();
    let mut best_root = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (s, &v) in node_total[root].iter().enumerate() {
        if v > best_val {
            best_val = v;
            best_root = s;
        }
    }

    let mut bins = vec![0usize; m];
    let infeasible = best_val == f64::NEG_INFINITY;
    if infeasible {
        // No assignment has positive score; fall back to per-joint unary argmax.
        for (j, u) in unaries.iter().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut best_s = 0usize;
            for (s, &v) in u.iter().enumerate() {
                if v > best {
                    best = v;
                    best_s = s;
                }
            }
            bins[j] = best_s;
        }
    } else {
        bins[root] = best_root;
        for (step, &(parent, child)) in order.iter().enumerate() {
            bins[child] = backtracks[step][bins[parent]] as usize;
        }
    }

    // Canonical product-form score: unaries in joint order, then indicators
    // in edge order. Recomputed from the assignment so it is directly
    // comparable with exhaustive enumeration.
    let score = assignment_score(graph, &centers, unaries, priors, &bins);
    let pose = Pose3D::new((0..m).map(|j| centers[j][bins[j]]).collect());
    Ok(PsmSolution {
        pose,
        bins,
        score,
        infeasible,
    })
}

/// Product-form score of an explicit assignment.
pub(crate) fn assignment_score(
    graph: &BodyGraph,
    centers: &[Vec<Vec3>],
    unaries: &[Vec<f64>],
    priors: &LimbPriors,
    bins: &[usize],
) -> f64 {
    let mut score = 1.0f64;
    for (j, u) in unaries.iter().enumerate() {
        score *= u[bins[j]];
    }
    for (e, &(a, b)) in graph.edges().iter().enumerate() {
        if !pairwise_potential(
            &centers[a][bins[a]],
            &centers[b][bins[b]],
            priors.length(e),
            priors.epsilon(),
        ) {
            score = 0.0;
        }
    }
    score
}
