//! Multi-view 3D human pose reconstruction.
//!
//! The crate reconstructs absolute 3D body poses from calibrated multi-camera
//! 2D joint heatmaps. It provides:
//!
//! - [`geometry`]: pinhole camera algebra — projection, ray back-projection,
//!   fundamental matrices, epipolar lines, and linear (DLT) triangulation;
//! - [`heatmap`]: per-joint 2D confidence grids with Gaussian rendering,
//!   bilinear sampling, peak extraction, and a binary dump format;
//! - [`fusion`]: cross-view heatmap fusion along epipolar lines, with
//!   geometric Gaussian kernels, line-sum/line-max baselines, and a ridge
//!   least-squares weight-fitting variant;
//! - [`inference`]: pictorial-structure inference over a discrete 3D grid
//!   (exact max-product dynamic programming on the body tree) and its
//!   recursive coarse-to-fine refinement, plus direct triangulation;
//! - [`synth`]: a synthetic ground-truth generator — articulated poses,
//!   circular camera rigs, rendered multi-view heatmaps with controllable
//!   noise and occlusion;
//! - [`harness`]: MPJPE/JDR metrics and the benchmark orchestration used by
//!   the CLI.
//!
//! Heavy inner loops (unary evaluation, tree DP, fusion) run on rayon when
//! the default `parallel` feature is enabled and fall back to sequential
//! execution without it. Results are bit-identical in both modes and across
//! thread counts: every parallel loop writes independent output elements and
//! every reduction uses a fixed summation order.

pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod heatmap;
pub mod inference;
pub(crate) mod par;
pub mod synth;

/// Name of the active execution backend, for labeling benchmark results:
/// `"rayon"` with the `parallel` feature (the default), `"seq"` without.
pub fn execution_mode() -> &'static str {
    #[cfg(feature = "parallel")]
    {
        "rayon"
    }
    #[cfg(not(feature = "parallel"))]
    {
        "seq"
    }
}

/// Scalar type used throughout the crate for world-space math.
pub type Real = f64;
/// 2D pixel position (x = column direction, y = row direction).
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3D world position or direction, millimetres.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix (intrinsics, rotations, fundamental matrices).
pub type Mat3 = nalgebra::Matrix3<f64>;
