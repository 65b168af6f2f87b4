//! Pictorial-structure inference over a discrete 3D state space.
//!
//! A body is a tree of joints. Stage 0 scores every joint over one shared
//! `N³` grid centered at the triangulated root joint and finds the exact MAP
//! assignment by max-product dynamic programming on the tree. Refinement
//! stages re-discretize a shrinking cube around each joint's previous
//! estimate and re-run the same DP jointly over all joints.

mod io;
mod psm;
mod rpsm;
mod triangulation;

pub use io::{read_body_config, write_body_config, read_pose_file, write_pose_file, PoseFileError};
pub use psm::{pairwise_potential, psm_infer, unary_potentials, PsmSolution};
pub use rpsm::{rpsm_reconstruct, RpsmResult, StageOutcome};
pub use triangulation::{triangulate_pose, triangulate_root};

use crate::Vec3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("body graph is not a tree: {0}")]
    InvalidGraph(String),
    #[error("expected {expected} {what}, got {actual}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("need at least {required} usable views, got {actual}")]
    InsufficientViews { required: usize, actual: usize },
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Tree-structured body model: joint names plus parent-child edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyGraph {
    joint_names: Vec<String>,
    root: usize,
    /// Edges as (parent, child), in a fixed order.
    edges: Vec<(usize, usize)>,
}

impl BodyGraph {
    /// Builds a graph, validating that the edges form a tree spanning all
    /// joints and that `root` is one of them.
    pub fn new(
        joint_names: Vec<String>,
        root: usize,
        edges: Vec<(usize, usize)>,
    ) -> Result<Self, InferenceError> {
        let m = joint_names.len();
        if m == 0 {
            return Err(InferenceError::InvalidGraph("no joints".into()));
        }
        if root >= m {
            return Err(InferenceError::InvalidGraph(format!(
                "root index {root} out of range for {m} joints"
            )));
        }
        if edges.len() != m - 1 {
            return Err(InferenceError::InvalidGraph(format!(
                "{} edges for {} joints (need M-1)",
                edges.len(),
                m
            )));
        }
        // Connectivity check via union-find; acyclicity follows from M-1 edges.
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &edges {
            if a >= m || b >= m {
                return Err(InferenceError::InvalidGraph(format!(
                    "edge ({a}, {b}) out of range"
                )));
            }
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(InferenceError::InvalidGraph(format!(
                    "edge ({a}, {b}) closes a cycle"
                )));
            }
            parent[ra] = rb;
        }
        Ok(Self {
            joint_names,
            root,
            edges,
        })
    }

    /// The 17-joint human skeleton used by default: pelvis root, spine-neck
    /// column, head with a head-top marker, and symmetric arm/leg chains.
    pub fn default_human() -> Self {
        let names = [
            "pelvis",
            "left_hip",
            "right_hip",
            "spine",
            "neck",
            "head",
            "head_top",
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_knee",
            "right_knee",
            "left_ankle",
            "right_ankle",
        ];
        let idx = |n: &str| names.iter().position(|&x| x == n).unwrap();
        // (parent, child) pairs ordered by child index, the canonical order
        // the body-config file format round-trips.
        let edges = [
            ("pelvis", "left_hip"),
            ("pelvis", "right_hip"),
            ("pelvis", "spine"),
            ("spine", "neck"),
            ("neck", "head"),
            ("head", "head_top"),
            ("neck", "left_shoulder"),
            ("neck", "right_shoulder"),
            ("left_shoulder", "left_elbow"),
            ("right_shoulder", "right_elbow"),
            ("left_elbow", "left_wrist"),
            ("right_elbow", "right_wrist"),
            ("left_hip", "left_knee"),
            ("right_hip", "right_knee"),
            ("left_knee", "left_ankle"),
            ("right_knee", "right_ankle"),
        ]
        .iter()
        .map(|&(a, b)| (idx(a), idx(b)))
        .collect();
        Self::new(names.iter().map(|s| s.to_string()).collect(), 0, edges)
            .expect("default skeleton is a valid tree")
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges reordered so each child appears after its parent when walking
    /// from the root; used by the DP message schedule and the pose sampler.
    pub(crate) fn edges_root_first(&self) -> Vec<(usize, usize)> {
        let m = self.num_joints();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); m];
        for (e, &(a, b)) in self.edges.iter().enumerate() {
            adj[a].push((b, e));
            adj[b].push((a, e));
        }
        let mut visited = vec![false; m];
        let mut order = Vec::with_capacity(self.edges.len());
        let mut stack = vec![self.root];
        visited[self.root] = true;
        while let Some(node) = stack.pop() {
            for &(next, _) in adj[node].iter().rev() {
                if !visited[next] {
                    visited[next] = true;
                    order.push((node, next));
                    stack.push(next);
                }
            }
        }
        order
    }
}

/// Per-edge mean limb lengths and the shared tolerance band.
#[derive(Debug, Clone, PartialEq)]
pub struct LimbPriors {
    /// Mean length per edge of the owning graph, mm.
    lengths: Vec<f64>,
    /// Half-width of the acceptance interval, mm.
    epsilon: f64,
}

/// Default limb-length tolerance (mm).
pub const DEFAULT_EPSILON_MM: f64 = 150.0;

impl LimbPriors {
    pub fn new(lengths: Vec<f64>, epsilon: f64) -> Result<Self, InferenceError> {
        if lengths.iter().any(|&l| l <= 0.0) {
            return Err(InferenceError::InvalidGraph(
                "limb prior lengths must be positive".into(),
            ));
        }
        if epsilon < 0.0 {
            return Err(InferenceError::InvalidGraph(
                "epsilon must be non-negative".into(),
            ));
        }
        Ok(Self { lengths, epsilon })
    }

    /// Mean lengths matching [`BodyGraph::default_human`]'s edge order, sized
    /// for the synthetic rig's field of view.
    pub fn default_human() -> Self {
        let lengths = vec![
            130.0, // pelvis - left_hip
            130.0, // pelvis - right_hip
            240.0, // pelvis - spine
            240.0, // spine - neck
            110.0, // neck - head
            110.0, // head - head_top
            150.0, // neck - left_shoulder
            150.0, // neck - right_shoulder
            250.0, // left_shoulder - left_elbow
            250.0, // right_shoulder - right_elbow
            220.0, // left_elbow - left_wrist
            220.0, // right_elbow - right_wrist
            350.0, // left_hip - left_knee
            350.0, // right_hip - right_knee
            330.0, // left_knee - left_ankle
            330.0, // right_knee - right_ankle
        ];
        Self::new(lengths, DEFAULT_EPSILON_MM).unwrap()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn length(&self, edge: usize) -> f64 {
        self.lengths[edge]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }
}

/// Discrete cubic state space: `bins³` cells spanning an axis-aligned cube.
///
/// Bin `(iz, iy, ix)` has linear index `(iz * N + iy) * N + ix` and center
/// `center - s/2 + (i + 0.5) * s/N` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    center: Vec3,
    edge_length: f64,
    bins: usize,
}

impl GridSpec {
    pub fn new(center: Vec3, edge_length: f64, bins: usize) -> Self {
        assert!(edge_length > 0.0, "edge length must be positive");
        assert!(bins >= 2, "need at least 2 bins per axis");
        Self {
            center,
            edge_length,
            bins,
        }
    }

    pub fn center(&self) -> Vec3 {
        self.center
    }

    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    pub fn bins_per_axis(&self) -> usize {
        self.bins
    }

    pub fn num_bins(&self) -> usize {
        self.bins * self.bins * self.bins
    }

    /// Distance between adjacent bin centers along one axis.
    pub fn spacing(&self) -> f64 {
        self.edge_length / self.bins as f64
    }

    /// Worst-case per-axis distance from a point in the cube to the nearest
    /// bin center: `s / (2N)`.
    pub fn max_quantization_error(&self) -> f64 {
        self.edge_length / (2.0 * self.bins as f64)
    }

    /// World position of a bin center by linear index.
    pub fn bin_center(&self, index: usize) -> Vec3 {
        let n = self.bins;
        let ix = index % n;
        let iy = (index / n) % n;
        let iz = index / (n * n);
        let step = self.edge_length / n as f64;
        let base = self.center - Vec3::repeat(self.edge_length / 2.0);
        Vec3::new(
            base.x + (ix as f64 + 0.5) * step,
            base.y + (iy as f64 + 0.5) * step,
            base.z + (iz as f64 + 0.5) * step,
        )
    }

    /// All bin centers in linear-index order.
    pub fn bin_centers(&self) -> Vec<Vec3> {
        (0..self.num_bins()).map(|i| self.bin_center(i)).collect()
    }
}

/// Coarse-to-fine schedule: one shared grid at stage 0, then per-joint
/// `refine_bins³` grids whose edge length halves every stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementSchedule {
    /// Stage-0 cube edge length, mm.
    pub initial_edge_mm: f64,
    /// Stage-0 bins per axis.
    pub initial_bins: usize,
    /// Bins per axis of the per-joint refinement grids.
    pub refine_bins: usize,
    /// Number of refinement stages after stage 0.
    pub iterations: usize,
}

impl Default for RefinementSchedule {
    fn default() -> Self {
        Self {
            initial_edge_mm: 2000.0,
            initial_bins: 16,
            refine_bins: 2,
            iterations: 10,
        }
    }
}

impl RefinementSchedule {
    /// Edge length of the stage-`t` grids: the stage-0 cube for `t = 0`,
    /// then `s0 / (N0 * Nr^(t-1))` — each stage's cube matches one bin of
    /// the previous stage.
    pub fn stage_edge_length(&self, stage: usize) -> f64 {
        if stage == 0 {
            self.initial_edge_mm
        } else {
            self.initial_edge_mm
                / (self.initial_bins as f64 * (self.refine_bins as f64).powi(stage as i32 - 1))
        }
    }
}

/// A reconstructed (or ground-truth) 3D pose: one world-space position per
/// joint, with optional per-joint confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints: Vec<Vec3>,
    pub confidence: Option<Vec<f64>>,
}

impl Pose3D {
    pub fn new(joints: Vec<Vec3>) -> Self {
        Self {
            joints,
            confidence: None,
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_human_has_17_joints_16_edges() {
        let g = BodyGraph::default_human();
        assert_eq!(g.num_joints(), 17);
        assert_eq!(g.edges().len(), 16);
        assert_eq!(g.joint_names()[g.root()], "pelvis");
    }

    #[test]
    fn cycle_is_rejected() {
        let names = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        let edges = vec![(0, 1), (1, 2), (2, 0)];
        assert!(matches!(
            BodyGraph::new(names, 0, edges),
            Err(InferenceError::InvalidGraph(_))
        ));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let names = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        // 3 edges but one is a duplicate pair, leaving d unreached.
        let edges = vec![(0, 1), (1, 2), (0, 2)];
        assert!(BodyGraph::new(names, 0, edges).is_err());
    }

    #[test]
    fn edges_root_first_orders_parents_before_children() {
        let g = BodyGraph::default_human();
        let order = g.edges_root_first();
        assert_eq!(order.len(), 16);
        let mut seen = vec![false; g.num_joints()];
        seen[g.root()] = true;
        for (parent, child) in order {
            assert!(seen[parent], "parent {parent} not yet visited");
            assert!(!seen[child]);
            seen[child] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn grid_16_cubed() {
        let g = GridSpec::new(Vec3::zeros(), 2000.0, 16);
        assert_eq!(g.num_bins(), 4096);
        assert_eq!(g.spacing(), 125.0);
    }

    #[test]
    fn grid_quantization_error_at_32_bins() {
        let g = GridSpec::new(Vec3::zeros(), 2000.0, 32);
        assert_eq!(g.max_quantization_error(), 31.25);
    }

    #[test]
    fn any_point_in_cube_is_near_some_bin_center() {
        use rand::{Rng, SeedableRng};
        let g = GridSpec::new(Vec3::new(10.0, -20.0, 30.0), 500.0, 5);
        let bound = g.edge_length() * 3f64.sqrt() / (2.0 * g.bins_per_axis() as f64);
        let centers = g.bin_centers();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = g.center()
                + Vec3::new(
                    rng.random_range(-250.0..250.0),
                    rng.random_range(-250.0..250.0),
                    rng.random_range(-250.0..250.0),
                );
            let min_d = centers
                .iter()
                .map(|c| (c - p).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(min_d <= bound + 1e-9);
        }
    }

    #[test]
    fn bin_center_linear_index_order() {
        let g = GridSpec::new(Vec3::zeros(), 2.0, 2);
        // Index 0 is (ix=0, iy=0, iz=0) -> (-0.5, -0.5, -0.5); x varies fastest.
        assert_eq!(g.bin_center(0), Vec3::new(-0.5, -0.5, -0.5));
        assert_eq!(g.bin_center(1), Vec3::new(0.5, -0.5, -0.5));
        assert_eq!(g.bin_center(2), Vec3::new(-0.5, 0.5, -0.5));
        assert_eq!(g.bin_center(4), Vec3::new(-0.5, -0.5, 0.5));
    }

    #[test]
    fn schedule_edge_lengths() {
        let s = RefinementSchedule::default();
        assert_eq!(s.stage_edge_length(0), 2000.0);
        assert_eq!(s.stage_edge_length(1), 125.0);
        assert_eq!(s.stage_edge_length(2), 62.5);
        assert_eq!(s.stage_edge_length(10), 2000.0 / (16.0 * 512.0));
        // Recurrence: s1 = s0/16 and s_t = s_{t-1}/2 afterwards, exactly.
        assert_eq!(s.stage_edge_length(1), s.stage_edge_length(0) / 16.0);
        for t in 2..=10 {
            assert_eq!(s.stage_edge_length(t), s.stage_edge_length(t - 1) / 2.0);
        }
    }
}
