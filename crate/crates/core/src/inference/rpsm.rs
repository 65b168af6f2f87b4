//! Recursive coarse-to-fine pose refinement.
//!
//! Stage 0 runs plain pictorial-structure inference over one shared grid
//! centered at the triangulated root joint. Every following stage builds a
//! small per-joint grid around each joint's previous estimate — the cube
//! size matching one bin of the previous stage — and re-runs the joint DP,
//! with pairwise terms evaluated on the fly across the per-joint grids.

use super::{
    psm_infer, triangulate_root, unary_potentials, BodyGraph, GridSpec, InferenceError,
    LimbPriors, Pose3D, RefinementSchedule,
};
use crate::geometry::CameraParams;
use crate::heatmap::HeatmapSet;
use std::time::Instant;

/// One stage of the refinement: the pose after running the DP, its score,
/// the infeasibility flag, and the stage's wall-clock cost.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub pose: Pose3D,
    pub score: f64,
    pub infeasible: bool,
    pub wall_ms: f64,
}

/// Final pose plus the full stage history (entry 0 is the coarse stage).
#[derive(Debug, Clone)]
pub struct RpsmResult {
    pub pose: Pose3D,
    pub stages: Vec<StageOutcome>,
}

impl RpsmResult {
    /// Pose after `t` refinement stages (`t = 0` is the coarse stage). The
    /// recursion is prefix-stable, so this equals a run with `iterations = t`.
    pub fn pose_at_stage(&self, t: usize) -> &Pose3D {
        &self.stages[t].pose
    }
}

/// Runs the full recursive reconstruction.
///
/// With `schedule.iterations == 0` the result is exactly the single-grid
/// pictorial-structure solution.
pub fn rpsm_reconstruct(
    set: &HeatmapSet,
    cameras: &[CameraParams],
    graph: &BodyGraph,
    priors: &LimbPriors,
    schedule: &RefinementSchedule,
) -> Result<RpsmResult, InferenceError> {
    let m = graph.num_joints();
    let root_center = triangulate_root(set, cameras, graph.root())?;

    let mut stages = Vec::with_capacity(schedule.iterations + 1);

    let start = Instant::now();
    let coarse = GridSpec::new(
        root_center,
        schedule.stage_edge_length(0),
        schedule.initial_bins,
    );
    let grids: Vec<GridSpec> = vec![coarse; m];
    let unaries = unary_potentials(&grids, set, cameras);
    let sol = psm_infer(graph, &grids, &unaries, priors)?;
    stages.push(StageOutcome {
        pose: sol.pose,
        score: sol.score,
        infeasible: sol.infeasible,
        wall_ms: start.elapsed().as_secs_f64() * 1000.0,
    });

    for t in 1..=schedule.iterations {
        let start = Instant::now();
        let prev = &stages[t - 1].pose;
        let edge = schedule.stage_edge_length(t);
        let grids: Vec<GridSpec> = prev
            .joints
            .iter()
            .map(|&center| GridSpec::new(center, edge, schedule.refine_bins))
            .collect();
        let unaries = unary_potentials(&grids, set, cameras);
        let sol = psm_infer(graph, &grids, &unaries, priors)?;
        stages.push(StageOutcome {
            pose: sol.pose,
            score: sol.score,
            infeasible: sol.infeasible,
            wall_ms: start.elapsed().as_secs_f64() * 1000.0,
        });
    }

    Ok(RpsmResult {
        pose: stages.last().expect("stage 0 always present").pose.clone(),
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::triangulate_pose;
    use crate::synth::{generate_rig, render_views, sample_pose, NoiseModel};
    use crate::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn noiseless_scene() -> (
        crate::heatmap::HeatmapSet,
        crate::synth::SceneTruth,
        Vec<crate::geometry::CameraParams>,
        BodyGraph,
        LimbPriors,
    ) {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let pose = sample_pose(&graph, &priors, target, &mut rng);
        let (set, truth) = render_views(
            &pose,
            &rig,
            graph.joint_names(),
            8.0,
            4.0,
            &NoiseModel::default(),
            17,
        );
        (set, truth, rig, graph, priors)
    }

    fn mean_error(pose: &Pose3D, truth: &Pose3D) -> f64 {
        pose.joints
            .iter()
            .zip(truth.joints.iter())
            .map(|(a, b)| (a - b).norm())
            .sum::<f64>()
            / pose.joints.len() as f64
    }

    #[test]
    fn zero_iterations_equals_plain_psm() {
        let (set, _, rig, graph, priors) = noiseless_scene();
        let schedule = RefinementSchedule {
            iterations: 0,
            ..RefinementSchedule::default()
        };
        let rpsm = rpsm_reconstruct(&set, &rig, &graph, &priors, &schedule).unwrap();
        assert_eq!(rpsm.stages.len(), 1);

        // Rebuild the coarse stage by hand; poses must agree exactly.
        let root = triangulate_root(&set, &rig, graph.root()).unwrap();
        let grids = vec![GridSpec::new(root, 2000.0, 16); graph.num_joints()];
        let unaries = unary_potentials(&grids, &set, &rig);
        let psm = psm_infer(&graph, &grids, &unaries, &priors).unwrap();
        assert_eq!(rpsm.pose.joints, psm.pose.joints);
        assert_eq!(rpsm.stages[0].score, psm.score);
    }

    #[test]
    fn refinement_halves_noiseless_error_and_converges() {
        let (set, truth, rig, graph, priors) = noiseless_scene();
        let schedule = RefinementSchedule::default();
        let rpsm = rpsm_reconstruct(&set, &rig, &graph, &priors, &schedule).unwrap();
        let coarse = mean_error(rpsm.pose_at_stage(0), &truth.pose);
        let fine = mean_error(&rpsm.pose, &truth.pose);
        assert!(
            fine < 0.5 * coarse,
            "refinement only improved {coarse:.2} -> {fine:.2} mm"
        );
        // Noiseless input: the final error sits far below one coarse bin.
        assert!(fine < 20.0, "final error {fine:.2} mm");
    }

    #[test]
    fn stage_grids_are_centered_on_previous_estimates() {
        let (set, _, rig, graph, priors) = noiseless_scene();
        let schedule = RefinementSchedule {
            iterations: 3,
            ..RefinementSchedule::default()
        };
        let rpsm = rpsm_reconstruct(&set, &rig, &graph, &priors, &schedule).unwrap();
        // Containment: each stage moves every joint by at most half the
        // stage-cube diagonal from the previous estimate.
        for t in 1..rpsm.stages.len() {
            let edge = schedule.stage_edge_length(t);
            let bound = edge * 3f64.sqrt() / 2.0 + 1e-9;
            for (a, b) in rpsm.stages[t - 1]
                .pose
                .joints
                .iter()
                .zip(rpsm.stages[t].pose.joints.iter())
            {
                assert!((a - b).norm() <= bound);
            }
        }
    }

    #[test]
    fn corrupted_peak_degrades_triangulation_more_than_rpsm() {
        let (set, truth, rig, graph, priors) = noiseless_scene();
        let wrist = graph.joint_index("left_wrist").unwrap();

        let tri_clean = triangulate_pose(&set, &rig).unwrap();
        let schedule = RefinementSchedule {
            iterations: 6,
            ..RefinementSchedule::default()
        };
        let rpsm_clean = rpsm_reconstruct(&set, &rig, &graph, &priors, &schedule).unwrap();

        // Corrupt one view's wrist map with a dominant wrong peak.
        let mut corrupted = set.clone();
        let map = corrupted.get_mut(0, wrist);
        map.add_gaussian(crate::Vec2::new(30.0, 30.0), 8.0, 5.0);

        let tri_bad = triangulate_pose(&corrupted, &rig).unwrap();
        let rpsm_bad = rpsm_reconstruct(&corrupted, &rig, &graph, &priors, &schedule).unwrap();

        let err = |p: &Pose3D| (p.joints[wrist] - truth.pose.joints[wrist]).norm();
        let tri_growth = err(&tri_bad) - err(&tri_clean);
        let rpsm_growth = err(&rpsm_bad.pose) - err(&rpsm_clean.pose);
        assert!(
            tri_growth > 50.0,
            "corruption should visibly damage triangulation (grew {tri_growth:.1} mm)"
        );
        assert!(
            rpsm_growth < tri_growth,
            "structured inference should degrade less ({rpsm_growth:.1} vs {tri_growth:.1} mm)"
        );
    }
}
