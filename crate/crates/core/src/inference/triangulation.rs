//! Triangulation-based reconstruction: the root-joint bootstrap used by the
//! grid search, and the unstructured per-joint baseline.

use super::{InferenceError, Pose3D};
use crate::geometry::{triangulate, CameraParams, GeometryError};
use crate::heatmap::HeatmapSet;
use crate::{Vec2, Vec3};

/// Triangulates the root joint from its per-view heatmap peaks. Views whose
/// root map is degenerate (uniform) are excluded; at least two usable views
/// are required.
pub fn triangulate_root(
    set: &HeatmapSet,
    cameras: &[CameraParams],
    root_joint: usize,
) -> Result<Vec3, InferenceError> {
    let observations = usable_peaks(set, cameras, root_joint);
    if observations.len() < 2 {
        return Err(InferenceError::InsufficientViews {
            required: 2,
            actual: observations.len(),
        });
    }
    let t = triangulate(&observations).map_err(InferenceError::Geometry)?;
    Ok(t.point)
}

/// Per-joint peak triangulation with no structural constraints.
///
/// Joints that cannot be triangulated (fewer than two usable views, or an
/// ill-conditioned solve) are flagged with confidence 0 and placed at the
/// origin; all other joints carry the mean peak confidence of the views
/// used.
pub fn triangulate_pose(
    set: &HeatmapSet,
    cameras: &[CameraParams],
) -> Result<Pose3D, InferenceError> {
    if cameras.len() < 2 {
        return Err(InferenceError::InsufficientViews {
            required: 2,
            actual: cameras.len(),
        });
    }
    let m = set.num_joints();
    let mut joints = Vec::with_capacity(m);
    let mut confidence = Vec::with_capacity(m);
    for joint in 0..m {
        let observations = usable_peaks(set, cameras, joint);
        if observations.len() < 2 {
            joints.push(Vec3::zeros());
            confidence.push(0.0);
            continue;
        }
        match triangulate(&observations) {
            Ok(t) => {
                joints.push(t.point);
                confidence.push(peak_confidence(set, cameras, joint));
            }
            Err(GeometryError::IllConditioned(_)) => {
                joints.push(Vec3::zeros());
                confidence.push(0.0);
            }
            Err(e) => return Err(InferenceError::Geometry(e)),
        }
    }
    Ok(Pose3D {
        joints,
        confidence: Some(confidence),
    })
}

fn usable_peaks<'a>(
    set: &HeatmapSet,
    cameras: &'a [CameraParams],
    joint: usize,
) -> Vec<(&'a CameraParams, Vec2)> {
    cameras
        .iter()
        .enumerate()
        .filter_map(|(view, cam)| {
            let peak = set.get(view, joint).argmax_location();
            if peak.degenerate {
                None
            } else {
                Some((cam, peak.pixel))
            }
        })
        .collect()
}

fn peak_confidence(set: &HeatmapSet, cameras: &[CameraParams], joint: usize) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for view in 0..cameras.len() {
        let peak = set.get(view, joint).argmax_location();
        if !peak.degenerate {
            sum += peak.confidence;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::{BodyGraph, LimbPriors};
    use crate::synth::{generate_rig, render_views, sample_pose, NoiseModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(
        num_cams: usize,
        seed: u64,
    ) -> (
        HeatmapSet,
        crate::synth::SceneTruth,
        Vec<CameraParams>,
        BodyGraph,
    ) {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let target = Vec3::new(0.0, 0.0, 1000.0);
        // Subsets of a 4-camera ring, so a 2-camera scene is a 90-degree
        // stereo pair rather than a depth-degenerate anti-parallel one.
        let mut rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        rig.truncate(num_cams.max(2));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose = sample_pose(&graph, &priors, target, &mut rng);
        let (set, truth) = render_views(
            &pose,
            &rig,
            graph.joint_names(),
            8.0,
            4.0,
            &NoiseModel::default(),
            seed ^ 0xdead,
        );
        (set, truth, rig, graph)
    }

    /// Worst-case position error induced by quantizing peaks to heatmap
    /// cells: one cell (stride px) back-projected at the joint's depth.
    fn cell_quantization_bound(
        cameras: &[CameraParams],
        point: &Vec3,
        stride: f64,
        focal: f64,
    ) -> f64 {
        let mean_depth = cameras
            .iter()
            .map(|c| c.depth(point))
            .sum::<f64>()
            / cameras.len() as f64;
        stride * mean_depth / focal
    }

    #[test]
    fn root_triangulation_is_within_cell_bound() {
        let (set, truth, rig, graph) = scene(4, 5);
        let root = graph.root();
        let estimate = triangulate_root(&set, &rig, root).unwrap();
        let bound =
            cell_quantization_bound(&rig, &truth.pose.joints[root], 4.0, 400.0);
        let err = (estimate - truth.pose.joints[root]).norm();
        assert!(err < bound, "error {err:.2} mm vs bound {bound:.2} mm");
    }

    #[test]
    fn root_triangulation_requires_two_usable_views() {
        let (mut set, _, rig, graph) = scene(2, 6);
        let root = graph.root();
        set.get_mut(0, root).values_mut().fill(0.0);
        assert!(matches!(
            triangulate_root(&set, &rig, root),
            Err(InferenceError::InsufficientViews { .. })
        ));
    }

    #[test]
    fn third_view_does_not_hurt_noiseless_root() {
        let (set4, truth, rig4, graph) = scene(4, 7);
        let root = graph.root();
        // Two-view estimate from views {0, 1} only.
        let sub_set = {
            let stacks: Vec<Vec<crate::heatmap::Heatmap>> = (0..2)
                .map(|v| {
                    (0..graph.num_joints())
                        .map(|j| set4.get(v, j).clone())
                        .collect()
                })
                .collect();
            HeatmapSet::new(
                vec![rig4[0].id().to_string(), rig4[1].id().to_string()],
                stacks,
            )
            .unwrap()
        };
        let two = triangulate_root(&sub_set, &rig4[..2], root).unwrap();
        let sub_set3 = {
            let stacks: Vec<Vec<crate::heatmap::Heatmap>> = (0..3)
                .map(|v| {
                    (0..graph.num_joints())
                        .map(|j| set4.get(v, j).clone())
                        .collect()
                })
                .collect();
            HeatmapSet::new(
                rig4[..3].iter().map(|c| c.id().to_string()).collect(),
                stacks,
            )
            .unwrap()
        };
        let three = triangulate_root(&sub_set3, &rig4[..3], root).unwrap();
        let err2 = (two - truth.pose.joints[root]).norm();
        let err3 = (three - truth.pose.joints[root]).norm();
        // Peaks are cell-quantized, so allow the quantization bound; on
        // noiseless data the extra consistent view must not add error
        // beyond it.
        let bound = cell_quantization_bound(&rig4, &truth.pose.joints[root], 4.0, 400.0);
        assert!(err3 <= err2 + 1e-6 || err3 < bound);
    }

    #[test]
    fn pose_triangulation_is_within_cell_bound() {
        let (set, truth, rig, graph) = scene(4, 9);
        let pose = triangulate_pose(&set, &rig).unwrap();
        for j in 0..graph.num_joints() {
            let bound = cell_quantization_bound(&rig, &truth.pose.joints[j], 4.0, 400.0);
            let err = (pose.joints[j] - truth.pose.joints[j]).norm();
            assert!(err < bound, "joint {j}: {err:.2} mm vs bound {bound:.2} mm");
        }
    }

    #[test]
    fn two_view_minimal_case_works() {
        let (set, truth, rig, graph) = scene(2, 11);
        let pose = triangulate_pose(&set, &rig).unwrap();
        for j in 0..graph.num_joints() {
            let err = (pose.joints[j] - truth.pose.joints[j]).norm();
            assert!(err < 60.0, "joint {j}: {err:.2} mm");
        }
    }

    #[test]
    fn dropped_joint_is_flagged_with_zero_confidence() {
        let (mut set, _, rig, graph) = scene(2, 13);
        let wrist = graph.joint_index("right_wrist").unwrap();
        set.get_mut(0, wrist).values_mut().fill(0.0);
        let pose = triangulate_pose(&set, &rig).unwrap();
        let conf = pose.confidence.as_ref().unwrap();
        assert_eq!(conf[wrist], 0.0);
        assert_eq!(pose.joints[wrist], Vec3::zeros());
        // Other joints remain usable.
        assert!(conf[graph.root()] > 0.0);
    }
}
