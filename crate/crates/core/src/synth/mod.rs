//! Synthetic ground-truth generator.
//!
//! Produces articulated poses that satisfy the limb priors by construction,
//! circular camera rigs looking at a common target, and rendered multi-view
//! heatmaps with controllable pixel jitter, peak dropout (occlusion) and
//! distractor peaks. Everything is a pure function of a seed: the same
//! `(seed, config)` yields bit-identical output on any thread count, because
//! per-frame and per-(view, joint) RNG streams are derived by a fixed
//! SplitMix64 mix rather than shared.

mod corpus;

pub use corpus::{
    generate_corpus, generate_frame, read_corpus, write_corpus, Corpus, CorpusError, CorpusSpec,
    FrameData,
};

use crate::geometry::CameraParams;
use crate::heatmap::{Heatmap, HeatmapSet};
use crate::inference::{BodyGraph, LimbPriors, Pose3D};
use crate::{Mat3, Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Noise applied when rendering a view of a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Gaussian jitter of the rendered peak center, px.
    pub jitter_sigma_px: f64,
    /// Probability that a joint's map in a view is zeroed (occlusion).
    pub peak_drop: f64,
    /// Probability of adding a spurious Gaussian peak at a random location.
    pub distractor_prob: f64,
    /// Amplitude of the spurious peak.
    pub distractor_amplitude: f64,
    /// Per-joint-name overrides of `peak_drop`.
    pub peak_drop_per_joint: BTreeMap<String, f64>,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            jitter_sigma_px: 0.0,
            peak_drop: 0.0,
            distractor_prob: 0.0,
            distractor_amplitude: 1.0,
            peak_drop_per_joint: BTreeMap::new(),
        }
    }
}

impl NoiseModel {
    fn drop_probability(&self, joint_name: &str) -> f64 {
        *self
            .peak_drop_per_joint
            .get(joint_name)
            .unwrap_or(&self.peak_drop)
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = std::iter::once(("peak_drop", self.peak_drop))
            .chain(std::iter::once(("distractor_prob", self.distractor_prob)))
            .chain(
                self.peak_drop_per_joint
                    .iter()
                    .map(|(k, &v)| (k.as_str(), v)),
            );
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("probability `{name}` = {p} outside [0, 1]"));
            }
        }
        if self.jitter_sigma_px < 0.0 {
            return Err("jitter sigma must be non-negative".into());
        }
        Ok(())
    }
}

/// Ground truth recorded alongside a rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub pose: Pose3D,
    /// Unjittered projections, view-major (`view * M + joint`); `None` when
    /// the joint sits behind the camera.
    pub projections: Vec<Option<Vec2>>,
    /// Peak-drop flags, view-major.
    pub occluded: Vec<bool>,
}

impl SceneTruth {
    pub fn projection(&self, view: usize, joint: usize, num_joints: usize) -> Option<Vec2> {
        self.projections[view * num_joints + joint]
    }

    pub fn is_occluded(&self, view: usize, joint: usize, num_joints: usize) -> bool {
        self.occluded[view * num_joints + joint]
    }
}

/// SplitMix64 step; the documented, stable seed mixer for derived streams.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Cameras equally spaced on a horizontal circle of `radius` around
/// `target`, all looking at it, sharing focal length and image size. The
/// principal point is the exact image center `((w-1)/2, (h-1)/2)`.
pub fn generate_rig(
    num_cameras: usize,
    radius_mm: f64,
    target: Vec3,
    image_dims: (u32, u32),
    focal_px: f64,
) -> Vec<CameraParams> {
    assert!(num_cameras >= 2, "need at least 2 cameras");
    assert!(radius_mm > 0.0, "radius must be positive");
    let (w, h) = image_dims;
    let intrinsics = Mat3::new(
        focal_px,
        0.0,
        (w - 1) as f64 / 2.0,
        0.0,
        focal_px,
        (h - 1) as f64 / 2.0,
        0.0,
        0.0,
        1.0,
    );
    (0..num_cameras)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / num_cameras as f64;
            let position = target + radius_mm * Vec3::new(theta.cos(), theta.sin(), 0.0);
            let forward = (target - position).normalize();
            let up = Vec3::new(0.0, 0.0, 1.0);
            let right = forward.cross(&up).normalize();
            let down = forward.cross(&right).normalize();
            let rotation = Mat3::from_rows(&[
                right.transpose(),
                down.transpose(),
                forward.transpose(),
            ]);
            let translation = -(rotation * position);
            CameraParams::new(format!("cam{k}"), intrinsics, rotation, translation, image_dims)
                .expect("look-at construction yields a valid camera")
        })
        .collect()
}

/// Preferred growth direction for a named joint of the default skeleton;
/// unknown names fall back to a uniform random direction.
fn preferred_direction(joint_name: &str) -> Option<Vec3> {
    let v = match joint_name {
        "left_hip" => Vec3::new(1.0, 0.0, -0.2),
        "right_hip" => Vec3::new(-1.0, 0.0, -0.2),
        "spine" | "neck" | "head" | "head_top" => Vec3::new(0.0, 0.0, 1.0),
        "left_shoulder" => Vec3::new(1.0, 0.0, 0.1),
        "right_shoulder" => Vec3::new(-1.0, 0.0, 0.1),
        "left_elbow" => Vec3::new(0.7, 0.1, -0.7),
        "right_elbow" => Vec3::new(-0.7, 0.1, -0.7),
        "left_wrist" => Vec3::new(0.5, 0.2, -0.8),
        "right_wrist" => Vec3::new(-0.5, 0.2, -0.8),
        "left_knee" => Vec3::new(0.1, 0.0, -1.0),
        "right_knee" => Vec3::new(-0.1, 0.0, -1.0),
        "left_ankle" | "right_ankle" => Vec3::new(0.0, 0.1, -1.0),
        _ => return None,
    };
    Some(v.normalize())
}

/// Half-angle of the sampling cone around the preferred limb direction.
const CONE_HALF_ANGLE_RAD: f64 = 0.7; // ~40 degrees

fn sample_unit_sphere(rng: &mut ChaCha8Rng) -> Vec3 {
    let z: f64 = 1.0 - 2.0 * rng.random::<f64>();
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn sample_cone(rng: &mut ChaCha8Rng, axis: &Vec3, half_angle: f64) -> Vec3 {
    let cos_min = half_angle.cos();
    let cos_theta = cos_min + (1.0 - cos_min) * rng.random::<f64>();
    let sin_theta = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let phi = 2.0 * std::f64::consts::PI * rng.random::<f64>();
    // Orthonormal frame around the axis.
    let helper = if axis.x.abs() < 0.9 {
        Vec3::new(1.0, 0.0, 0.0)
    } else {
        Vec3::new(0.0, 1.0, 0.0)
    };
    let u = axis.cross(&helper).normalize();
    let v = axis.cross(&u);
    (u * (sin_theta * phi.cos()) + v * (sin_theta * phi.sin()) + axis * cos_theta).normalize()
}

/// Samples a random articulated pose rooted near `center`.
///
/// Each child joint is placed at a distance drawn uniformly from
/// `[l - eps/2, l + eps/2]` along a direction sampled in a cone around the
/// skeleton's preferred direction, so every edge satisfies the limb prior by
/// construction.
pub fn sample_pose(
    graph: &BodyGraph,
    priors: &LimbPriors,
    center: Vec3,
    rng: &mut ChaCha8Rng,
) -> Pose3D {
    let m = graph.num_joints();
    let mut joints = vec![Vec3::zeros(); m];
    let root_jitter = 80.0;
    joints[graph.root()] = center
        + Vec3::new(
            root_jitter * (2.0 * rng.random::<f64>() - 1.0),
            root_jitter * (2.0 * rng.random::<f64>() - 1.0),
            root_jitter * (2.0 * rng.random::<f64>() - 1.0),
        );

    // Map the root-first traversal back to prior edge indices.
    let edge_index: BTreeMap<(usize, usize), usize> = graph
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(i, &(a, b))| [((a, b), i), ((b, a), i)])
        .collect();

    for (parent, child) in graph.edges_root_first() {
        let e = edge_index[&(parent, child)];
        let mean = priors.length(e);
        let eps = priors.epsilon();
        let dist = mean - eps / 2.0 + eps * rng.random::<f64>();
        let dir = match preferred_direction(&graph.joint_names()[child]) {
            Some(axis) => sample_cone(rng, &axis, CONE_HALF_ANGLE_RAD),
            None => sample_unit_sphere(rng),
        };
        joints[child] = joints[parent] + dir * dist;
    }
    Pose3D::new(joints)
}

/// Renders one frame: per (view, joint) the true projection is jittered,
/// drawn as a truncated Gaussian, then subjected to peak drop and distractor
/// insertion. [`SceneTruth`] keeps the unjittered projections and drop flags.
pub fn render_views(
    pose: &Pose3D,
    cameras: &[CameraParams],
    joint_names: &[String],
    sigma_px: f64,
    stride: f64,
    noise: &NoiseModel,
    seed: u64,
) -> (HeatmapSet, SceneTruth) {
    let m = pose.num_joints();
    assert_eq!(joint_names.len(), m);
    let mut projections = vec![None; cameras.len() * m];
    let mut occluded = vec![false; cameras.len() * m];

    let per_view: Vec<Vec<Heatmap>> = cameras
        .iter()
        .enumerate()
        .map(|(view, cam)| {
            let (w, h) = cam.image_dims();
            let dims = (h as usize / stride as usize, w as usize / stride as usize);
            (0..m)
                .map(|joint| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
                        mix_seed(seed, view as u64),
                        1000 + joint as u64,
                    ));
                    let normal = rand_distr::Normal::new(0.0f64, 1.0).unwrap();
                    let jx: f64 = rng.sample(normal);
                    let jy: f64 = rng.sample(normal);
                    let drop_draw: f64 = rng.random();
                    let distractor_draw: f64 = rng.random();

                    let mut map = Heatmap::zeros(dims, stride);
                    let projection = cam.project(&pose.joints[joint]).ok();
                    projections[view * m + joint] = projection;

                    let dropped = drop_draw < noise.drop_probability(&joint_names[joint]);
                    occluded[view * m + joint] = dropped || projection.is_none();
                    if !dropped {
                        if let Some(center) = projection {
                            let jittered = Vec2::new(
                                center.x + noise.jitter_sigma_px * jx,
                                center.y + noise.jitter_sigma_px * jy,
                            );
                            map.add_gaussian(jittered, sigma_px, 1.0);
                        }
                        if distractor_draw < noise.distractor_prob {
                            let loc = Vec2::new(
                                rng.random::<f64>() * (w - 1) as f64,
                                rng.random::<f64>() * (h - 1) as f64,
                            );
                            map.add_gaussian(loc, sigma_px, noise.distractor_amplitude);
                        }
                    }
                    map
                })
                .collect()
        })
        .collect();

    let set = HeatmapSet::new(
        cameras.iter().map(|c| c.id().to_string()).collect(),
        per_view,
    )
    .expect("uniform dims per view");
    let truth = SceneTruth {
        pose: pose.clone(),
        projections,
        occluded,
    };
    (set, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::pairwise_potential;
    use approx::assert_relative_eq;

    #[test]
    fn rig_target_projects_to_principal_point() {
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        for cam in &rig {
            let px = cam.project(&target).unwrap();
            assert!((px.x - 159.5).abs() < 1e-6);
            assert!((px.y - 159.5).abs() < 1e-6);
        }
    }

    #[test]
    fn rig_baselines_are_positive() {
        let rig = generate_rig(4, 3000.0, Vec3::zeros(), (320, 320), 400.0);
        for i in 0..rig.len() {
            for j in (i + 1)..rig.len() {
                assert!((rig[i].center() - rig[j].center()).norm() > 1.0);
            }
        }
    }

    #[test]
    fn opposing_cameras_look_anti_parallel() {
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        let d0 = (target - rig[0].center()).normalize();
        let d2 = (target - rig[2].center()).normalize();
        assert_relative_eq!(d0.dot(&d2), -1.0, epsilon = 1e-9);
    }

    #[test]
    fn sampled_pose_satisfies_all_limb_priors() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let pose = sample_pose(&graph, &priors, Vec3::new(0.0, 0.0, 1000.0), &mut rng);
            for (e, &(a, b)) in graph.edges().iter().enumerate() {
                assert!(pairwise_potential(
                    &pose.joints[a],
                    &pose.joints[b],
                    priors.length(e),
                    priors.epsilon()
                ));
            }
        }
    }

    #[test]
    fn same_seed_reproduces_pose() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let center = Vec3::new(0.0, 0.0, 1000.0);
        let a = sample_pose(&graph, &priors, center, &mut ChaCha8Rng::seed_from_u64(9));
        let b = sample_pose(&graph, &priors, center, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn mean_edge_length_approaches_prior() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut sums = vec![0.0f64; graph.edges().len()];
        let trials = 1000;
        for _ in 0..trials {
            let pose = sample_pose(&graph, &priors, Vec3::new(0.0, 0.0, 1000.0), &mut rng);
            for (e, &(a, b)) in graph.edges().iter().enumerate() {
                sums[e] += (pose.joints[a] - pose.joints[b]).norm();
            }
        }
        for (e, sum) in sums.iter().enumerate() {
            let mean = sum / trials as f64;
            assert!(
                (mean - priors.length(e)).abs() < priors.epsilon() / 4.0,
                "edge {e}: mean {mean} vs prior {}",
                priors.length(e)
            );
        }
    }

    #[test]
    fn zero_noise_peaks_match_projections() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pose = sample_pose(&graph, &priors, target, &mut rng);
        let (set, truth) = render_views(
            &pose,
            &rig,
            graph.joint_names(),
            8.0,
            4.0,
            &NoiseModel::default(),
            77,
        );
        for view in 0..4 {
            for joint in 0..graph.num_joints() {
                let peak = set.get(view, joint).argmax_location();
                let proj = truth.projection(view, joint, graph.num_joints()).unwrap();
                assert!(!peak.degenerate);
                assert!((peak.pixel.x - proj.x).abs() <= 2.0 + 1e-9);
                assert!((peak.pixel.y - proj.y).abs() <= 2.0 + 1e-9);
            }
        }
    }

    #[test]
    fn full_peak_drop_zeroes_every_map() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(3, 3000.0, target, (320, 320), 400.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = sample_pose(&graph, &priors, target, &mut rng);
        let noise = NoiseModel {
            peak_drop: 1.0,
            distractor_prob: 0.5,
            ..NoiseModel::default()
        };
        let (set, truth) = render_views(&pose, &rig, graph.joint_names(), 8.0, 4.0, &noise, 5);
        for map in set.iter() {
            assert!(map.values().iter().all(|&v| v == 0.0));
        }
        assert!(truth.occluded.iter().all(|&o| o));
    }

    #[test]
    fn seeded_render_is_reproducible() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = sample_pose(&graph, &priors, target, &mut rng);
        let noise = NoiseModel {
            jitter_sigma_px: 2.0,
            peak_drop: 0.2,
            distractor_prob: 0.2,
            ..NoiseModel::default()
        };
        let (a, _) = render_views(&pose, &rig, graph.joint_names(), 8.0, 4.0, &noise, 123);
        let (b, _) = render_views(&pose, &rig, graph.joint_names(), 8.0, 4.0, &noise, 123);
        assert_eq!(a, b);
        let (c, _) = render_views(&pose, &rig, graph.joint_names(), 8.0, 4.0, &noise, 124);
        assert_ne!(a, c);
    }

    #[test]
    fn truth_projections_satisfy_epipolar_constraint() {
        let graph = BodyGraph::default_human();
        let priors = LimbPriors::default_human();
        let target = Vec3::new(0.0, 0.0, 1000.0);
        let rig = generate_rig(4, 3000.0, target, (320, 320), 400.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = sample_pose(&graph, &priors, target, &mut rng);
        let (_, truth) = render_views(
            &pose,
            &rig,
            graph.joint_names(),
            8.0,
            4.0,
            &NoiseModel::default(),
            1,
        );
        let m = graph.num_joints();
        for u in 0..4 {
            for v in 0..4 {
                if u == v {
                    continue;
                }
                for joint in 0..m {
                    let (Some(yu), Some(yv)) = (
                        truth.projection(u, joint, m),
                        truth.projection(v, joint, m),
                    ) else {
                        continue;
                    };
                    let line = crate::geometry::epipolar_line(&yu, &rig[u], &rig[v]).unwrap();
                    assert!(line.distance(&yv) < 1e-6);
                }
            }
        }
    }
}
