//! Evaluation metrics and benchmark orchestration.

mod bench;

pub use bench::{
    render_reports_toml, run_benchmark, write_bench_output, BenchConfig, BenchOutput,
    CorpusSource, FusionSettings, MethodSpec, ReconstructionSettings,
};

use crate::inference::Pose3D;
use crate::Vec2;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("pose joint counts differ: {expected} vs {actual}")]
    JointCountMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Corpus(#[from] crate::synth::CorpusError),
    #[error(transparent)]
    Fusion(#[from] crate::fusion::FusionError),
    #[error(transparent)]
    Inference(#[from] crate::inference::InferenceError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("report encode error: {0}")]
    Encode(#[from] toml::ser::Error),
}

/// Per-joint Euclidean errors between two poses (mm), no alignment.
pub fn per_joint_error(estimated: &Pose3D, truth: &Pose3D) -> Result<Vec<f64>, HarnessError> {
    if estimated.num_joints() != truth.num_joints() {
        return Err(HarnessError::JointCountMismatch {
            expected: truth.num_joints(),
            actual: estimated.num_joints(),
        });
    }
    Ok(estimated
        .joints
        .iter()
        .zip(truth.joints.iter())
        .map(|(a, b)| (a - b).norm())
        .collect())
}

/// Mean per-joint position error (mm), protocol without rigid alignment.
pub fn mpjpe(estimated: &Pose3D, truth: &Pose3D) -> Result<f64, HarnessError> {
    let errors = per_joint_error(estimated, truth)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// 2D detections of one frame, view-major (`view * num_joints + joint`).
/// `None` marks a missing detection (degenerate map or no truth).
#[derive(Debug, Clone)]
pub struct Detections2D {
    pub num_joints: usize,
    pub pixels: Vec<Option<Vec2>>,
}

/// Joint detection rate per joint (%): the fraction of (frame, view)
/// detections within the frame's pixel threshold of the ground truth.
/// Entries without ground truth are skipped; a missing detection against
/// valid truth counts as a miss.
pub fn jdr(
    estimated: &[Detections2D],
    truth: &[Detections2D],
    thresholds_px: &[f64],
) -> Result<Vec<f64>, HarnessError> {
    if estimated.len() != truth.len() || estimated.len() != thresholds_px.len() {
        return Err(HarnessError::Config(format!(
            "jdr inputs disagree on frame count: {} estimated, {} truth, {} thresholds",
            estimated.len(),
            truth.len(),
            thresholds_px.len()
        )));
    }
    let num_joints = truth.first().map_or(0, |t| t.num_joints);
    let mut hits = vec![0usize; num_joints];
    let mut totals = vec![0usize; num_joints];
    for ((est, tru), &threshold) in estimated.iter().zip(truth.iter()).zip(thresholds_px.iter())
    {
        if est.num_joints != tru.num_joints || est.pixels.len() != tru.pixels.len() {
            return Err(HarnessError::JointCountMismatch {
                expected: tru.pixels.len(),
                actual: est.pixels.len(),
            });
        }
        for (slot, (e, t)) in est.pixels.iter().zip(tru.pixels.iter()).enumerate() {
            let Some(t) = t else { continue };
            let joint = slot % num_joints;
            totals[joint] += 1;
            if let Some(e) = e {
                if (e - t).norm() < threshold {
                    hits[joint] += 1;
                }
            }
        }
    }
    Ok(hits
        .iter()
        .zip(totals.iter())
        .map(|(&h, &n)| if n == 0 { 0.0 } else { 100.0 * h as f64 / n as f64 })
        .collect())
}

/// Aggregated evaluation of one method over a corpus.
///
/// Frames where the method could not produce a pose (for example the root
/// joint was undetectable in too many views) are listed in `failed_frames`
/// and excluded from the error aggregates; detection rates cover all
/// frames.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub method: String,
    pub frames: usize,
    pub frames_evaluated: usize,
    pub failed_frames: Vec<usize>,
    pub joint_names: Vec<String>,
    /// Mean error per joint over evaluated frames (mm).
    pub mpjpe_per_joint_mm: Vec<f64>,
    /// Arithmetic mean of the per-joint values.
    pub mpjpe_mean_mm: f64,
    /// Per-frame mean errors (`None` for failed frames), auditable against
    /// the aggregate.
    pub mpjpe_per_frame_mm: Vec<Option<f64>>,
    /// Detection rate per joint (%), from the maps the method consumed.
    pub jdr_per_joint_pct: Vec<f64>,
    /// Mean MPJPE after each refinement stage (grid methods only).
    pub stage_mpjpe_mm: Option<Vec<f64>>,
    /// Mean wall-clock per refinement stage (ms); reported separately from
    /// the canonical report so reports stay byte-reproducible.
    pub stage_wall_ms: Option<Vec<f64>>,
}

/// Per-frame evaluation input: joint errors, optional per-stage mean
/// errors, optional per-stage wall clock.
type FrameErrors = Option<(Vec<f64>, Option<Vec<f64>>, Option<Vec<f64>>)>;

impl EvalReport {
    pub fn from_frame_evals(
        method: String,
        joint_names: Vec<String>,
        per_frame: &[FrameErrors],
        jdr_per_joint_pct: Vec<f64>,
    ) -> Self {
        let frames = per_frame.len();
        let m = joint_names.len();
        let mut per_joint = vec![0.0f64; m];
        let mut failed_frames = Vec::new();
        let mut per_frame_mean = Vec::with_capacity(frames);
        let mut stage_sum: Option<Vec<f64>> = None;
        let mut wall_sum: Option<Vec<f64>> = None;
        let mut evaluated = 0usize;

        for (i, entry) in per_frame.iter().enumerate() {
            let Some((joint_errors, stage_errors, stage_wall)) = entry else {
                failed_frames.push(i);
                per_frame_mean.push(None);
                continue;
            };
            evaluated += 1;
            for (j, e) in joint_errors.iter().enumerate() {
                per_joint[j] += e;
            }
            per_frame_mean.push(Some(
                joint_errors.iter().sum::<f64>() / joint_errors.len().max(1) as f64,
            ));
            if let Some(stages) = stage_errors {
                let acc = stage_sum.get_or_insert_with(|| vec![0.0; stages.len()]);
                for (s, e) in stages.iter().enumerate() {
                    acc[s] += e;
                }
            }
            if let Some(wall) = stage_wall {
                let acc = wall_sum.get_or_insert_with(|| vec![0.0; wall.len()]);
                for (s, w) in wall.iter().enumerate() {
                    acc[s] += w;
                }
            }
        }

        let denom = evaluated.max(1) as f64;
        for v in &mut per_joint {
            *v /= denom;
        }
        let mean = per_joint.iter().sum::<f64>() / m.max(1) as f64;
        let finalize =
            |acc: Option<Vec<f64>>| acc.map(|v| v.into_iter().map(|x| x / denom).collect());

        Self {
            method,
            frames,
            frames_evaluated: evaluated,
            failed_frames,
            joint_names,
            mpjpe_per_joint_mm: per_joint,
            mpjpe_mean_mm: mean,
            mpjpe_per_frame_mm: per_frame_mean,
            jdr_per_joint_pct,
            stage_mpjpe_mm: finalize(stage_sum),
            stage_wall_ms: finalize(wall_sum),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mpjpe_of_identical_poses_is_zero() {
        let pose = Pose3D::new(vec![Vec3::new(1.0, 2.0, 3.0); 5]);
        assert_eq!(mpjpe(&pose, &pose).unwrap(), 0.0);
    }

    #[test]
    fn mpjpe_of_uniform_shift_is_the_shift_norm() {
        let truth = Pose3D::new(vec![Vec3::new(10.0, -5.0, 900.0); 17]);
        let shifted = Pose3D::new(
            truth
                .joints
                .iter()
                .map(|p| p + Vec3::new(3.0, 4.0, 0.0))
                .collect(),
        );
        assert!((mpjpe(&shifted, &truth).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn mpjpe_matches_one_line_oracle_on_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let rand_pose = |rng: &mut ChaCha8Rng| {
            Pose3D::new(
                (0..17)
                    .map(|_| {
                        Vec3::new(
                            rng.random_range(-500.0..500.0),
                            rng.random_range(-500.0..500.0),
                            rng.random_range(-500.0..500.0),
                        )
                    })
                    .collect(),
            )
        };
        for _ in 0..20 {
            let a = rand_pose(&mut rng);
            let b = rand_pose(&mut rng);
            let expected: f64 = a
                .joints
                .iter()
                .zip(&b.joints)
                .map(|(x, y)| (x - y).norm())
                .sum::<f64>()
                / 17.0;
            assert!((mpjpe(&a, &b).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn mpjpe_rejects_mismatched_poses() {
        let a = Pose3D::new(vec![Vec3::zeros(); 3]);
        let b = Pose3D::new(vec![Vec3::zeros(); 4]);
        assert!(matches!(
            mpjpe(&a, &b),
            Err(HarnessError::JointCountMismatch { .. })
        ));
    }

    fn frame(pixels: Vec<Option<Vec2>>, num_joints: usize) -> Detections2D {
        Detections2D { num_joints, pixels }
    }

    #[test]
    fn jdr_all_exact_is_100() {
        let truth = vec![frame(vec![Some(Vec2::new(5.0, 5.0)); 4], 2)];
        let rates = jdr(&truth.clone(), &truth, &[3.0]).unwrap();
        assert_eq!(rates, vec![100.0, 100.0]);
    }

    #[test]
    fn jdr_all_beyond_threshold_is_0() {
        let truth = vec![frame(vec![Some(Vec2::new(0.0, 0.0)); 4], 2)];
        let est = vec![frame(vec![Some(Vec2::new(50.0, 0.0)); 4], 2)];
        let rates = jdr(&est, &truth, &[3.0]).unwrap();
        assert_eq!(rates, vec![0.0, 0.0]);
    }

    #[test]
    fn jdr_half_hits_is_50() {
        // Two views x one joint: one view hits, one misses.
        let truth = vec![frame(vec![Some(Vec2::new(0.0, 0.0)); 2], 1)];
        let est = vec![frame(
            vec![Some(Vec2::new(1.0, 0.0)), Some(Vec2::new(40.0, 0.0))],
            1,
        )];
        let rates = jdr(&est, &truth, &[5.0]).unwrap();
        assert_eq!(rates, vec![50.0]);
    }

    #[test]
    fn report_mean_is_arithmetic_mean_of_per_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let per_frame: Vec<FrameErrors> = (0..10)
            .map(|_| {
                Some((
                    (0..17)
                        .map(|_| rng.random_range(0.0..100.0))
                        .collect::<Vec<f64>>(),
                    None,
                    None,
                ))
            })
            .collect();
        let names = (0..17).map(|i| format!("j{i}")).collect();
        let report = EvalReport::from_frame_evals("x".into(), names, &per_frame, vec![]);
        let mean = report.mpjpe_per_joint_mm.iter().sum::<f64>() / 17.0;
        assert!((report.mpjpe_mean_mm - mean).abs() < 1e-9);
        // Frame means recompute the same aggregate.
        let via_frames = report
            .mpjpe_per_frame_mm
            .iter()
            .flatten()
            .sum::<f64>()
            / 10.0;
        assert!((report.mpjpe_mean_mm - via_frames).abs() < 1e-9);
    }

    #[test]
    fn failed_frames_are_excluded_from_aggregates() {
        let per_frame: Vec<FrameErrors> = vec![
            Some((vec![10.0, 20.0], None, None)),
            None,
            Some((vec![30.0, 40.0], None, None)),
        ];
        let report = EvalReport::from_frame_evals(
            "x".into(),
            vec!["a".into(), "b".into()],
            &per_frame,
            vec![],
        );
        assert_eq!(report.frames, 3);
        assert_eq!(report.frames_evaluated, 2);
        assert_eq!(report.failed_frames, vec![1]);
        assert_eq!(report.mpjpe_per_joint_mm, vec![20.0, 30.0]);
        assert_eq!(report.mpjpe_mean_mm, 25.0);
        assert_eq!(report.mpjpe_per_frame_mm[1], None);
    }
}
