//! Benchmark configuration and the end-to-end runner.
//!
//! A bench run loads (or synthesizes) a corpus, optionally fuses it, runs
//! each requested reconstruction method over every frame, and aggregates an
//! [`EvalReport`] per method. Frames are processed in parallel but
//! aggregated in a fixed order, and all per-cell arithmetic is
//! order-stable, so the canonical report is byte-identical across runs and
//! thread counts. Wall-clock figures are kept out of the canonical report
//! and written to a separate timing file.

use super::{jdr, per_joint_error, Detections2D, EvalReport, HarnessError};
use crate::fusion::{build_epipolar_weights, fuse_view, FusionMode, FusionWeights};
use crate::heatmap::HeatmapSet;
use crate::inference::{
    rpsm_reconstruct, triangulate_pose, RefinementSchedule,
};
use crate::par;
use crate::synth::{generate_corpus, read_corpus, Corpus, CorpusSpec};
use crate::inference::{BodyGraph, LimbPriors};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Where the corpus comes from: an existing directory or an inline
/// synthetic spec.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSource {
    Dir { dir: String },
    Synth { synth: CorpusSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionSettings {
    /// Epipolar kernel width in heatmap cells.
    pub sigma_cells: f64,
    /// `weighted`, `line-sum`, `line-max` or `identity`.
    pub mode: String,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self {
            sigma_cells: 1.5,
            mode: "weighted".to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconstructionSettings {
    pub initial_edge_mm: f64,
    pub initial_bins: usize,
    pub refine_bins: usize,
    pub iterations: usize,
}

impl Default for ReconstructionSettings {
    fn default() -> Self {
        let s = RefinementSchedule::default();
        Self {
            initial_edge_mm: s.initial_edge_mm,
            initial_bins: s.initial_bins,
            refine_bins: s.refine_bins,
            iterations: s.iterations,
        }
    }
}

/// One table row to produce: a fusion setting (`single` or `fused`) crossed
/// with a reconstruction algorithm (`triangulate`, `psm`, `rpsm`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSpec {
    pub fusion: String,
    pub algorithm: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchConfig {
    pub corpus: CorpusSource,
    #[serde(default)]
    pub fusion: FusionSettings,
    #[serde(default)]
    pub reconstruction: ReconstructionSettings,
    pub methods: Vec<MethodSpec>,
    /// Fixed JDR threshold (px); when absent the threshold is half the
    /// projected head-segment length per frame.
    #[serde(default)]
    pub jdr_threshold_px: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Algorithm {
    Triangulate,
    Psm,
    Rpsm,
}

impl Algorithm {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "triangulate" => Some(Self::Triangulate),
            "psm" => Some(Self::Psm),
            "rpsm" => Some(Self::Rpsm),
            _ => None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.methods.is_empty() {
            return Err(HarnessError::Config("no methods requested".into()));
        }
        for m in &self.methods {
            if !matches!(m.fusion.as_str(), "single" | "fused") {
                return Err(HarnessError::Config(format!(
                    "unknown fusion setting `{}` (use `single` or `fused`)",
                    m.fusion
                )));
            }
            if Algorithm::parse(&m.algorithm).is_none() {
                return Err(HarnessError::Config(format!(
                    "unknown algorithm `{}` (use `triangulate`, `psm` or `rpsm`)",
                    m.algorithm
                )));
            }
        }
        if FusionMode::parse(&self.fusion.mode).is_none() {
            return Err(HarnessError::Config(format!(
                "unknown fusion mode `{}`",
                self.fusion.mode
            )));
        }
        if self.fusion.sigma_cells <= 0.0 {
            return Err(HarnessError::Config("fusion sigma must be positive".into()));
        }
        if self.reconstruction.initial_bins < 2 || self.reconstruction.refine_bins < 2 {
            return Err(HarnessError::Config("bins per axis must be at least 2".into()));
        }
        Ok(())
    }

    fn schedule(&self, iterations: usize) -> RefinementSchedule {
        RefinementSchedule {
            initial_edge_mm: self.reconstruction.initial_edge_mm,
            initial_bins: self.reconstruction.initial_bins,
            refine_bins: self.reconstruction.refine_bins,
            iterations,
        }
    }
}

/// The full outcome of a bench run: the canonical reports plus the config
/// echo used to produce them.
#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub config_echo: String,
    pub reports: Vec<EvalReport>,
}

fn parse_mode(settings: &FusionSettings) -> FusionMode {
    FusionMode::parse(&settings.mode).expect("validated earlier")
}

/// Fuses every frame of the corpus, building each ordered-pair weight
/// matrix once and holding only one target view's pairs in memory at a
/// time.
fn fuse_corpus(
    corpus: &Corpus,
    mode: FusionMode,
    sigma_px: f64,
) -> Result<Vec<HeatmapSet>, HarnessError> {
    let mut fused: Vec<HeatmapSet> = corpus.frames.iter().map(|f| f.set.clone()).collect();
    if mode == FusionMode::Identity {
        return Ok(fused);
    }
    let dims = corpus.frames[0].set.get(0, 0).dims();
    let stride = corpus.frames[0].set.get(0, 0).stride;
    let n = corpus.cameras.len();
    for target in 0..n {
        let mut pairs: Vec<(usize, FusionWeights)> = Vec::with_capacity(n - 1);
        for source in 0..n {
            if source != target {
                pairs.push((
                    source,
                    build_epipolar_weights(
                        &corpus.cameras[target],
                        &corpus.cameras[source],
                        dims,
                        stride,
                        sigma_px,
                    )?,
                ));
            }
        }
        let refs: Vec<(usize, &FusionWeights)> =
            pairs.iter().map(|(s, w)| (*s, w)).collect();
        let stacks = par::map_slice(&corpus.frames, |frame| {
            fuse_view(&frame.set, target, &refs, mode)
        });
        for (f, stack) in fused.iter_mut().zip(stacks) {
            f.set_view_maps(target, stack?);
        }
    }
    Ok(fused)
}

/// Per-frame detections (peak locations) from the maps a method consumes.
fn extract_detections(sets: &[HeatmapSet]) -> Vec<Detections2D> {
    par::map_slice(sets, |set| {
        let m = set.num_joints();
        let mut pixels = Vec::with_capacity(set.num_views() * m);
        for view in 0..set.num_views() {
            for joint in 0..m {
                let peak = set.get(view, joint).argmax_location();
                pixels.push(if peak.degenerate { None } else { Some(peak.pixel) });
            }
        }
        Detections2D {
            num_joints: m,
            pixels,
        }
    })
}

fn truth_detections(corpus: &Corpus) -> Vec<Detections2D> {
    corpus
        .frames
        .iter()
        .map(|f| Detections2D {
            num_joints: corpus.graph.num_joints(),
            pixels: f.truth.projections.clone(),
        })
        .collect()
}

/// Per-frame JDR threshold: half the projected head-segment length,
/// averaged over views, matching the fraction-of-head-size convention.
fn jdr_thresholds(corpus: &Corpus, fixed: Option<f64>) -> Vec<f64> {
    if let Some(t) = fixed {
        return vec![t; corpus.frames.len()];
    }
    let head = corpus.graph.joint_index("head");
    let top = corpus.graph.joint_index("head_top");
    let (Some(head), Some(top)) = (head, top) else {
        return vec![8.0; corpus.frames.len()];
    };
    corpus
        .frames
        .iter()
        .map(|f| {
            let mut sum = 0.0;
            let mut count = 0usize;
            for cam in &corpus.cameras {
                let (Ok(a), Ok(b)) = (
                    cam.project(&f.truth.pose.joints[head]),
                    cam.project(&f.truth.pose.joints[top]),
                ) else {
                    continue;
                };
                sum += (a - b).norm();
                count += 1;
            }
            if count == 0 {
                8.0
            } else {
                0.5 * sum / count as f64
            }
        })
        .collect()
}

struct FrameEval {
    joint_errors: Vec<f64>,
    stage_errors: Option<Vec<f64>>,
    stage_wall_ms: Option<Vec<f64>>,
}

fn evaluate_method(
    corpus: &Corpus,
    maps: &[HeatmapSet],
    algorithm: Algorithm,
    schedule: &RefinementSchedule,
) -> Vec<Option<FrameEval>> {
    let indices: Vec<usize> = (0..corpus.frames.len()).collect();
    par::map_slice(&indices, |&i| {
        let set = &maps[i];
        let truth = &corpus.frames[i].truth.pose;
        match algorithm {
            Algorithm::Triangulate => triangulate_pose(set, &corpus.cameras)
                .ok()
                .and_then(|pose| per_joint_error(&pose, truth).ok())
                .map(|joint_errors| FrameEval {
                    joint_errors,
                    stage_errors: None,
                    stage_wall_ms: None,
                }),
            Algorithm::Psm | Algorithm::Rpsm => {
                let result =
                    rpsm_reconstruct(set, &corpus.cameras, &corpus.graph, &corpus.priors, schedule)
                        .ok()?;
                let joint_errors = per_joint_error(&result.pose, truth).ok()?;
                let stage_errors = result
                    .stages
                    .iter()
                    .map(|s| {
                        per_joint_error(&s.pose, truth).map(|e| {
                            e.iter().sum::<f64>() / e.len() as f64
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .ok()?;
                let wall = result.stages.iter().map(|s| s.wall_ms).collect();
                Some(FrameEval {
                    joint_errors,
                    stage_errors: Some(stage_errors),
                    stage_wall_ms: Some(wall),
                })
            }
        }
    })
}

/// Runs every requested method over the corpus and aggregates reports.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchOutput, HarnessError> {
    config.validate()?;
    let corpus = match &config.corpus {
        CorpusSource::Dir { dir } => read_corpus(Path::new(dir))?,
        CorpusSource::Synth { synth } => {
            synth.validate()?;
            if synth.frames == 0 {
                return Err(HarnessError::Config("corpus needs at least one frame".into()));
            }
            generate_corpus(synth, &BodyGraph::default_human(), &LimbPriors::default_human())
        }
    };
    if corpus.frames.is_empty() {
        return Err(HarnessError::Config("corpus holds no frames".into()));
    }

    let single_maps: Vec<HeatmapSet> = corpus.frames.iter().map(|f| f.set.clone()).collect();
    let needs_fusion = config.methods.iter().any(|m| m.fusion == "fused");
    let fused_maps = if needs_fusion {
        let stride = corpus.frames[0].set.get(0, 0).stride;
        Some(fuse_corpus(
            &corpus,
            parse_mode(&config.fusion),
            config.fusion.sigma_cells * stride,
        )?)
    } else {
        None
    };

    let truth_2d = truth_detections(&corpus);
    let thresholds = jdr_thresholds(&corpus, config.jdr_threshold_px);
    let single_detections = extract_detections(&single_maps);
    let fused_detections = fused_maps.as_deref().map(extract_detections);

    let mut reports = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let algorithm = Algorithm::parse(&method.algorithm).expect("validated");
        let (maps, detections) = if method.fusion == "fused" {
            (
                fused_maps.as_deref().expect("fused maps prepared"),
                fused_detections.as_deref().expect("fused maps prepared"),
            )
        } else {
            (&single_maps[..], &single_detections[..])
        };
        let iterations = match algorithm {
            Algorithm::Psm => 0,
            Algorithm::Rpsm => config.reconstruction.iterations,
            Algorithm::Triangulate => 0,
        };
        let schedule = config.schedule(iterations);
        let evals = evaluate_method(&corpus, maps, algorithm, &schedule);

        let name = match algorithm {
            Algorithm::Rpsm => format!("{}-rpsm-t{}", method.fusion, iterations),
            _ => format!("{}-{}", method.fusion, method.algorithm),
        };
        let jdr_per_joint = jdr(detections, &truth_2d, &thresholds)?;
        reports.push(EvalReport::from_frame_evals(
            name,
            corpus.graph.joint_names().to_vec(),
            &evals
                .iter()
                .map(|e| {
                    e.as_ref().map(|fe| {
                        (
                            fe.joint_errors.clone(),
                            fe.stage_errors.clone(),
                            fe.stage_wall_ms.clone(),
                        )
                    })
                })
                .collect::<Vec<_>>(),
            jdr_per_joint,
        ));
    }

    Ok(BenchOutput {
        config_echo: toml::to_string_pretty(config)?,
        reports,
    })
}

/// Canonical (deterministic) report serialization: aggregates only, no
/// wall-clock figures.
pub fn render_reports_toml(output: &BenchOutput) -> String {
    let mut s = String::new();
    for report in &output.reports {
        let _ = writeln!(s, "[[reports]]");
        let _ = writeln!(s, "method = {:?}", report.method);
        let _ = writeln!(s, "frames = {}", report.frames);
        let _ = writeln!(s, "frames_evaluated = {}", report.frames_evaluated);
        let _ = writeln!(s, "failed_frames = {:?}", report.failed_frames);
        let _ = writeln!(s, "mpjpe_mean_mm = {}", report.mpjpe_mean_mm);
        let _ = writeln!(s, "joint_names = {:?}", report.joint_names);
        let _ = writeln!(s, "mpjpe_per_joint_mm = {:?}", report.mpjpe_per_joint_mm);
        let _ = writeln!(s, "jdr_per_joint_pct = {:?}", report.jdr_per_joint_pct);
        if let Some(stage) = &report.stage_mpjpe_mm {
            let _ = writeln!(s, "stage_mpjpe_mm = {stage:?}");
        }
        let _ = writeln!(s);
    }
    s
}

fn render_timing_toml(output: &BenchOutput) -> String {
    let mut s = String::new();
    for report in &output.reports {
        let _ = writeln!(s, "[[timing]]");
        let _ = writeln!(s, "method = {:?}", report.method);
        if let Some(wall) = &report.stage_wall_ms {
            let _ = writeln!(s, "stage_wall_ms = {wall:?}");
        }
        let _ = writeln!(s);
    }
    s
}

fn render_per_frame_csv(output: &BenchOutput) -> String {
    let mut s = String::from("method,frame,mpjpe_mm\n");
    for report in &output.reports {
        for (frame, err) in report.mpjpe_per_frame_mm.iter().enumerate() {
            match err {
                Some(e) => {
                    let _ = writeln!(s, "{},{},{}", report.method, frame, e);
                }
                None => {
                    let _ = writeln!(s, "{},{},", report.method, frame);
                }
            }
        }
    }
    s
}

/// Writes `report.toml` (canonical), `per_frame.csv` (auditable per-frame
/// dumps), `config.toml` (echo) and `timing.toml` (wall clock; not part of
/// the reproducible surface).
pub fn write_bench_output(dir: &Path, output: &BenchOutput) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let write = |name: &str, contents: String| -> Result<(), HarnessError> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write("report.toml", render_reports_toml(output))?;
    write("per_frame.csv", render_per_frame_csv(output))?;
    write("config.toml", output.config_echo.clone())?;
    write("timing.toml", render_timing_toml(output))?;
    Ok(())
}
