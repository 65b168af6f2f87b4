//! Scene corpus directory layout.
//!
//! ```text
//! corpus/
//!   manifest.toml        # CorpusSpec: rig, noise model, frame count, seed
//!   cameras.toml         # camera file (geometry::write_cameras)
//!   body.toml            # body model config (inference::write_body_config)
//!   frames/frame_0000.toml + frame_0000.bin   # heatmap dumps
//!   truth/truth_0000.toml                     # pose + 2D projections + flags
//! ```

use super::{mix_seed, render_views, sample_pose, NoiseModel, SceneTruth};
use crate::geometry::{read_cameras, write_cameras, CameraFileError, CameraParams};
use crate::heatmap::{read_dump, write_dump, DumpError, HeatmapSet};
use crate::inference::{
    read_body_config, write_body_config, BodyGraph, LimbPriors, Pose3D, PoseFileError,
};
use crate::{Vec2, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("manifest encode error: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error(transparent)]
    Cameras(#[from] CameraFileError),
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error(transparent)]
    Body(#[from] PoseFileError),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
}

/// Everything needed to (re)generate a synthetic corpus deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub frames: usize,
    pub num_cameras: usize,
    pub radius_mm: f64,
    pub target: [f64; 3],
    pub image_width: u32,
    pub image_height: u32,
    pub focal_px: f64,
    pub stride: f64,
    pub render_sigma_px: f64,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            frames: 100,
            num_cameras: 4,
            radius_mm: 3000.0,
            target: [0.0, 0.0, 1000.0],
            image_width: 320,
            image_height: 320,
            focal_px: 400.0,
            stride: 4.0,
            render_sigma_px: 8.0,
            noise: NoiseModel::default(),
            seed: 42,
        }
    }
}

impl CorpusSpec {
    pub fn target_vec(&self) -> Vec3 {
        Vec3::new(self.target[0], self.target[1], self.target[2])
    }

    pub fn build_rig(&self) -> Vec<CameraParams> {
        super::generate_rig(
            self.num_cameras,
            self.radius_mm,
            self.target_vec(),
            (self.image_width, self.image_height),
            self.focal_px,
        )
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.num_cameras < 2 {
            return Err(CorpusError::InvalidSpec("need at least 2 cameras".into()));
        }
        if self.stride <= 0.0 || self.render_sigma_px <= 0.0 || self.radius_mm <= 0.0 {
            return Err(CorpusError::InvalidSpec(
                "stride, sigma and radius must be positive".into(),
            ));
        }
        if self.image_width as f64 % self.stride != 0.0
            || self.image_height as f64 % self.stride != 0.0
        {
            return Err(CorpusError::InvalidSpec(
                "image dimensions must be multiples of the stride".into(),
            ));
        }
        self.noise.validate().map_err(CorpusError::InvalidSpec)
    }
}

/// One frame: rendered heatmaps plus ground truth.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub set: HeatmapSet,
    pub truth: SceneTruth,
}

/// An in-memory corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub spec: CorpusSpec,
    pub cameras: Vec<CameraParams>,
    pub graph: BodyGraph,
    pub priors: LimbPriors,
    pub frames: Vec<FrameData>,
}

/// Generates frame `index` of the corpus described by `spec`. Frames use
/// independent derived seeds, so any subset can be produced in any order
/// (or in parallel) with identical results.
pub fn generate_frame(
    spec: &CorpusSpec,
    cameras: &[CameraParams],
    graph: &BodyGraph,
    priors: &LimbPriors,
    index: usize,
) -> FrameData {
    let frame_seed = mix_seed(spec.seed, index as u64);
    let mut pose_rng = ChaCha8Rng::seed_from_u64(mix_seed(frame_seed, 0xA));
    let pose = sample_pose(graph, priors, spec.target_vec(), &mut pose_rng);
    let (set, truth) = render_views(
        &pose,
        cameras,
        graph.joint_names(),
        spec.render_sigma_px,
        spec.stride,
        &spec.noise,
        mix_seed(frame_seed, 0xB),
    );
    FrameData { set, truth }
}

/// Generates the whole corpus in memory.
pub fn generate_corpus(spec: &CorpusSpec, graph: &BodyGraph, priors: &LimbPriors) -> Corpus {
    let cameras = spec.build_rig();
    let frames = crate::par::map_indexed(spec.frames, |i| {
        generate_frame(spec, &cameras, graph, priors, i)
    });
    Corpus {
        spec: spec.clone(),
        cameras,
        graph: graph.clone(),
        priors: priors.clone(),
        frames,
    }
}

#[derive(Serialize, Deserialize)]
struct TruthFile {
    joints: Vec<TruthJoint>,
    views: Vec<TruthView>,
}

#[derive(Serialize, Deserialize)]
struct TruthJoint {
    name: String,
    position: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct TruthView {
    id: String,
    projections: Vec<[f64; 2]>,
    projectable: Vec<bool>,
    occluded: Vec<bool>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn truth_to_file(truth: &SceneTruth, graph: &BodyGraph, cameras: &[CameraParams]) -> TruthFile {
    let m = graph.num_joints();
    TruthFile {
        joints: graph
            .joint_names()
            .iter()
            .zip(truth.pose.joints.iter())
            .map(|(name, p)| TruthJoint {
                name: name.clone(),
                position: [p.x, p.y, p.z],
            })
            .collect(),
        views: cameras
            .iter()
            .enumerate()
            .map(|(v, cam)| TruthView {
                id: cam.id().to_string(),
                projections: (0..m)
                    .map(|j| match truth.projection(v, j, m) {
                        Some(p) => [p.x, p.y],
                        None => [0.0, 0.0],
                    })
                    .collect(),
                projectable: (0..m).map(|j| truth.projection(v, j, m).is_some()).collect(),
                occluded: (0..m).map(|j| truth.is_occluded(v, j, m)).collect(),
            })
            .collect(),
    }
}

fn truth_from_file(file: TruthFile) -> SceneTruth {
    let pose = Pose3D::new(
        file.joints
            .iter()
            .map(|j| Vec3::new(j.position[0], j.position[1], j.position[2]))
            .collect(),
    );
    let mut projections = Vec::new();
    let mut occluded = Vec::new();
    for view in &file.views {
        for j in 0..view.projections.len() {
            projections.push(if view.projectable[j] {
                Some(Vec2::new(view.projections[j][0], view.projections[j][1]))
            } else {
                None
            });
            occluded.push(view.occluded[j]);
        }
    }
    SceneTruth {
        pose,
        projections,
        occluded,
    }
}

/// Generates and writes a corpus directory.
pub fn write_corpus(
    dir: &Path,
    spec: &CorpusSpec,
    graph: &BodyGraph,
    priors: &LimbPriors,
) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    std::fs::create_dir_all(dir.join("frames")).map_err(io_err(dir))?;
    std::fs::create_dir_all(dir.join("truth")).map_err(io_err(dir))?;

    let corpus = generate_corpus(spec, graph, priors);
    std::fs::write(dir.join("manifest.toml"), toml::to_string_pretty(spec)?)
        .map_err(io_err(dir))?;
    write_cameras(&dir.join("cameras.toml"), &corpus.cameras)?;
    write_body_config(&dir.join("body.toml"), graph, priors)?;
    for (i, frame) in corpus.frames.iter().enumerate() {
        write_dump(&dir.join(format!("frames/frame_{i:04}.toml")), &frame.set)?;
        let truth = truth_to_file(&frame.truth, graph, &corpus.cameras);
        let path = dir.join(format!("truth/truth_{i:04}.toml"));
        std::fs::write(&path, toml::to_string_pretty(&truth)?).map_err(io_err(&path))?;
    }
    Ok(corpus)
}

/// Reads a corpus directory written by [`write_corpus`].
pub fn read_corpus(dir: &Path) -> Result<Corpus, CorpusError> {
    let manifest_path = dir.join("manifest.toml");
    let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
    let spec: CorpusSpec = toml::from_str(&text)?;
    let cameras = read_cameras(&dir.join("cameras.toml"))?;
    let (graph, priors) = read_body_config(&dir.join("body.toml"))?;
    let mut frames = Vec::with_capacity(spec.frames);
    for i in 0..spec.frames {
        let set = read_dump(&dir.join(format!("frames/frame_{i:04}.toml")))?;
        let truth_path = dir.join(format!("truth/truth_{i:04}.toml"));
        let truth_text = std::fs::read_to_string(&truth_path).map_err(io_err(&truth_path))?;
        let truth = truth_from_file(toml::from_str(&truth_text)?);
        frames.push(FrameData { set, truth });
    }
    Ok(Corpus {
        spec,
        cameras,
        graph,
        priors,
        frames,
    })
}
