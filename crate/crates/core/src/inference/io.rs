//! Body-model config and pose output files.
//!
//! Body config (TOML): joint list with parent links and limb prior lengths,
//! plus the shared tolerance. The root is the single joint without a parent.
//!
//! ```toml
//! epsilon_mm = 150.0
//!
//! [[joints]]
//! name = "pelvis"
//!
//! [[joints]]
//! name = "left_hip"
//! parent = "pelvis"
//! length_mm = 130.0
//! ```
//!
//! Pose file: `#`-prefixed metadata header lines, then one
//! `name x y z` line per joint (mm, six decimal places).

use super::{BodyGraph, InferenceError, LimbPriors, Pose3D};
use crate::Vec3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoseFileError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("config encode error: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error(transparent)]
    Model(#[from] InferenceError),
}

#[derive(Serialize, Deserialize)]
struct BodyFile {
    epsilon_mm: f64,
    joints: Vec<BodyJoint>,
}

#[derive(Serialize, Deserialize)]
struct BodyJoint {
    name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    length_mm: Option<f64>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PoseFileError + '_ {
    move |source| PoseFileError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the body model as a config file.
pub fn write_body_config(
    path: &Path,
    graph: &BodyGraph,
    priors: &LimbPriors,
) -> Result<(), PoseFileError> {
    // Edge lookup: child -> (parent, prior length). Children are unique in a
    // rooted tree, so each joint record carries its incoming edge.
    let order = graph.edges_root_first();
    let mut parent_of = vec![None::<(usize, f64)>; graph.num_joints()];
    for (parent, child) in order {
        let e = graph
            .edges()
            .iter()
            .position(|&(a, b)| (a, b) == (parent, child) || (a, b) == (child, parent))
            .expect("edge exists");
        parent_of[child] = Some((parent, priors.length(e)));
    }
    let file = BodyFile {
        epsilon_mm: priors.epsilon(),
        joints: graph
            .joint_names()
            .iter()
            .enumerate()
            .map(|(i, name)| BodyJoint {
                name: name.clone(),
                parent: parent_of[i].map(|(p, _)| graph.joint_names()[p].clone()),
                length_mm: parent_of[i].map(|(_, l)| l),
            })
            .collect(),
    };
    std::fs::write(path, toml::to_string_pretty(&file)?).map_err(io_err(path))
}

/// Reads a body config, returning the graph (edges in joint-file order) and
/// matching limb priors.
pub fn read_body_config(path: &Path) -> Result<(BodyGraph, LimbPriors), PoseFileError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: BodyFile = toml::from_str(&text)?;
    let names: Vec<String> = file.joints.iter().map(|j| j.name.clone()).collect();
    let index = |name: &str| -> Result<usize, PoseFileError> {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PoseFileError::Parse(format!("unknown joint `{name}`")))
    };
    let mut root = None;
    let mut edges = Vec::new();
    let mut lengths = Vec::new();
    for (i, joint) in file.joints.iter().enumerate() {
        match (&joint.parent, joint.length_mm) {
            (Some(parent), Some(len)) => {
                edges.push((index(parent)?, i));
                lengths.push(len);
            }
            (None, None) => {
                if root.replace(i).is_some() {
                    return Err(PoseFileError::Parse(
                        "multiple joints without a parent".into(),
                    ));
                }
            }
            _ => {
                return Err(PoseFileError::Parse(format!(
                    "joint `{}` must have both parent and length_mm, or neither",
                    joint.name
                )))
            }
        }
    }
    let root = root.ok_or_else(|| PoseFileError::Parse("no root joint".into()))?;
    let graph = BodyGraph::new(names, root, edges)?;
    let priors = LimbPriors::new(lengths, file.epsilon_mm)?;
    Ok((graph, priors))
}

/// Writes a pose file: metadata header lines (`# key: value`) followed by
/// `name x y z` per joint.
pub fn write_pose_file(
    path: &Path,
    pose: &Pose3D,
    joint_names: &[String],
    metadata: &[(String, String)],
) -> Result<(), PoseFileError> {
    assert_eq!(pose.num_joints(), joint_names.len());
    let mut out = String::new();
    for (key, value) in metadata {
        out.push_str(&format!("# {key}: {value}\n"));
    }
    for (name, p) in joint_names.iter().zip(pose.joints.iter()) {
        out.push_str(&format!("{name} {:.6} {:.6} {:.6}\n", p.x, p.y, p.z));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Reads a pose file written by [`write_pose_file`]; header lines are
/// returned as raw `(key, value)` pairs.
pub fn read_pose_file(
    path: &Path,
) -> Result<(Pose3D, Vec<String>, Vec<(String, String)>), PoseFileError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut joints = Vec::new();
    let mut names = Vec::new();
    let mut metadata = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((key, value)) = rest.split_once(':') {
                metadata.push((key.trim().to_string(), value.trim().to_string()));
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let name = parts
            .next()
            .ok_or_else(|| PoseFileError::Parse("empty joint line".into()))?;
        let coords: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|e| PoseFileError::Parse(format!("bad coordinate `{p}`: {e}")))
            })
            .collect::<Result<_, _>>()?;
        if coords.len() != 3 {
            return Err(PoseFileError::Parse(format!(
                "joint `{name}` has {} coordinates, expected 3",
                coords.len()
            )));
        }
        names.push(name.to_string());
        joints.push(Vec3::new(coords[0], coords[1], coords[2]));
    }
    Ok((Pose3D::new(joints), names, metadata))
}
