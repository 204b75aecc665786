//! Latent joint features: head-normalized coordinates plus 16 limb angles per
//! frame, concatenated over the three frames of a sequence.
//!
//! Per-frame layout is `[x0, y0, …, x17, y17, θ0, …, θ15]` (52 values), or
//! 48 values when the two stick joints are dropped.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::{JointId, Pose, NUM_JOINTS};
use crate::tensor::Tensor;

pub const NUM_ANGLES: usize = 16;
pub const FRAMES_PER_SEQUENCE: usize = 3;

const MIN_HEAD_LENGTH: f64 = 1e-6;
const MIN_SEGMENT: f64 = 1e-9;

/// `(A, B, C)` triples; each describes the angle ∠ABC with vertex `B`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleSpec {
    triples: Vec<[JointId; 3]>,
}

impl Default for AngleSpec {
    fn default() -> Self {
        use JointId::*;
        Self {
            triples: vec![
                [HeadTop, UpperNeck, Thorax],
                [UpperNeck, Thorax, LShoulder],
                [Pelvis, Thorax, LShoulder],
                [Thorax, LShoulder, LElbow],
                [LShoulder, LElbow, LWrist],
                [UpperNeck, Thorax, RShoulder],
                [Pelvis, Thorax, RShoulder],
                [Thorax, RShoulder, RElbow],
                [RShoulder, RElbow, RWrist],
                [Thorax, Pelvis, LHip],
                [Pelvis, LHip, LKnee],
                [LHip, LKnee, LAnkle],
                [Thorax, Pelvis, RHip],
                [Pelvis, RHip, RKnee],
                [RHip, RKnee, RAnkle],
                [LHip, Pelvis, RHip],
            ],
        }
    }
}

impl AngleSpec {
    pub fn new(triples: Vec<[JointId; 3]>) -> Result<Self> {
        if triples.len() != NUM_ANGLES {
            return Err(Error::Argument(format!(
                "angle table needs {NUM_ANGLES} rows, got {}",
                triples.len()
            )));
        }
        if let Some(t) = triples.iter().find(|t| t.iter().any(|j| j.is_stick())) {
            return Err(Error::Argument(format!("angle {t:?} references a stick joint")));
        }
        Ok(Self { triples })
    }

    /// Parses one `A B C` line of joint names per angle.
    pub fn parse(text: &str) -> Result<Self> {
        let mut triples = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let names: Vec<&str> = line.split_whitespace().collect();
            let [a, b, c] = names[..] else {
                return Err(Error::Argument(format!("angle line needs 3 joints: {raw:?}")));
            };
            triples.push([a.parse()?, b.parse()?, c.parse()?]);
        }
        Self::new(triples)
    }

    pub fn to_text(&self) -> String {
        self.triples
            .iter()
            .map(|[a, b, c]| format!("{a} {b} {c}\n"))
            .collect()
    }

    pub fn triples(&self) -> &[[JointId; 3]] {
        &self.triples
    }
}

/// Length of the per-frame block.
pub fn frame_len(include_stick: bool) -> usize {
    joint_set(include_stick).count() * 2 + NUM_ANGLES
}

/// Length of the full sequence vector: 156 with the stick, 144 without.
pub fn feature_len(include_stick: bool) -> usize {
    FRAMES_PER_SEQUENCE * frame_len(include_stick)
}

fn joint_set(include_stick: bool) -> impl Iterator<Item = JointId> {
    JointId::ALL
        .into_iter()
        .filter(move |j| include_stick || !j.is_stick())
}

/// Maps joints to `((x - W/2) / L, (y - H/2) / L)` where `L` is this frame's
/// head segment length. Invalid joints become `(0, 0)`.
pub fn normalize_joints(pose: &Pose, image_w: u32, image_h: u32) -> Result<[(f32, f32); NUM_JOINTS]> {
    let len = pose.head_length().ok_or(Error::DegenerateHead)?;
    if !(len >= MIN_HEAD_LENGTH) {
        return Err(Error::DegenerateHead);
    }
    let (cx, cy) = (image_w as f64 / 2.0, image_h as f64 / 2.0);
    let mut out = [(0.0f32, 0.0f32); NUM_JOINTS];
    for (slot, j) in out.iter_mut().zip(&pose.joints) {
        if j.valid {
            *slot = (
                ((j.x as f64 - cx) / len) as f32,
                ((j.y as f64 - cy) / len) as f32,
            );
        }
    }
    Ok(out)
}

/// Unsigned angle ∠ABC in radians, `0` when either arm is degenerate.
pub fn limb_angle(a: (f32, f32), b: (f32, f32), c: (f32, f32)) -> f32 {
    let (ux, uy) = (a.0 as f64 - b.0 as f64, a.1 as f64 - b.1 as f64);
    let (vx, vy) = (c.0 as f64 - b.0 as f64, c.1 as f64 - b.1 as f64);
    if ux.hypot(uy) < MIN_SEGMENT || vx.hypot(vy) < MIN_SEGMENT {
        return 0.0;
    }
    // Equals acos of the clamped cosine; atan2 stays accurate near 0 and π.
    let cross = ux * vy - uy * vx;
    let dot = ux * vx + uy * vy;
    cross.abs().atan2(dot) as f32
}

pub fn featurize_frame(pose: &Pose, image_w: u32, image_h: u32, include_stick: bool) -> Result<Vec<f32>> {
    featurize_frame_with(&AngleSpec::default(), pose, image_w, image_h, include_stick)
}

pub fn featurize_frame_with(
    angles: &AngleSpec,
    pose: &Pose,
    image_w: u32,
    image_h: u32,
    include_stick: bool,
) -> Result<Vec<f32>> {
    let coords = normalize_joints(pose, image_w, image_h)?;
    let mut out = Vec::with_capacity(frame_len(include_stick));
    for j in joint_set(include_stick) {
        let (x, y) = coords[j.index()];
        out.extend([x, y]);
    }
    for &[a, b, c] in angles.triples() {
        let p = |id: JointId| {
            let j = pose.joint(id);
            (j.x, j.y)
        };
        out.push(limb_angle(p(a), p(b), p(c)));
    }
    Ok(out)
}

/// The flat per-sequence vector fed to the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFeature(Vec<f32>);

impl LatentFeature {
    pub fn new(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.0
    }

    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        Tensor::new(vec![self.0.len()], self.0.clone())
    }
}

pub fn featurize_sequence(poses: &[Pose], dims: &[(u32, u32)], include_stick: bool) -> Result<LatentFeature> {
    featurize_sequence_with(&AngleSpec::default(), poses, dims, include_stick)
}

pub fn featurize_sequence_with(
    angles: &AngleSpec,
    poses: &[Pose],
    dims: &[(u32, u32)],
    include_stick: bool,
) -> Result<LatentFeature> {
    if poses.len() != FRAMES_PER_SEQUENCE || dims.len() != FRAMES_PER_SEQUENCE {
        return Err(Error::Argument(format!(
            "a sequence has {FRAMES_PER_SEQUENCE} frames, got {} poses and {} sizes",
            poses.len(),
            dims.len()
        )));
    }
    let mut values = Vec::with_capacity(feature_len(include_stick));
    for (pose, &(w, h)) in poses.iter().zip(dims) {
        values.extend(featurize_frame_with(angles, pose, w, h, include_stick)?);
    }
    Ok(LatentFeature(values))
}
