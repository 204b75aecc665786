use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_JOINTS: usize = 18;
pub const NUM_LIMBS: usize = NUM_JOINTS - 1;

/// The 16 body joints and 2 stick joints, in canonical channel order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum JointId {
    HeadTop = 0,
    UpperNeck,
    Thorax,
    LShoulder,
    RShoulder,
    LElbow,
    RElbow,
    LWrist,
    RWrist,
    Pelvis,
    LHip,
    RHip,
    LKnee,
    RKnee,
    LAnkle,
    RAnkle,
    StickTop,
    StickEnd,
}

impl JointId {
    pub const ALL: [JointId; NUM_JOINTS] = [
        JointId::HeadTop,
        JointId::UpperNeck,
        JointId::Thorax,
        JointId::LShoulder,
        JointId::RShoulder,
        JointId::LElbow,
        JointId::RElbow,
        JointId::LWrist,
        JointId::RWrist,
        JointId::Pelvis,
        JointId::LHip,
        JointId::RHip,
        JointId::LKnee,
        JointId::RKnee,
        JointId::LAnkle,
        JointId::RAnkle,
        JointId::StickTop,
        JointId::StickEnd,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<JointId> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            JointId::HeadTop => "head_top",
            JointId::UpperNeck => "upper_neck",
            JointId::Thorax => "thorax",
            JointId::LShoulder => "l_shoulder",
            JointId::RShoulder => "r_shoulder",
            JointId::LElbow => "l_elbow",
            JointId::RElbow => "r_elbow",
            JointId::LWrist => "l_wrist",
            JointId::RWrist => "r_wrist",
            JointId::Pelvis => "pelvis",
            JointId::LHip => "l_hip",
            JointId::RHip => "r_hip",
            JointId::LKnee => "l_knee",
            JointId::RKnee => "r_knee",
            JointId::LAnkle => "l_ankle",
            JointId::RAnkle => "r_ankle",
            JointId::StickTop => "stick_top",
            JointId::StickEnd => "stick_end",
        }
    }

    /// The left/right counterpart; central and stick joints map to themselves.
    pub fn mirror(self) -> JointId {
        use JointId::*;
        match self {
            LShoulder => RShoulder,
            RShoulder => LShoulder,
            LElbow => RElbow,
            RElbow => LElbow,
            LWrist => RWrist,
            RWrist => LWrist,
            LHip => RHip,
            RHip => LHip,
            LKnee => RKnee,
            RKnee => LKnee,
            LAnkle => RAnkle,
            RAnkle => LAnkle,
            other => other,
        }
    }

    pub fn is_stick(self) -> bool {
        matches!(self, JointId::StickTop | JointId::StickEnd)
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for JointId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        JointId::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown joint name {s:?}")))
    }
}

/// Parent→child limbs forming a spanning tree rooted at `head_top`.
///
/// Edge order also fixes the PAF channel layout: edge `e` owns channels
/// `2e` (x) and `2e + 1` (y).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(JointId, JointId)>", into = "Vec<(JointId, JointId)>")]
pub struct LimbTree {
    edges: Vec<(JointId, JointId)>,
}

impl Default for LimbTree {
    fn default() -> Self {
        Self::with_stick_on(JointId::RWrist).expect("default limb tree is valid")
    }
}

impl LimbTree {
    /// The standard body tree with the stick attached to `stick_hand`.
    pub fn with_stick_on(stick_hand: JointId) -> Result<Self> {
        use JointId::*;
        Self::new(vec![
            (HeadTop, UpperNeck),
            (UpperNeck, Thorax),
            (Thorax, LShoulder),
            (Thorax, RShoulder),
            (LShoulder, LElbow),
            (RShoulder, RElbow),
            (LElbow, LWrist),
            (RElbow, RWrist),
            (Thorax, Pelvis),
            (Pelvis, LHip),
            (Pelvis, RHip),
            (LHip, LKnee),
            (RHip, RKnee),
            (LKnee, LAnkle),
            (RKnee, RAnkle),
            (stick_hand, StickTop),
            (StickTop, StickEnd),
        ])
    }

    pub fn new(edges: Vec<(JointId, JointId)>) -> Result<Self> {
        if edges.len() != NUM_LIMBS {
            return Err(Error::Argument(format!(
                "limb tree needs {NUM_LIMBS} edges, got {}",
                edges.len()
            )));
        }
        let mut parent: [Option<JointId>; NUM_JOINTS] = [None; NUM_JOINTS];
        for &(p, c) in &edges {
            if c == JointId::HeadTop {
                return Err(Error::Argument("head_top must be the root".into()));
            }
            if p == c {
                return Err(Error::Argument(format!("self loop on {p}")));
            }
            if parent[c.index()].replace(p).is_some() {
                return Err(Error::Argument(format!("{c} has two parents")));
            }
        }
        // 17 edges with unique parents over 17 non-root joints; reject cycles
        // by walking every joint up to the root.
        for j in JointId::ALL {
            let mut cur = j;
            let mut steps = 0;
            while cur != JointId::HeadTop {
                cur = parent[cur.index()]
                    .ok_or_else(|| Error::Argument(format!("{cur} has no parent")))?;
                steps += 1;
                if steps > NUM_JOINTS {
                    return Err(Error::Argument(format!("cycle through {j}")));
                }
            }
        }
        Ok(Self { edges })
    }

    /// Parses `parent child` name pairs, one per non-empty line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [p, c] = parts[..] else {
                return Err(Error::Argument(format!(
                    "limb line {} must have two joint names: {raw:?}",
                    no + 1
                )));
            };
            edges.push((p.parse()?, c.parse()?));
        }
        Self::new(edges)
    }

    pub fn to_text(&self) -> String {
        self.edges
            .iter()
            .map(|(p, c)| format!("{p} {c}\n"))
            .collect()
    }

    pub fn edges(&self) -> &[(JointId, JointId)] {
        &self.edges
    }
}

impl TryFrom<Vec<(JointId, JointId)>> for LimbTree {
    type Error = Error;
    fn try_from(edges: Vec<(JointId, JointId)>) -> Result<Self> {
        Self::new(edges)
    }
}

impl From<LimbTree> for Vec<(JointId, JointId)> {
    fn from(t: LimbTree) -> Self {
        t.edges
    }
}

/// One joint location in image pixels. Serialized as `[x, y, valid]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "(f32, f32, bool)", into = "(f32, f32, bool)")]
pub struct Joint {
    pub x: f32,
    pub y: f32,
    pub valid: bool,
}

impl Joint {
    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y, valid: true }
    }

    pub fn distance(&self, other: &Joint) -> f64 {
        let dx = self.x as f64 - other.x as f64;
        let dy = self.y as f64 - other.y as f64;
        dx.hypot(dy)
    }
}

impl From<(f32, f32, bool)> for Joint {
    fn from((x, y, valid): (f32, f32, bool)) -> Self {
        Self { x, y, valid }
    }
}

impl From<Joint> for (f32, f32, bool) {
    fn from(j: Joint) -> Self {
        (j.x, j.y, j.valid)
    }
}

/// A single-person pose: 18 joints in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose {
    pub joints: [Joint; NUM_JOINTS],
}

impl Pose {
    pub fn new(joints: [Joint; NUM_JOINTS]) -> Self {
        Self { joints }
    }

    pub fn joint(&self, id: JointId) -> &Joint {
        &self.joints[id.index()]
    }

    pub fn joint_mut(&mut self, id: JointId) -> &mut Joint {
        &mut self.joints[id.index()]
    }

    /// Head segment length (head_top to upper_neck), if both joints are valid.
    pub fn head_length(&self) -> Option<f64> {
        let a = self.joint(JointId::HeadTop);
        let b = self.joint(JointId::UpperNeck);
        (a.valid && b.valid).then(|| a.distance(b))
    }

    /// Applies `f` to every joint position, keeping validity.
    pub fn map_points(&self, mut f: impl FnMut(f32, f32) -> (f32, f32)) -> Pose {
        let mut out = *self;
        for j in out.joints.iter_mut() {
            let (x, y) = f(j.x, j.y);
            j.x = x;
            j.y = y;
        }
        out
    }

    /// Mirror about the vertical axis of an image `image_w` wide (`x -> W - x`),
    /// swapping left/right joint identities.
    pub fn mirrored(&self, image_w: f32) -> Pose {
        let mut out = *self;
        for id in JointId::ALL {
            let src = self.joint(id.mirror());
            out.joints[id.index()] = Joint {
                x: image_w - src.x,
                y: src.y,
                valid: src.valid,
            };
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.joints
            .iter()
            .all(|j| !j.valid || (j.x.is_finite() && j.y.is_finite()))
    }
}
