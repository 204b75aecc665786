//! On-disk dataset layout: a `manifest.json` listing every sequence with its
//! label, split, embedded joint annotations, and relative paths to the flow
//! (and optionally part-map) tensors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::FRAMES_PER_SEQUENCE;
use crate::model::ActionLabel;
use crate::pose::{JointId, LimbTree, PartMaps, Pose};
use crate::tensor::{read_tensor, Tensor};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub id: String,
    pub action: ActionLabel,
    pub split: Split,
    /// Flow 1→2 and 2→3, relative to the manifest directory.
    pub flows: [PathBuf; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<[PathBuf; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pafs: Option<[PathBuf; 3]>,
    /// Ground-truth annotations, 18 × `[x, y, valid]` per frame.
    pub joints: [Pose; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub joints: Vec<String>,
    pub limbs: LimbTree,
    /// Part-map grid stride in image pixels.
    pub stride: f32,
    /// `[width, height]` of every frame.
    pub image_size: [u32; 2],
    pub sequences: Vec<SequenceRecord>,
}

impl Manifest {
    pub fn new(limbs: LimbTree, stride: f32, image_size: [u32; 2]) -> Self {
        Self {
            version: MANIFEST_VERSION,
            joints: JointId::ALL.iter().map(|j| j.name().to_string()).collect(),
            limbs,
            stride,
            image_size,
            sequences: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    fn check_header(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Dataset(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                self.version
            )));
        }
        let expected: Vec<&str> = JointId::ALL.iter().map(|j| j.name()).collect();
        if self.joints != expected {
            return Err(Error::Dataset(format!("joint table {:?} does not match {expected:?}", self.joints)));
        }
        if !(self.stride > 0.0 && self.stride.is_finite()) {
            return Err(Error::Dataset(format!("stride {} must be positive", self.stride)));
        }
        if self.image_size.contains(&0) {
            return Err(Error::Dataset("image size must be positive".into()));
        }
        Ok(())
    }
}

/// A manifest together with the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    manifest: Manifest,
}

impl Dataset {
    /// Opens `path`, which is either a manifest file or a directory holding
    /// `manifest.json`, and checks that every referenced file exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&file, e))?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        let ds = Self { root, manifest };
        ds.validate()?;
        Ok(ds)
    }

    pub fn from_parts(root: impl Into<PathBuf>, manifest: Manifest) -> Result<Self> {
        let ds = Self {
            root: root.into(),
            manifest,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        self.manifest.check_header()?;
        let mut ids = std::collections::HashSet::new();
        for rec in &self.manifest.sequences {
            if !ids.insert(rec.id.as_str()) {
                return Err(Error::Dataset(format!("duplicate sequence id {}", rec.id)));
            }
            if rec.joints.iter().any(|p| !p.is_finite()) {
                return Err(Error::Dataset(format!("sequence {}: non-finite joint", rec.id)));
            }
            let maps = rec.confidence.iter().flatten().chain(rec.pafs.iter().flatten());
            for rel in rec.flows.iter().chain(maps) {
                if !self.root.join(rel).is_file() {
                    return Err(Error::Dataset(format!(
                        "sequence {}: missing file {}",
                        rec.id,
                        self.root.join(rel).display()
                    )));
                }
            }
            if rec.confidence.is_some() != rec.pafs.is_some() {
                return Err(Error::Dataset(format!(
                    "sequence {}: confidence and pafs must be given together",
                    rec.id
                )));
            }
        }
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn image_dims(&self) -> [(u32, u32); FRAMES_PER_SEQUENCE] {
        let [w, h] = self.manifest.image_size;
        [(w, h); FRAMES_PER_SEQUENCE]
    }

    pub fn sequences(&self, split: Split) -> impl Iterator<Item = &SequenceRecord> {
        self.manifest.sequences.iter().filter(move |s| s.split == split)
    }

    pub fn has_maps(&self, split: Split) -> bool {
        self.sequences(split).all(|s| s.confidence.is_some())
    }

    pub fn load_flows(&self, rec: &SequenceRecord) -> Result<[Tensor<f32>; 2]> {
        let a = read_tensor(self.root.join(&rec.flows[0]))?;
        let b = read_tensor(self.root.join(&rec.flows[1]))?;
        Ok([a, b])
    }

    /// The three frames' part maps, or a dataset error if the sequence has none.
    pub fn load_maps(&self, rec: &SequenceRecord) -> Result<Vec<PartMaps>> {
        let (Some(conf), Some(pafs)) = (&rec.confidence, &rec.pafs) else {
            return Err(Error::Dataset(format!("sequence {} has no part maps", rec.id)));
        };
        conf.iter()
            .zip(pafs)
            .map(|(c, p)| PartMaps::load(self.root.join(c), self.root.join(p), self.manifest.stride))
            .collect()
    }
}
