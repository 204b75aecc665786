use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionLabel {
    Forward,
    Backward,
    Passing,
    Shooting,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; NUM_CLASSES] = [
        ActionLabel::Forward,
        ActionLabel::Backward,
        ActionLabel::Passing,
        ActionLabel::Shooting,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionLabel::Forward => "forward",
            ActionLabel::Backward => "backward",
            ActionLabel::Passing => "passing",
            ActionLabel::Shooting => "shooting",
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown action {s:?}")))
    }
}

/// Architecture of a [`TwoStreamNet`](super::TwoStreamNet).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub use_flow: bool,
    pub use_stick: bool,
    /// Side of the square flow input.
    pub flow_size: usize,
    /// Output channels of each 3×3 conv / ReLU / 2×2 max-pool stage.
    pub flow_channels: Vec<usize>,
    /// Widths of the ReLU dense layers closing the flow branch.
    pub flow_dense: Vec<usize>,
    /// Widths of the four fusion layers.
    pub fusion: Vec<usize>,
    pub dropout_rate: f32,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            use_flow: true,
            use_stick: true,
            flow_size: 56,
            flow_channels: vec![16, 32, 64],
            flow_dense: vec![256, 64],
            fusion: vec![100, 50, 20, 4],
            dropout_rate: 0.3,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.fusion.len() != 4 {
            return bad(format!("fusion needs 4 widths, got {:?}", self.fusion));
        }
        if self.fusion[3] != NUM_CLASSES {
            return bad(format!("last fusion width must be {NUM_CLASSES}, got {}", self.fusion[3]));
        }
        if self.fusion[1] != 50 {
            return bad(format!(
                "dropout follows the 50-unit fusion layer; second width is {}",
                self.fusion[1]
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout rate {} not in [0, 1)", self.dropout_rate));
        }
        let mut widths = self.fusion.clone();
        if self.use_flow {
            widths.extend(&self.flow_channels);
            widths.extend(&self.flow_dense);
        }
        if widths.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.use_flow {
            if self.flow_channels.is_empty() || self.flow_dense.is_empty() {
                return bad("the flow branch needs conv and dense layers".into());
            }
            if self.flow_size >> self.flow_channels.len() == 0 {
                return bad(format!(
                    "flow size {} vanishes after {} poolings",
                    self.flow_size,
                    self.flow_channels.len()
                ));
            }
        }
        Ok(())
    }

    /// Same layers and shapes; seeds may differ.
    pub fn same_architecture(&self, other: &ModelConfig) -> bool {
        ModelConfig { seed: 0, ..self.clone() } == ModelConfig { seed: 0, ..other.clone() }
    }

    /// Short `±ST, ±OF` tag.
    pub fn tag(&self) -> String {
        format!(
            "{}ST, {}OF",
            if self.use_stick { '+' } else { '-' },
            if self.use_flow { '+' } else { '-' }
        )
    }
}

/// Where joint locations come from when building validation or test inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointSource {
    /// Annotated ground truth.
    #[default]
    Gt,
    /// Decoded from the sequence's part maps.
    Pred,
}

impl FromStr for JointSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" => Ok(JointSource::Gt),
            "pred" => Ok(JointSource::Pred),
            _ => Err(Error::Argument(format!("joint source must be gt or pred, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub momentum: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub keep_top: usize,
    pub augment: AugmentConfig,
    pub validation_joints: JointSource,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            momentum: 0.9,
            lr: 1e-2,
            weight_decay: 0.0,
            epochs: 30,
            keep_top: 3,
            augment: AugmentConfig::default(),
            validation_joints: JointSource::Gt,
        }
    }
}

impl TrainConfig {
    /// `epochs == 0` is allowed and means "do nothing".
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 || self.keep_top == 0 {
            return bad("batch size and keep_top must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("momentum must be in [0, 1) and weight decay non-negative".into());
        }
        if self.epochs > 0 && self.epochs < self.keep_top {
            return bad(format!("{} epochs cannot fill the top {}", self.epochs, self.keep_top));
        }
        self.augment.validate()
    }
}
