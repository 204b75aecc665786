//! Two-stream hockey action recognition from part maps, part affinity
//! fields, and optical flow.
//!
//! The pipeline decodes one pose per frame ([`pose`]), turns three poses into
//! a latent joint vector ([`feature`]), runs it together with a small
//! convolutional flow branch through a fully-connected classifier
//! ([`model`]), and scores the result ([`eval`]). [`synth`] produces planted
//! data for every stage.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod feature;
pub mod model;
pub mod nn;
pub mod pose;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use feature::LatentFeature;
pub use model::{ActionLabel, ModelConfig, TrainConfig, TwoStreamNet};
pub use pose::{Joint, JointId, LimbTree, PartMaps, Pose};
pub use tensor::Tensor;
