//! The two-stream classifier: a convolutional optical-flow branch whose
//! output is concatenated with the latent joint vector and fed through a
//! four-layer fully-connected head.

mod checkpoint;
mod config;
mod net;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointManifest, ParamEntry};
pub use config::{ActionLabel, JointSource, ModelConfig, TrainConfig, NUM_CLASSES};
pub use net::{predict, prepare_flow_input, Batch, NetCache, TwoStreamNet, FLOW_CHANNELS};
pub use train::{
    checkpoint_name, classify, prepare_examples, train, EpochRecord, Example, KeptCheckpoint, PreparedSplit, Ranking, RankingEntry,
    TrainOutcome, RANKING_FILE,
};
