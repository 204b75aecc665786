use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::config::{ActionLabel, JointSource, ModelConfig, TrainConfig, NUM_CLASSES};
use super::net::{prepare_flow_input, Batch, TwoStreamNet};
use crate::augment::augment_sequence;
use crate::dataset::{Dataset, SequenceRecord, Split};
use crate::error::{Error, Result};
use crate::feature::{featurize_sequence, LatentFeature};
use crate::nn::{one_hot, sgd_momentum_step, OptimizerState, SgdConfig};
use crate::pose::{decode_sequence, Pose};
use crate::synth::stream_rng;
use crate::tensor::Tensor;

pub const RANKING_FILE: &str = "ranking.json";
const SHUFFLE_STREAM: u64 = 1 << 62;
const DROPOUT_STREAM: u64 = 1 << 63;
const EVAL_BATCH: usize = 32;

/// A ready-to-classify sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub label: ActionLabel,
    pub latent: LatentFeature,
    /// `[S, S, 4]` stacked flow input for flow models.
    pub flow: Option<Tensor<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSplit {
    pub examples: Vec<Example>,
    /// Sequences dropped for a degenerate head segment.
    pub skipped: usize,
}

fn joints_for(ds: &Dataset, rec: &SequenceRecord, source: JointSource) -> Result<Vec<Pose>> {
    match source {
        JointSource::Gt => Ok(rec.joints.to_vec()),
        JointSource::Pred => decode_sequence(&ds.load_maps(rec)?, &ds.manifest().limbs),
    }
}

fn flow_input(ds: &Dataset, rec: &SequenceRecord, cfg: &ModelConfig) -> Result<Option<Tensor<f32>>> {
    if !cfg.use_flow {
        return Ok(None);
    }
    let [a, b] = ds.load_flows(rec)?;
    prepare_flow_input(&a, &b, cfg.flow_size).map(Some)
}

/// Featurizes every sequence of `split` for a model with configuration `cfg`.
pub fn prepare_examples(ds: &Dataset, split: Split, cfg: &ModelConfig, joints: JointSource) -> Result<PreparedSplit> {
    let dims = ds.image_dims();
    let mut examples = Vec::new();
    let mut skipped = 0;
    for rec in ds.sequences(split) {
        let poses = joints_for(ds, rec, joints)?;
        let latent = match featurize_sequence(&poses, &dims, cfg.use_stick) {
            Ok(l) => l,
            Err(Error::DegenerateHead) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        examples.push(Example {
            id: rec.id.clone(),
            label: rec.action,
            latent,
            flow: flow_input(ds, rec, cfg)?,
        });
    }
    if skipped > 0 {
        log::warn!("{split}: skipped {skipped} sequences with a degenerate head segment");
    }
    Ok(PreparedSplit { examples, skipped })
}

/// Arg-max class per row of a `[B, 4]` probability matrix (ties to the lower index).
pub(crate) fn argmax_rows(probs: &Tensor<f32>) -> Vec<usize> {
    probs
        .data()
        .chunks_exact(NUM_CLASSES)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

/// Predicted labels for a list of examples, with dropout disabled.
pub fn classify(net: &TwoStreamNet<f32>, examples: &[Example]) -> Result<Vec<ActionLabel>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(EVAL_BATCH) {
        let batch = Batch::stack(chunk.iter().map(|e| (e.latent.as_slice(), e.flow.as_ref())))?;
        let (probs, _) = net.forward(&batch, None)?;
        out.extend(argmax_rows(&probs).into_iter().map(|i| ActionLabel::ALL[i]));
    }
    Ok(out)
}

fn accuracy(net: &TwoStreamNet<f32>, examples: &[Example]) -> Result<f64> {
    let preds = classify(net, examples)?;
    let correct = preds.iter().zip(examples).filter(|(p, e)| **p == e.label).count();
    Ok(correct as f64 / examples.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingEntry {
    pub rank: usize,
    pub epoch: usize,
    pub val_accuracy: f64,
    pub checkpoint: String,
}

/// Contents of `ranking.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seed: u64,
    pub ranking: Vec<RankingEntry>,
    pub history: Vec<EpochRecord>,
    pub skipped: usize,
}

impl Ranking {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RANKING_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(&path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeptCheckpoint {
    pub epoch: usize,
    pub val_accuracy: f64,
    pub net: TwoStreamNet<f32>,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Best checkpoints by validation accuracy, ties to the earlier epoch.
    pub kept: Vec<KeptCheckpoint>,
    pub history: Vec<EpochRecord>,
    pub skipped: usize,
}

struct TrainItem {
    label: ActionLabel,
    poses: [Pose; 3],
    flows: Vec<Tensor<f32>>,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch}.ckpt")
}

/// Trains a fresh network on the train split and ranks every epoch by
/// validation accuracy.
///
/// Training inputs are ground-truth joints, augmented per example from
/// `(seed, epoch, index)`. With `out`, every epoch is saved as
/// `out/epoch_{k}.ckpt` and the ranking as `out/ranking.json`.
pub fn train(ds: &Dataset, model_cfg: &ModelConfig, cfg: &TrainConfig, seed: u64, out: Option<&Path>) -> Result<TrainOutcome> {
    model_cfg.validate()?;
    cfg.validate()?;
    let mut outcome = TrainOutcome {
        kept: Vec::new(),
        history: Vec::new(),
        skipped: 0,
    };
    if cfg.epochs == 0 {
        return Ok(outcome);
    }

    let dims = ds.image_dims();
    let [w, h] = ds.manifest().image_size;
    let mut items = Vec::new();
    for rec in ds.sequences(Split::Train) {
        if featurize_sequence(&rec.joints, &dims, model_cfg.use_stick).is_err() {
            outcome.skipped += 1;
            continue;
        }
        let flows = if model_cfg.use_flow {
            ds.load_flows(rec)?.to_vec()
        } else {
            Vec::new()
        };
        items.push(TrainItem {
            label: rec.action,
            poses: rec.joints,
            flows,
        });
    }
    if outcome.skipped > 0 {
        log::warn!("train: skipped {} sequences with a degenerate head segment", outcome.skipped);
    }
    let val = prepare_examples(ds, Split::Val, model_cfg, cfg.validation_joints)?;
    outcome.skipped += val.skipped;
    if items.is_empty() || val.examples.is_empty() {
        return Err(Error::Dataset(format!(
            "need train and validation sequences, have {} and {}",
            items.len(),
            val.examples.len()
        )));
    }

    let mut net = TwoStreamNet::<f32>::new(model_cfg.clone())?;
    let sgd = SgdConfig {
        lr: cfg.lr,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    let mut opt = OptimizerState::new(net.parameters(), sgd)?;
    let mut dropout_rng = stream_rng(seed, DROPOUT_STREAM);
    let aug_seed = seed ^ cfg.augment.seed;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut stream_rng(seed, SHUFFLE_STREAM | epoch as u64));
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut latents = Vec::with_capacity(chunk.len());
            let mut flows = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let item = &items[i];
                let mut rng = stream_rng(aug_seed, ((epoch as u64) << 32) | i as u64);
                let a = augment_sequence(&item.poses, &item.flows, (w, h), &cfg.augment, &mut rng)?;
                // Jitter can in principle collapse the head segment; fall back to the clean pose.
                let latent = featurize_sequence(&a.poses, &dims, model_cfg.use_stick)
                    .or_else(|_| featurize_sequence(&item.poses, &dims, model_cfg.use_stick))?;
                latents.push(latent);
                flows.push(if model_cfg.use_flow {
                    Some(prepare_flow_input(&a.flows[0], &a.flows[1], model_cfg.flow_size)?)
                } else {
                    None
                });
                labels.push(item.label.index());
            }
            let batch = Batch::stack(latents.iter().map(LatentFeature::as_slice).zip(flows.iter().map(Option::as_ref)))?;
            let (loss, grads) = net.loss_and_gradients_with(&batch, &one_hot(&labels, NUM_CLASSES)?, Some(&mut dropout_rng))?;
            let grads: Vec<&Tensor<f32>> = grads.iter().collect();
            sgd_momentum_step(&mut net.parameters_mut(), &grads, &mut opt)?;
            loss_sum += loss;
            batches += 1;
        }

        let val_accuracy = accuracy(&net, &val.examples)?;
        let train_loss = loss_sum / batches as f64;
        log::info!("epoch {epoch}: loss {train_loss:.4}, val accuracy {val_accuracy:.4}");
        outcome.history.push(EpochRecord {
            epoch,
            train_loss,
            val_accuracy,
        });
        let path = match out {
            Some(dir) => {
                let p = dir.join(checkpoint_name(epoch));
                save_checkpoint(&net, &p, seed, epoch, val_accuracy)?;
                Some(p)
            }
            None => None,
        };
        let rank = outcome.kept.iter().take_while(|k| k.val_accuracy >= val_accuracy).count();
        if rank < cfg.keep_top {
            outcome.kept.insert(
                rank,
                KeptCheckpoint {
                    epoch,
                    val_accuracy,
                    net: net.clone(),
                    path,
                },
            );
            outcome.kept.truncate(cfg.keep_top);
        }
    }

    if let Some(dir) = out {
        let ranking = Ranking {
            model: model_cfg.clone(),
            train: cfg.clone(),
            seed,
            ranking: outcome
                .kept
                .iter()
                .enumerate()
                .map(|(i, k)| RankingEntry {
                    rank: i + 1,
                    epoch: k.epoch,
                    val_accuracy: k.val_accuracy,
                    checkpoint: checkpoint_name(k.epoch),
                })
                .collect(),
            history: outcome.history.clone(),
            skipped: outcome.skipped,
        };
        let path = dir.join(RANKING_FILE);
        let text = serde_json::to_string_pretty(&ranking).expect("ranking serializes");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(outcome)
}
