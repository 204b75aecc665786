use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use hstream_core::augment::AugmentConfig;
use hstream_core::dataset::{Dataset, Split};
use hstream_core::eval::{evaluate_checkpoints, pckh_report, ClassificationReport};
use hstream_core::model::{load_checkpoint, prepare_examples, JointSource, KeptCheckpoint, Ranking};
use hstream_core::pose::decode_sequence;
use hstream_core::synth::{gen_dataset, SynthConfig};
use hstream_core::tensor::write_tensor;
use hstream_core::{ActionLabel, Error, LimbTree, ModelConfig, Pose, Tensor, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::gradcheck::gradcheck_suite;
use crate::{
    io_err, CliError, CliResult, Command, DecodeArgs, EvalArgs, FeaturizeArgs, GradcheckArgs, PckhArgs, RunConfig,
    SynthArgs, TrainArgs, RUN_CONFIG_FILE,
};

/// Output of `decode`, input of `pckh`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosesFile {
    pub sequences: Vec<DecodedSequence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodedSequence {
    pub id: String,
    pub split: Split,
    pub poses: Vec<Pose>,
}

/// `features.json`, describing the per-split matrices written by `featurize`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureIndex {
    pub include_stick: bool,
    pub joints: JointSource,
    pub feature_len: usize,
    pub splits: Vec<FeatureSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSplit {
    pub split: Split,
    /// `[N, feature_len]` tensor, absent when the split is empty.
    pub file: Option<PathBuf>,
    pub ids: Vec<String>,
    pub labels: Vec<ActionLabel>,
    pub skipped: usize,
}

/// Output of `eval`: one report per checkpoint directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub joints: JointSource,
    pub top: usize,
    pub runs: Vec<RunReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ckpts: PathBuf,
    pub seed: u64,
    /// Sequences left out for a degenerate head segment.
    pub skipped: usize,
    pub report: ClassificationReport,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for run in &self.runs {
            let _ = writeln!(s, "== {} (seed {})", run.ckpts.display(), run.seed);
            let _ = writeln!(s, "{}", run.report.to_table());
        }
        if self.runs.len() > 1 {
            let _ = writeln!(s, "{:<12} {:>14}", "Model", "Mean accuracy");
            for run in &self.runs {
                let tag = run.report.model.as_ref().map_or_else(|| "?".to_string(), ModelConfig::tag);
                let _ = writeln!(s, "{:<12} {:>14}", tag, format!("{:.2}%", 100.0 * run.report.mean.accuracy));
            }
        }
        s
    }
}

pub(crate) fn absolutize(command: Command, cwd: &Path) -> Command {
    let abs = |p: PathBuf| if p.is_absolute() { p } else { cwd.join(p) };
    match command {
        Command::Synth(mut a) => {
            a.out = abs(a.out);
            Command::Synth(a)
        }
        Command::Decode(mut a) => {
            a.dataset = abs(a.dataset);
            a.out = abs(a.out);
            a.limbs = a.limbs.map(abs);
            Command::Decode(a)
        }
        Command::Featurize(mut a) => {
            a.dataset = abs(a.dataset);
            a.out = abs(a.out);
            Command::Featurize(a)
        }
        Command::Train(mut a) => {
            a.dataset = abs(a.dataset);
            a.out = abs(a.out);
            Command::Train(a)
        }
        Command::Eval(mut a) => {
            a.dataset = abs(a.dataset);
            a.ckpts = a.ckpts.into_iter().map(abs).collect();
            a.report = abs(a.report);
            Command::Eval(a)
        }
        Command::Pckh(mut a) => {
            a.pred = abs(a.pred);
            a.dataset = abs(a.dataset);
            a.report = abs(a.report);
            Command::Pckh(a)
        }
        Command::Gradcheck(mut a) => {
            a.out = a.out.map(abs);
            Command::Gradcheck(a)
        }
        c @ Command::Rerun(_) => c,
    }
}

/// Prints the run configuration and writes it to `dir/run_config.json`.
fn record(invocation: &Command, resolved: serde_json::Value, dir: Option<&Path>) -> CliResult<()> {
    let rc = RunConfig {
        version: env!("CARGO_PKG_VERSION").to_string(),
        invocation: invocation.clone(),
        resolved,
    };
    let text = serde_json::to_string_pretty(&rc).expect("run config serializes");
    println!("{text}");
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(RUN_CONFIG_FILE);
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    }
    Ok(())
}

fn parent(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Dataset(format!("{}: {e}", path.display())).into())
}

pub(crate) fn synth(a: &SynthArgs, inv: &Command) -> CliResult<()> {
    let cfg = SynthConfig {
        sequences_per_class: a.per_class,
        seed: a.seed,
        with_maps: a.with_maps,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    record(inv, json!({ "synth": cfg }), Some(&a.out))?;
    let manifest = gen_dataset(&cfg, &a.out)?;
    println!("wrote {} sequences to {}", manifest.sequences.len(), a.out.display());
    Ok(())
}

pub(crate) fn decode(a: &DecodeArgs, inv: &Command) -> CliResult<()> {
    let ds = Dataset::open(&a.dataset)?;
    let tree = match &a.limbs {
        Some(p) => LimbTree::parse(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?,
        None => ds.manifest().limbs.clone(),
    };
    record(inv, json!({ "limbs": tree, "split": a.split }), Some(parent(&a.out)))?;
    let mut sequences = Vec::new();
    for rec in ds.manifest().sequences.iter().filter(|r| a.split.map_or(true, |s| r.split == s)) {
        let poses = decode_sequence(&ds.load_maps(rec)?, &tree)?;
        sequences.push(DecodedSequence {
            id: rec.id.clone(),
            split: rec.split,
            poses,
        });
    }
    write_json(&a.out, &PosesFile { sequences: sequences.clone() })?;
    println!("decoded {} sequences into {}", sequences.len(), a.out.display());
    Ok(())
}

pub(crate) fn featurize(a: &FeaturizeArgs, inv: &Command) -> CliResult<()> {
    let cfg = ModelConfig {
        use_stick: !a.no_stick,
        use_flow: false,
        ..ModelConfig::default()
    };
    record(inv, json!({ "include_stick": cfg.use_stick, "joints": a.joints }), Some(&a.out))?;
    let ds = Dataset::open(&a.dataset)?;
    let feature_len = hstream_core::feature::feature_len(cfg.use_stick);
    let mut splits = Vec::new();
    for split in Split::ALL {
        let prepared = prepare_examples(&ds, split, &cfg, a.joints)?;
        let n = prepared.examples.len();
        let file = if n == 0 {
            None
        } else {
            let data = prepared.examples.iter().flat_map(|e| e.latent.as_slice().iter().copied()).collect();
            let rel = PathBuf::from(format!("{split}.htsr"));
            write_tensor(&Tensor::new(vec![n, feature_len], data)?, a.out.join(&rel))?;
            Some(rel)
        };
        println!("{split}: {n} sequences, {} skipped", prepared.skipped);
        splits.push(FeatureSplit {
            split,
            file,
            ids: prepared.examples.iter().map(|e| e.id.clone()).collect(),
            labels: prepared.examples.iter().map(|e| e.label).collect(),
            skipped: prepared.skipped,
        });
    }
    let index = FeatureIndex {
        include_stick: cfg.use_stick,
        joints: a.joints,
        feature_len,
        splits,
    };
    write_json(&a.out.join("features.json"), &index)
}

pub(crate) fn train(a: &TrainArgs, inv: &Command) -> CliResult<()> {
    let model = ModelConfig {
        use_flow: !a.no_flow,
        use_stick: !a.no_stick,
        flow_size: a.flow_size,
        dropout_rate: a.dropout,
        seed: a.seed,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        momentum: a.momentum,
        lr: a.lr,
        weight_decay: a.weight_decay,
        epochs: a.epochs,
        keep_top: a.keep_top,
        augment: if a.no_augment {
            AugmentConfig::identity()
        } else {
            AugmentConfig::default()
        },
        validation_joints: a.val_joints,
    };
    model.validate()?;
    cfg.validate()?;
    record(inv, json!({ "model": model, "train": cfg, "seed": a.seed }), Some(&a.out))?;
    let ds = Dataset::open(&a.dataset)?;
    let outcome = hstream_core::model::train(&ds, &model, &cfg, a.seed, Some(&a.out))?;
    for (i, k) in outcome.kept.iter().enumerate() {
        println!("rank {}: epoch {} val accuracy {:.4}", i + 1, k.epoch, k.val_accuracy);
    }
    Ok(())
}

pub(crate) fn eval(a: &EvalArgs, inv: &Command) -> CliResult<()> {
    if a.top == 0 {
        return Err(CliError::Usage("--top must be positive".into()));
    }
    record(
        inv,
        json!({ "top": a.top, "split": a.split, "joints": a.joints }),
        Some(parent(&a.report)),
    )?;
    let ds = Dataset::open(&a.dataset)?;
    let mut runs = Vec::new();
    for dir in &a.ckpts {
        let ranking = Ranking::load(dir)?;
        if ranking.ranking.len() < a.top {
            return Err(Error::Dataset(format!(
                "{} ranks {} checkpoints, fewer than --top {}",
                dir.display(),
                ranking.ranking.len(),
                a.top
            ))
            .into());
        }
        let mut kept = Vec::with_capacity(a.top);
        for entry in &ranking.ranking[..a.top] {
            let path = dir.join(&entry.checkpoint);
            let (net, manifest) = load_checkpoint(&path)?;
            kept.push(KeptCheckpoint {
                epoch: manifest.epoch,
                val_accuracy: manifest.val_accuracy,
                net,
                path: Some(path),
            });
        }
        let prepared = prepare_examples(&ds, a.split, &ranking.model, a.joints)?;
        if prepared.examples.is_empty() {
            return Err(Error::Dataset(format!("no usable {} sequences", a.split)).into());
        }
        runs.push(RunReport {
            ckpts: dir.clone(),
            seed: ranking.seed,
            skipped: prepared.skipped,
            report: evaluate_checkpoints(&kept, &prepared.examples, &ranking.model)?,
        });
    }
    let report = EvalReport {
        split: a.split,
        joints: a.joints,
        top: a.top,
        runs,
    };
    let table = report.to_table();
    print!("{table}");
    write_json(&a.report, &report)?;
    write_text(&a.report.with_extension("txt"), &table)
}

pub(crate) fn pckh(a: &PckhArgs, inv: &Command) -> CliResult<()> {
    record(inv, json!({}), Some(parent(&a.report)))?;
    let pred: PosesFile = read_json(&a.pred)?;
    let ds = Dataset::open(&a.dataset)?;
    let by_id: HashMap<&str, &[Pose; 3]> = ds.manifest().sequences.iter().map(|r| (r.id.as_str(), &r.joints)).collect();
    let mut pairs = Vec::new();
    for seq in &pred.sequences {
        let gt = by_id
            .get(seq.id.as_str())
            .ok_or_else(|| Error::Dataset(format!("sequence {} is not in the dataset", seq.id)))?;
        if seq.poses.len() != gt.len() {
            return Err(Error::Dataset(format!("sequence {} has {} poses, expected {}", seq.id, seq.poses.len(), gt.len())).into());
        }
        pairs.extend(seq.poses.iter().zip(gt.iter()));
    }
    let report = pckh_report(pairs);
    let table = report.to_table();
    print!("{table}");
    write_json(&a.report, &report)?;
    write_text(&a.report.with_extension("txt"), &table)
}

pub(crate) fn gradcheck(a: &GradcheckArgs, inv: &Command) -> CliResult<()> {
    record(inv, json!({ "seed": a.seed, "epsilon": a.epsilon }), a.out.as_deref())?;
    let summary = gradcheck_suite(a.seed, a.epsilon)?;
    for c in &summary.checks {
        println!(
            "{:<6} {:>6} params  max rel. error {:.3e}  (< {:.0e})  {}",
            c.name,
            c.checked,
            c.max_rel_error,
            c.tolerance,
            if c.passed { "ok" } else { "FAILED" }
        );
    }
    if let Some(dir) = &a.out {
        write_json(&dir.join("gradcheck.json"), &summary)?;
    }
    if summary.passed() {
        Ok(())
    } else {
        Err(CliError::CheckFailed("gradient check failed".into()))
    }
}
