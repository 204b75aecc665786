//! PCKh@0.5 pose scoring, per-class precision/recall, accuracy, and
//! row-normalized confusion matrices averaged over checkpoints.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{classify, ActionLabel, Example, KeptCheckpoint, ModelConfig, NUM_CLASSES};
use crate::pose::{JointId, Pose, NUM_JOINTS};

const MIN_HEAD_LENGTH: f64 = 1e-6;
const PCKH_FRACTION: f64 = 0.5;

/// Per-joint PCKh@0.5 outcome: `None` where the ground-truth joint is not
/// annotated, otherwise whether the prediction lies strictly within half a
/// ground-truth head segment.
pub fn pckh(pred: &Pose, gt: &Pose) -> Result<[Option<bool>; NUM_JOINTS]> {
    let len = gt.head_length().ok_or(Error::DegenerateHead)?;
    if !(len >= MIN_HEAD_LENGTH) {
        return Err(Error::DegenerateHead);
    }
    let threshold = PCKH_FRACTION * len;
    let mut out = [None; NUM_JOINTS];
    for (slot, (p, g)) in out.iter_mut().zip(pred.joints.iter().zip(&gt.joints)) {
        if g.valid {
            *slot = Some(p.valid && p.distance(g) < threshold);
        }
    }
    Ok(out)
}

/// One row of the part table: a single joint or a left/right (top/end) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartRow {
    pub part: String,
    pub first: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second: Option<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckhReport {
    /// Fraction correct per joint, 0 where nothing was evaluated.
    pub per_joint: [f64; NUM_JOINTS],
    pub correct: [usize; NUM_JOINTS],
    pub evaluated: [usize; NUM_JOINTS],
    pub overall: f64,
    pub total_correct: usize,
    pub total_evaluated: usize,
    /// Frames skipped for a degenerate ground-truth head segment.
    pub excluded_frames: usize,
    pub parts: Vec<PartRow>,
}

const PARTS: [(&str, JointId, Option<JointId>); 11] = [
    ("Head", JointId::HeadTop, None),
    ("Upper Neck", JointId::UpperNeck, None),
    ("Thorax", JointId::Thorax, None),
    ("Shoulder", JointId::LShoulder, Some(JointId::RShoulder)),
    ("Elbow", JointId::LElbow, Some(JointId::RElbow)),
    ("Wrist", JointId::LWrist, Some(JointId::RWrist)),
    ("Pelvis", JointId::Pelvis, None),
    ("Hip", JointId::LHip, Some(JointId::RHip)),
    ("Knee", JointId::LKnee, Some(JointId::RKnee)),
    ("Ankle", JointId::LAnkle, Some(JointId::RAnkle)),
    ("Stick", JointId::StickTop, Some(JointId::StickEnd)),
];

/// Aggregates PCKh over `(pred, gt)` frame pairs.
pub fn pckh_report<'a>(pairs: impl IntoIterator<Item = (&'a Pose, &'a Pose)>) -> PckhReport {
    let mut correct = [0usize; NUM_JOINTS];
    let mut evaluated = [0usize; NUM_JOINTS];
    let mut excluded_frames = 0;
    for (pred, gt) in pairs {
        match pckh(pred, gt) {
            Ok(flags) => {
                for (j, f) in flags.iter().enumerate() {
                    if let Some(ok) = f {
                        evaluated[j] += 1;
                        correct[j] += *ok as usize;
                    }
                }
            }
            Err(_) => excluded_frames += 1,
        }
    }
    let frac = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let per_joint: [f64; NUM_JOINTS] = std::array::from_fn(|j| frac(correct[j], evaluated[j]));
    let total_correct = correct.iter().sum();
    let total_evaluated = evaluated.iter().sum();
    let parts = PARTS
        .iter()
        .map(|&(name, a, b)| {
            let first = per_joint[a.index()];
            let second = b.map(|b| per_joint[b.index()]);
            PartRow {
                part: name.to_string(),
                first,
                second,
                mean: second.map_or(first, |s| (first + s) / 2.0),
            }
        })
        .collect();
    PckhReport {
        per_joint,
        correct,
        evaluated,
        overall: frac(total_correct, total_evaluated),
        total_correct,
        total_evaluated,
        excluded_frames,
        parts,
    }
}

impl PckhReport {
    /// Part table with left/right (top/end) columns and an overall row.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12} {:>9} {:>9} {:>9}", "Part", "L / top", "R / end", "Mean");
        for row in &self.parts {
            let second = row.second.map_or_else(|| "-".to_string(), |v| format!("{:.2}%", 100.0 * v));
            let _ = writeln!(
                s,
                "{:<12} {:>9} {:>9} {:>9}",
                row.part,
                format!("{:.2}%", 100.0 * row.first),
                second,
                format!("{:.2}%", 100.0 * row.mean)
            );
        }
        let _ = writeln!(s, "{:<12} {:>29}", "Overall", format!("{:.2}%", 100.0 * self.overall));
        s
    }
}

/// Metrics of one classifier over one labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub precision: [f64; NUM_CLASSES],
    /// False where a class was never predicted; its precision is reported as 0.
    pub precision_defined: [bool; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    /// False where a class has no examples; its recall is reported as 0.
    pub recall_defined: [bool; NUM_CLASSES],
    pub accuracy: f64,
    /// Row `c`: percentage of true class `c` predicted as each class.
    pub confusion: [[f64; NUM_CLASSES]; NUM_CLASSES],
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
    pub support: [usize; NUM_CLASSES],
    pub total: usize,
}

pub fn classification_metrics(preds: &[ActionLabel], gts: &[ActionLabel]) -> Result<ClassificationMetrics> {
    if preds.len() != gts.len() {
        return Err(Error::Argument(format!(
            "{} predictions for {} labels",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Argument("no examples to score".into()));
    }
    let mut counts = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    for (p, g) in preds.iter().zip(gts) {
        counts[g.index()][p.index()] += 1;
    }
    let support: [usize; NUM_CLASSES] = std::array::from_fn(|c| counts[c].iter().sum());
    let predicted: [usize; NUM_CLASSES] = std::array::from_fn(|c| counts.iter().map(|row| row[c]).sum());
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let correct: usize = (0..NUM_CLASSES).map(|c| counts[c][c]).sum();
    Ok(ClassificationMetrics {
        precision: std::array::from_fn(|c| ratio(counts[c][c], predicted[c])),
        precision_defined: predicted.map(|n| n > 0),
        recall: std::array::from_fn(|c| ratio(counts[c][c], support[c])),
        recall_defined: support.map(|n| n > 0),
        accuracy: ratio(correct, preds.len()),
        confusion: std::array::from_fn(|g| std::array::from_fn(|p| 100.0 * ratio(counts[g][p], support[g]))),
        counts,
        support,
        total: preds.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
    pub metrics: ClassificationMetrics,
}

/// Arithmetic means across checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub accuracy: f64,
    pub confusion: [[f64; NUM_CLASSES]; NUM_CLASSES],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    pub checkpoints: Vec<CheckpointMetrics>,
    pub mean: MeanMetrics,
}

impl ClassificationReport {
    pub fn from_checkpoints(model: Option<ModelConfig>, checkpoints: Vec<CheckpointMetrics>) -> Result<Self> {
        if checkpoints.is_empty() {
            return Err(Error::Argument("need at least one checkpoint".into()));
        }
        let n = checkpoints.len() as f64;
        let avg = |f: &dyn Fn(&ClassificationMetrics) -> f64| checkpoints.iter().map(|c| f(&c.metrics)).sum::<f64>() / n;
        let mean = MeanMetrics {
            precision: std::array::from_fn(|c| avg(&|m| m.precision[c])),
            recall: std::array::from_fn(|c| avg(&|m| m.recall[c])),
            accuracy: avg(&|m| m.accuracy),
            confusion: std::array::from_fn(|g| std::array::from_fn(|p| avg(&|m| m.confusion[g][p]))),
        };
        Ok(Self {
            model,
            checkpoints,
            mean,
        })
    }

    /// Per-class precision/recall, accuracy per checkpoint and on average,
    /// and the mean confusion matrix, as aligned text.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        if let Some(m) = &self.model {
            let _ = writeln!(s, "Model: {}\n", m.tag());
        }
        let _ = writeln!(s, "{:<10} {:>10} {:>10}", "Class", "Precision", "Recall");
        for a in ActionLabel::ALL {
            let i = a.index();
            let _ = writeln!(
                s,
                "{:<10} {:>10} {:>10}",
                a.name(),
                format!("{:.2}%", 100.0 * self.mean.precision[i]),
                format!("{:.2}%", 100.0 * self.mean.recall[i])
            );
        }
        let _ = writeln!(s);
        let mut header = String::new();
        let mut row = String::new();
        for (k, c) in self.checkpoints.iter().enumerate() {
            let _ = write!(header, " {:>9}", ordinal(k + 1));
            let _ = write!(row, " {:>9}", format!("{:.2}%", 100.0 * c.metrics.accuracy));
        }
        let _ = writeln!(s, "Accuracy {header} {:>9}", "Avg.");
        let _ = writeln!(s, "         {row} {:>9}", format!("{:.2}%", 100.0 * self.mean.accuracy));
        let _ = writeln!(s, "\nConfusion (% of true class, rows = truth)");
        let _ = write!(s, "{:<10}", "");
        for a in ActionLabel::ALL {
            let _ = write!(s, " {:>9}", a.name());
        }
        let _ = writeln!(s);
        for a in ActionLabel::ALL {
            let _ = write!(s, "{:<10}", a.name());
            for v in self.mean.confusion[a.index()] {
                let _ = write!(s, " {:>9.2}", v);
            }
            let _ = writeln!(s);
        }
        s
    }
}

fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (1, x) if x != 11 => "st",
        (2, x) if x != 12 => "nd",
        (3, x) if x != 13 => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

/// Single-run report: one checkpoint entry and means equal to it.
pub fn classification_report(preds: &[ActionLabel], gts: &[ActionLabel]) -> Result<ClassificationReport> {
    let metrics = classification_metrics(preds, gts)?;
    ClassificationReport::from_checkpoints(
        None,
        vec![CheckpointMetrics {
            epoch: None,
            val_accuracy: None,
            metrics,
        }],
    )
}

/// Scores every checkpoint on `examples` and averages the results.
pub fn evaluate_checkpoints(ckpts: &[KeptCheckpoint], examples: &[Example], model_cfg: &ModelConfig) -> Result<ClassificationReport> {
    if ckpts.is_empty() {
        return Err(Error::Argument("need at least one checkpoint".into()));
    }
    let gts: Vec<ActionLabel> = examples.iter().map(|e| e.label).collect();
    let mut out = Vec::with_capacity(ckpts.len());
    for k in ckpts {
        if !k.net.config().same_architecture(model_cfg) {
            return Err(Error::Contract(format!(
                "checkpoint of epoch {} is a {} model, expected {}",
                k.epoch,
                k.net.config().tag(),
                model_cfg.tag()
            )));
        }
        let preds = classify(&k.net, examples)?;
        out.push(CheckpointMetrics {
            epoch: Some(k.epoch),
            val_accuracy: Some(k.val_accuracy),
            metrics: classification_metrics(&preds, &gts)?,
        });
    }
    ClassificationReport::from_checkpoints(Some(model_cfg.clone()), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Joint;
    use ActionLabel::*;

    fn pose_with_head(len: f32) -> Pose {
        let mut p = Pose::default();
        for (i, j) in p.joints.iter_mut().enumerate() {
            *j = Joint::new(100.0 + i as f32 * 7.0, 200.0);
        }
        *p.joint_mut(JointId::HeadTop) = Joint::new(50.0, 50.0);
        *p.joint_mut(JointId::UpperNeck) = Joint::new(50.0, 50.0 + len);
        p
    }

    #[test]
    fn pckh_threshold_is_strict() {
        let gt = pose_with_head(10.0);
        assert!(pckh(&gt, &gt).unwrap().iter().all(|f| *f == Some(true)));
        let mut pred = gt;
        pred.joints[9].x += 4.9;
        pred.joints[10].x += 5.1;
        pred.joints[11].x += 5.0;
        let f = pckh(&pred, &gt).unwrap();
        assert_eq!(f[9], Some(true));
        assert_eq!(f[10], Some(false));
        assert_eq!(f[11], Some(false));
    }

    #[test]
    fn pckh_excludes_unannotated_and_degenerate() {
        let mut gt = pose_with_head(10.0);
        gt.joints[4].valid = false;
        let mut pred = gt;
        pred.joints[5].valid = false;
        let f = pckh(&pred, &gt).unwrap();
        assert_eq!(f[4], None);
        assert_eq!(f[5], Some(false));
        let flat = pose_with_head(0.0);
        assert!(matches!(pckh(&flat, &flat), Err(Error::DegenerateHead)));
        let r = pckh_report([(&pred, &gt), (&flat, &flat)]);
        assert_eq!(r.excluded_frames, 1);
        assert_eq!(r.total_evaluated, 17);
        assert_eq!(r.total_correct, 16);
        assert_eq!(r.parts.len(), 11);
    }

    #[test]
    fn hand_counted_example() {
        let m = classification_metrics(&[Forward, Backward, Backward, Backward], &[Forward, Forward, Backward, Backward]).unwrap();
        assert!((m.precision[1] - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.recall[0], 0.5);
        assert_eq!(m.accuracy, 0.75);
        assert!(!m.precision_defined[2]);
        assert_eq!(m.precision[2], 0.0);
        assert_eq!(m.confusion[0], [50.0, 50.0, 0.0, 0.0]);
    }

    #[test]
    fn perfect_predictions() {
        let labels = [Forward, Backward, Passing, Shooting, Passing];
        let m = classification_metrics(&labels, &labels).unwrap();
        assert_eq!(m.precision, [1.0; 4]);
        assert_eq!(m.recall, [1.0; 4]);
        for c in 0..4 {
            for p in 0..4 {
                assert_eq!(m.confusion[c][p], if c == p { 100.0 } else { 0.0 });
            }
        }
        assert!(classification_metrics(&labels[..2], &labels).is_err());
        let one = classification_metrics(&[Passing], &[Shooting]).unwrap();
        assert_eq!(one.accuracy, 0.0);
    }

    #[test]
    fn means_over_checkpoints() {
        let gts = [Forward, Backward, Passing, Shooting];
        let a = classification_metrics(&gts, &gts).unwrap();
        let b = classification_metrics(&[Forward, Forward, Passing, Passing], &gts).unwrap();
        let entry = |m: &ClassificationMetrics| CheckpointMetrics {
            epoch: None,
            val_accuracy: None,
            metrics: m.clone(),
        };
        let r = ClassificationReport::from_checkpoints(None, vec![entry(&a), entry(&b), entry(&a)]).unwrap();
        assert!((r.mean.accuracy - (1.0 + 0.5 + 1.0) / 3.0).abs() < 1e-12);
        let same = ClassificationReport::from_checkpoints(None, vec![entry(&b); 3]).unwrap();
        assert_eq!(same.mean.accuracy, b.accuracy);
        assert_eq!(same.mean.confusion, b.confusion);
        assert!(r.to_table().contains("3rd"));
    }
}
