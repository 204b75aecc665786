use hstream_core::model::TwoStreamNet;
use hstream_core::nn::{gradient_check_widened, one_hot, GradCheckReport, LayerSpec, Sequential};
use hstream_core::synth::stream_rng;
use hstream_core::{ModelConfig, Result, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const DENSE_TOLERANCE: f64 = 1e-4;
pub const HEAD_TOLERANCE: f64 = 1e-2;

const DENSE_INPUTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub checked: usize,
    pub passed: bool,
    pub detail: GradCheckReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckSummary {
    pub seed: u64,
    pub epsilon: f64,
    pub checks: Vec<CheckResult>,
}

impl GradcheckSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// The full two-stream layout with every width cut down so each parameter
/// can be perturbed in well under a second.
pub fn reduced_model(seed: u64) -> ModelConfig {
    ModelConfig {
        flow_size: 16,
        flow_channels: vec![2, 2, 2],
        flow_dense: vec![8, 8],
        fusion: vec![16, 50, 8, 4],
        seed,
        ..ModelConfig::default()
    }
}

fn result(name: &str, tolerance: f64, detail: GradCheckReport) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        tolerance,
        max_rel_error: detail.max_rel_error,
        checked: detail.checked,
        passed: detail.max_rel_error < tolerance,
        detail,
    }
}

/// Checks the `f32` gradients of a single dense layer and of the fusion
/// head of [`reduced_model`] on one random example each.
///
/// Differences are taken on an `f64` copy of each network, perturbing the
/// `f32` weights by `epsilon`.
pub fn gradcheck_suite(seed: u64, epsilon: f64) -> Result<GradcheckSummary> {
    let mut rng = stream_rng(seed, 0);
    let mut checks = Vec::new();

    let dense: Sequential<f32> = Sequential::build(
        &[
            LayerSpec::Dense {
                inputs: DENSE_INPUTS,
                outputs: 4,
            },
            LayerSpec::Softmax,
        ],
        &mut rng,
    )?;
    let x = Tensor::from_fn(&[1, DENSE_INPUTS], |_| rng.random_range(-1.0f32..1.0))?;
    let y = one_hot(&[rng.random_range(0..4)], 4)?;
    let r = gradient_check_widened(&dense, &mut dense.cast::<f64>(), &x, &x.cast(), &y, epsilon, None)?;
    checks.push(result("dense", DENSE_TOLERANCE, r));

    let net = TwoStreamNet::<f32>::new(reduced_model(seed))?;
    let head = net.head();
    let x = Tensor::from_fn(&[1, net.fusion_input_len()], |_| rng.random_range(-1.0f32..1.0))?;
    let y = one_hot(&[rng.random_range(0..4)], 4)?;
    let r = gradient_check_widened(head, &mut head.cast::<f64>(), &x, &x.cast(), &y, epsilon, Some(seed))?;
    checks.push(result("head", HEAD_TOLERANCE, r));

    Ok(GradcheckSummary { seed, epsilon, checks })
}
