use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// A model with a scalar training loss whose parameter gradients can be
/// verified numerically.
pub trait Differentiable<T: Scalar> {
    type Input;

    /// Parameters in the same order as the gradients returned below.
    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn loss(&self, input: &Self::Input, labels: &Tensor<T>, dropout_seed: Option<u64>) -> Result<f64>;

    fn loss_and_gradients(
        &self,
        input: &Self::Input,
        labels: &Tensor<T>,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<Tensor<T>>)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    /// `max |a - n| / max(|a|, |n|, 1e-8)` over every parameter.
    pub max_rel_error: f64,
    /// `(parameter tensor, element)` where the maximum occurred.
    pub worst: Option<(usize, usize)>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    pub checked: usize,
}

/// Compares analytic gradients to central differences for every parameter.
///
/// The step actually taken is measured after rounding to `T`, so the
/// difference quotient is not biased by the storage precision. A fixed
/// dropout seed makes every loss evaluation draw the same mask.
pub fn gradient_check<T: Scalar, N: Differentiable<T>>(
    net: &mut N,
    input: &N::Input,
    labels: &Tensor<T>,
    epsilon: f64,
    dropout_seed: Option<u64>,
) -> Result<GradCheckReport> {
    let (_, analytic) = net.loss_and_gradients(input, labels, dropout_seed)?;
    let analytic: Vec<Vec<f64>> = analytic.iter().map(|t| t.data().iter().map(|v| v.as_f64()).collect()).collect();
    compare(net, input, labels, &analytic, |v| T::from_f64(v).as_f64(), epsilon, dropout_seed)
}

/// Checks the analytic gradients of an `f32` network against central
/// differences taken on `wide`, the same network cast to `f64`.
///
/// Perturbed weights are rounded to `f32` before evaluation, so the
/// numerical side sees exactly the parameters the `f32` network could hold,
/// while the loss difference itself is free of `f32` cancellation noise.
pub fn gradient_check_widened<N: Differentiable<f32>, W: Differentiable<f64>>(
    net: &N,
    wide: &mut W,
    input: &N::Input,
    wide_input: &W::Input,
    labels: &Tensor<f32>,
    epsilon: f64,
    dropout_seed: Option<u64>,
) -> Result<GradCheckReport> {
    let (_, analytic) = net.loss_and_gradients(input, labels, dropout_seed)?;
    let analytic: Vec<Vec<f64>> = analytic.iter().map(|t| t.data().iter().map(|&v| v as f64).collect()).collect();
    let labels = labels.cast::<f64>();
    compare(wide, wide_input, &labels, &analytic, |v| v as f32 as f64, epsilon, dropout_seed)
}

fn compare<T: Scalar, N: Differentiable<T>>(
    net: &mut N,
    input: &N::Input,
    labels: &Tensor<T>,
    analytic: &[Vec<f64>],
    round: impl Fn(f64) -> f64,
    epsilon: f64,
    dropout_seed: Option<u64>,
) -> Result<GradCheckReport> {
    let sizes: Vec<usize> = net.parameters_mut().iter().map(|t| t.len()).collect();
    if sizes.len() != analytic.len() || sizes.iter().zip(analytic).any(|(&n, a)| n != a.len()) {
        return Err(Error::Contract("gradient layout does not match parameters".into()));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        checked: 0,
    };
    for (p, &n) in sizes.iter().enumerate() {
        for i in 0..n {
            let orig = net.parameters_mut()[p].data()[i];
            let plus = round(orig.as_f64() + epsilon);
            let minus = round(orig.as_f64() - epsilon);
            net.parameters_mut()[p].data_mut()[i] = T::from_f64(plus);
            let lp = net.loss(input, labels, dropout_seed)?;
            net.parameters_mut()[p].data_mut()[i] = T::from_f64(minus);
            let lm = net.loss(input, labels, dropout_seed)?;
            net.parameters_mut()[p].data_mut()[i] = orig;

            let numeric = (lp - lm) / (plus - minus);
            let a = analytic[p][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                report.worst = Some((p, i));
                report.analytic_at_worst = a;
                report.numeric_at_worst = numeric;
            }
        }
    }
    Ok(report)
}
