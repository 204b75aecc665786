use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

const PROB_FLOOR: f64 = 1e-12;
const ROW_SUM_TOLERANCE: f64 = 1e-5;

/// Mean negative log-likelihood of softmax outputs against (one-hot) labels.
///
/// Returns the loss and its gradient with respect to the pre-softmax logits,
/// `(probs - labels) / B`.
pub fn cross_entropy_loss<T: Scalar>(probs: &Tensor<T>, labels: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let (b, k) = match *probs.shape() {
        [b, k] => (b, k),
        _ => return Err(Error::Shape(format!("probs must be [B, K], got {:?}", probs.shape()))),
    };
    if labels.shape() != probs.shape() {
        return Err(Error::Shape(format!(
            "labels {:?} do not match probs {:?}",
            labels.shape(),
            probs.shape()
        )));
    }
    let mut loss = 0.0f64;
    for (row, lab) in probs.data().chunks_exact(k).zip(labels.data().chunks_exact(k)) {
        let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Contract(format!("probability row sums to {sum}")));
        }
        for (&p, &y) in row.iter().zip(lab) {
            let y = y.as_f64();
            if y != 0.0 {
                loss -= y * p.as_f64().max(PROB_FLOOR).ln();
            }
        }
    }
    let scale = T::from_f64(1.0 / b as f64);
    let grad = probs
        .data()
        .iter()
        .zip(labels.data())
        .map(|(&p, &y)| (p - y) * scale)
        .collect();
    Ok((loss / b as f64, Tensor::new(vec![b, k], grad)?))
}

/// `[B, classes]` one-hot matrix.
pub fn one_hot<T: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Argument(format!("label {bad} out of range for {classes} classes")));
    }
    Tensor::from_fn(&[labels.len(), classes], |i| {
        if labels[i / classes] == i % classes {
            T::one()
        } else {
            T::zero()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;
    use rand::{Rng, SeedableRng};

    #[test]
    fn exact_prediction_has_zero_loss() {
        let y = one_hot::<f32>(&[2, 0], 4).unwrap();
        let (loss, grad) = cross_entropy_loss(&y, &y).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn uniform_prediction_costs_ln4() {
        let p = Tensor::filled(&[3, 4], 0.25f32).unwrap();
        let (loss, _) = cross_entropy_loss(&p, &one_hot(&[0, 1, 3], 4).unwrap()).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn zero_probability_is_clamped() {
        let p = Tensor::new(vec![1, 2], vec![1.0f32, 0.0]).unwrap();
        let (loss, _) = cross_entropy_loss(&p, &one_hot(&[1], 2).unwrap()).unwrap();
        assert!(loss.is_finite());
        assert!((loss - 1e-12f64.ln().abs()).abs() < 1e-9);
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let p = Tensor::filled(&[1, 4], 0.3f32).unwrap();
        assert!(cross_entropy_loss(&p, &one_hot(&[0], 4).unwrap()).is_err());
    }

    #[test]
    fn logit_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let logits = Tensor::<f64>::from_fn(&[3, 4], |_| rng.random_range(-2.0..2.0)).unwrap();
        let labels = one_hot::<f64>(&[1, 3, 0], 4).unwrap();
        let loss_of = |z: &Tensor<f64>| {
            let (p, _) = Layer::Softmax.forward(z, None).unwrap();
            cross_entropy_loss(&p, &labels).unwrap().0
        };
        let (p, _) = Layer::Softmax.forward(&logits, None).unwrap();
        let (_, grad) = cross_entropy_loss(&p, &labels).unwrap();
        let eps = 1e-3;
        for i in 0..logits.len() {
            let mut zp = logits.clone();
            zp.data_mut()[i] += eps;
            let mut zm = logits.clone();
            zm.data_mut()[i] -= eps;
            let num = (loss_of(&zp) - loss_of(&zm)) / (2.0 * eps);
            let a = grad.data()[i];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-8) < 1e-3);
        }
    }
}
