use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Hyperparameters for SGD with classical momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

/// Velocity buffers mirroring the parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T = f32> {
    pub config: SgdConfig,
    velocities: Vec<Tensor<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>, config: SgdConfig) -> Result<Self> {
        let velocities = params
            .into_iter()
            .map(|p| Tensor::zeros(p.shape()))
            .collect::<Result<_>>()?;
        Ok(Self { config, velocities })
    }

    pub fn velocities(&self) -> &[Tensor<T>] {
        &self.velocities
    }
}

/// `v <- momentum * v - lr * (g + weight_decay * w)`, then `w <- w + v`.
pub fn sgd_momentum_step<T: Scalar>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut OptimizerState<T>,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.velocities.len() {
        return Err(Error::Contract(format!(
            "{} parameters, {} gradients, {} velocity buffers",
            params.len(),
            grads.len(),
            state.velocities.len()
        )));
    }
    let lr = T::from_f64(state.config.lr);
    let mu = T::from_f64(state.config.momentum);
    let wd = T::from_f64(state.config.weight_decay);
    for ((w, g), v) in params.iter_mut().zip(grads).zip(state.velocities.iter_mut()) {
        if w.shape() != g.shape() || w.shape() != v.shape() {
            return Err(Error::Contract(format!(
                "parameter {:?}, gradient {:?}, velocity {:?}",
                w.shape(),
                g.shape(),
                v.shape()
            )));
        }
        for ((wv, &gv), vv) in w.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = mu * *vv - lr * (gv + wd * *wv);
            *wv = *wv + *vv;
        }
    }
    Ok(())
}
