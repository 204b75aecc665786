use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::Differentiable;
use super::layer::{Cache, Layer, LayerSpec, ParamGrads};
use super::loss::cross_entropy_loss;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const SIGMOID_INIT_GAIN: f64 = 4.0;
pub const RELU_INIT_GAIN: f64 = 0.5;

/// A plain stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T = f32> {
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Self { layers }
    }

    /// Builds the stack, scaling each weighted layer's Glorot limit by the
    /// activation that follows it: ×4 before a sigmoid, ×0.5 before a ReLU.
    ///
    /// The sigmoid gain keeps a deep sigmoid stack out of its flat initial
    /// plateau; the smaller ReLU gain lets a convolutional branch start quiet
    /// instead of saturating the sigmoids it feeds.
    pub fn build(specs: &[LayerSpec], rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            layers: specs
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let gain = match specs.get(i + 1) {
                        Some(LayerSpec::Sigmoid) => SIGMOID_INIT_GAIN,
                        Some(LayerSpec::Relu) => RELU_INIT_GAIN,
                        _ => 1.0,
                    };
                    s.build_with_gain(gain, rng)
                })
                .collect::<Result<_>>()?,
        })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        Sequential {
            layers: self.layers.iter().map(Layer::cast).collect(),
        }
    }

    pub fn ends_with_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Softmax))
    }

    /// Weight then bias of every parameterized layer, in layer order.
    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .filter_map(Layer::params)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .filter_map(Layer::params_mut)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn forward(&self, input: &Tensor<T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (y, cache) = layer.forward(&x, rng.as_deref_mut())?;
            caches.push(cache);
            x = y;
        }
        Ok((x, caches))
    }

    /// Back-propagates `grad` through `layers[..upto]` in reverse.
    ///
    /// Passing `upto = len - 1` on a softmax-terminated stack feeds a
    /// gradient with respect to the logits.
    pub fn backward(
        &self,
        grad: Tensor<T>,
        caches: &[Cache<T>],
        upto: usize,
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, Vec<Option<ParamGrads<T>>>)> {
        if caches.len() != self.layers.len() || upto > self.layers.len() {
            return Err(Error::Contract(format!(
                "{} caches for {} layers (backward through {upto})",
                caches.len(),
                self.layers.len()
            )));
        }
        let mut grads: Vec<Option<ParamGrads<T>>> = vec![None; self.layers.len()];
        let mut g = Some(grad);
        for i in (0..upto).rev() {
            let need = want_input || i > 0;
            let cur = g.take().expect("gradient flows until the first layer");
            let (gin, pg) = self.layers[i].backward_with(&cur, &caches[i], need)?;
            grads[i] = pg;
            g = gin;
        }
        Ok((g, grads))
    }

    /// Backward from a logits gradient; the stack must end in softmax.
    pub fn backward_from_logits(
        &self,
        grad_logits: Tensor<T>,
        caches: &[Cache<T>],
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, Vec<Option<ParamGrads<T>>>)> {
        if !self.ends_with_softmax() {
            return Err(Error::Contract("network does not end in softmax".into()));
        }
        self.backward(grad_logits, caches, self.layers.len() - 1, want_input)
    }
}

/// Flattens per-layer gradients into the `parameters()` order.
fn flatten_grads<T: Scalar>(grads: Vec<Option<ParamGrads<T>>>) -> Vec<Tensor<T>> {
    grads
        .into_iter()
        .flatten()
        .flat_map(|pg| [pg.weight, pg.bias])
        .collect()
}

impl<T: Scalar> Differentiable<T> for Sequential<T> {
    type Input = Tensor<T>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        Sequential::parameters_mut(self)
    }

    fn loss(&self, input: &Tensor<T>, labels: &Tensor<T>, dropout_seed: Option<u64>) -> Result<f64> {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let (probs, _) = self.forward(input, rng.as_mut())?;
        Ok(cross_entropy_loss(&probs, labels)?.0)
    }

    fn loss_and_gradients(
        &self,
        input: &Tensor<T>,
        labels: &Tensor<T>,
        dropout_seed: Option<u64>,
    ) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let (probs, caches) = self.forward(input, rng.as_mut())?;
        let (loss, grad) = cross_entropy_loss(&probs, labels)?;
        let (_, grads) = self.backward_from_logits(grad, &caches, false)?;
        Ok((loss, flatten_grads(grads)))
    }
}
