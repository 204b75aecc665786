use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::feature::{feature_len, LatentFeature};
use crate::nn::{cross_entropy_loss, Cache, Differentiable, Layer, LayerSpec, ParamGrads, Sequential};
use crate::tensor::{resize_bilinear, Scalar, Tensor};

/// Channels of the stacked flow input: `(dx, dy)` of flow 1→2, then of 2→3.
pub const FLOW_CHANNELS: usize = 4;

/// Concatenates two `[H, W, 2]` flow fields in temporal order and resizes
/// the result to `size × size`, rescaling displacements to the new grid.
pub fn prepare_flow_input(flow12: &Tensor<f32>, flow23: &Tensor<f32>, size: usize) -> Result<Tensor<f32>> {
    let (h, w, c) = flow12.hwc()?;
    let (h2, w2, c2) = flow23.hwc()?;
    if c != 2 || c2 != 2 {
        return Err(Error::Argument(format!(
            "flow fields need 2 channels, got {c} and {c2}"
        )));
    }
    if (h, w) != (h2, w2) {
        return Err(Error::Argument(format!(
            "flow fields differ in size: {h}x{w} vs {h2}x{w2}"
        )));
    }
    let stacked = Tensor::concat_channels(&[flow12, flow23])?;
    resize_bilinear(&stacked, size, size, true)
}

/// A mini-batch: latent vectors `[B, D]` and, for flow models, stacked flow
/// inputs `[B, S, S, 4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T = f32> {
    pub latent: Tensor<T>,
    pub flow: Option<Tensor<T>>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.latent.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cast<U: Scalar>(&self) -> Batch<U> {
        Batch {
            latent: self.latent.cast(),
            flow: self.flow.as_ref().map(Tensor::cast),
        }
    }
}

impl Batch<f32> {
    /// Stacks single examples into a batch.
    pub fn stack<'a>(items: impl IntoIterator<Item = (&'a [f32], Option<&'a Tensor<f32>>)>) -> Result<Self> {
        let mut latent = Vec::new();
        let mut flow = Vec::new();
        let (mut rows, mut width, mut flow_shape, mut with_flow) = (0, None, None, None);
        for (l, f) in items {
            if *width.get_or_insert(l.len()) != l.len() {
                return Err(Error::Shape("latent vectors differ in length".into()));
            }
            if *with_flow.get_or_insert(f.is_some()) != f.is_some() {
                return Err(Error::Contract("batch mixes examples with and without flow".into()));
            }
            if let Some(f) = f {
                if *flow_shape.get_or_insert_with(|| f.shape().to_vec()) != f.shape() {
                    return Err(Error::Shape("flow inputs differ in shape".into()));
                }
                flow.extend_from_slice(f.data());
            }
            latent.extend_from_slice(l);
            rows += 1;
        }
        let width = width.ok_or_else(|| Error::Argument("empty batch".into()))?;
        let flow = match flow_shape {
            Some(s) => Some(Tensor::new([&[rows][..], &s].concat(), flow)?),
            None => None,
        };
        Ok(Self {
            latent: Tensor::new(vec![rows, width], latent)?,
            flow,
        })
    }
}

/// Forward-pass state needed for backpropagation.
#[derive(Debug)]
pub struct NetCache<T> {
    flow: Option<Vec<Cache<T>>>,
    head: Vec<Cache<T>>,
}

/// Flow branch plus fusion head.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStreamNet<T = f32> {
    config: ModelConfig,
    flow: Option<Sequential<T>>,
    head: Sequential<T>,
}

fn flow_specs(cfg: &ModelConfig) -> Vec<LayerSpec> {
    let mut specs = Vec::new();
    let mut channels = FLOW_CHANNELS;
    let mut side = cfg.flow_size;
    for &out in &cfg.flow_channels {
        specs.push(LayerSpec::Conv2d {
            kernel_h: 3,
            kernel_w: 3,
            in_channels: channels,
            out_channels: out,
            stride: 1,
            padding: 1,
        });
        specs.extend([LayerSpec::Relu, LayerSpec::MaxPool2d]);
        channels = out;
        side /= 2;
    }
    specs.push(LayerSpec::Flatten);
    let mut width = side * side * channels;
    for &out in &cfg.flow_dense {
        specs.extend([LayerSpec::Dense { inputs: width, outputs: out }, LayerSpec::Relu]);
        width = out;
    }
    specs
}

fn head_specs(cfg: &ModelConfig) -> Vec<LayerSpec> {
    let f = &cfg.fusion;
    let mut width = feature_len(cfg.use_stick) + if cfg.use_flow { *cfg.flow_dense.last().unwrap_or(&0) } else { 0 };
    let mut specs = Vec::new();
    for (i, &out) in f.iter().enumerate() {
        specs.push(LayerSpec::Dense { inputs: width, outputs: out });
        specs.push(if i + 1 == f.len() { LayerSpec::Softmax } else { LayerSpec::Sigmoid });
        if i == 1 {
            specs.push(LayerSpec::Dropout { rate: cfg.dropout_rate });
        }
        width = out;
    }
    specs
}

impl<T: Scalar> TwoStreamNet<T> {
    /// Builds the network with Glorot-initialized weights drawn from
    /// `config.seed` (flow branch first, then the head).
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let flow = if config.use_flow {
            Some(Sequential::build(&flow_specs(&config), &mut rng)?)
        } else {
            None
        };
        let head = Sequential::build(&head_specs(&config), &mut rng)?;
        Ok(Self { config, flow, head })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn flow_branch(&self) -> Option<&Sequential<T>> {
        self.flow.as_ref()
    }

    pub fn head(&self) -> &Sequential<T> {
        &self.head
    }

    pub fn latent_len(&self) -> usize {
        feature_len(self.config.use_stick)
    }

    /// Width of the concatenated `[flow features, latent]` vector.
    pub fn fusion_input_len(&self) -> usize {
        self.flow_width() + self.latent_len()
    }

    fn flow_width(&self) -> usize {
        if self.config.use_flow {
            *self.config.flow_dense.last().expect("validated")
        } else {
            0
        }
    }

    /// All layers, flow branch first, numbered as in checkpoints.
    pub fn layers(&self) -> impl Iterator<Item = &Layer<T>> {
        let flow = self.flow.iter().flat_map(|s| s.layers());
        flow.chain(self.head.layers())
    }

    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        self.layers().map(Layer::spec).collect()
    }

    /// `(global layer index, weight, bias)` for every parameterized layer.
    pub fn named_params(&self) -> Vec<(usize, &Tensor<T>, &Tensor<T>)> {
        self.layers()
            .enumerate()
            .filter_map(|(i, l)| l.params().map(|(w, b)| (i, w, b)))
            .collect()
    }

    pub fn parameters(&self) -> Vec<&Tensor<T>> {
        let mut out = self.flow.as_ref().map(Sequential::parameters).unwrap_or_default();
        out.extend(self.head.parameters());
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = self.flow.as_mut().map(Sequential::parameters_mut).unwrap_or_default();
        out.extend(self.head.parameters_mut());
        out
    }

    pub fn cast<U: Scalar>(&self) -> TwoStreamNet<U> {
        TwoStreamNet {
            config: self.config.clone(),
            flow: self.flow.as_ref().map(Sequential::cast),
            head: self.head.cast(),
        }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let d = self.latent_len();
        match *batch.latent.shape() {
            [_, w] if w == d => {}
            _ => {
                return Err(Error::Shape(format!(
                    "latent batch must be [B, {d}], got {:?}",
                    batch.latent.shape()
                )))
            }
        }
        match (&batch.flow, self.config.use_flow) {
            (None, true) => Err(Error::Contract("flow model needs a flow input".into())),
            (Some(_), false) => Err(Error::Contract("model without flow branch was given a flow input".into())),
            (Some(f), true) => {
                let s = self.config.flow_size;
                if f.shape() != [batch.len(), s, s, FLOW_CHANNELS] {
                    return Err(Error::Shape(format!(
                        "flow batch must be [{}, {s}, {s}, {FLOW_CHANNELS}], got {:?}",
                        batch.len(),
                        f.shape()
                    )));
                }
                Ok(())
            }
            (None, false) => Ok(()),
        }
    }

    /// Class probabilities `[B, 4]`. Dropout is active only when `rng` is given.
    pub fn forward(&self, batch: &Batch<T>, mut rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor<T>, NetCache<T>)> {
        self.check_batch(batch)?;
        let b = batch.len();
        let (fusion, flow_cache) = match (&self.flow, &batch.flow) {
            (Some(branch), Some(input)) => {
                let (feat, cache) = branch.forward(input, rng.as_deref_mut())?;
                let fw = self.flow_width();
                let d = self.latent_len();
                let mut joined = Vec::with_capacity(b * (fw + d));
                for (f, l) in feat.data().chunks_exact(fw).zip(batch.latent.data().chunks_exact(d)) {
                    joined.extend_from_slice(f);
                    joined.extend_from_slice(l);
                }
                (Tensor::new(vec![b, fw + d], joined)?, Some(cache))
            }
            _ => (batch.latent.clone(), None),
        };
        let (probs, head_cache) = self.head.forward(&fusion, rng)?;
        Ok((
            probs,
            NetCache {
                flow: flow_cache,
                head: head_cache,
            },
        ))
    }

    /// Parameter gradients, in [`parameters`](Self::parameters) order, from
    /// the gradient with respect to the pre-softmax logits.
    pub fn backward(&self, grad_logits: Tensor<T>, cache: &NetCache<T>) -> Result<Vec<Tensor<T>>> {
        let want_fusion = self.flow.is_some();
        let (g_fusion, head_grads) = self.head.backward_from_logits(grad_logits, &cache.head, want_fusion)?;
        let mut grads = Vec::new();
        if let (Some(branch), Some(fc)) = (&self.flow, &cache.flow) {
            let g = g_fusion.expect("requested");
            let b = g.shape()[0];
            let (fw, total) = (self.flow_width(), self.fusion_input_len());
            let mut gf = Vec::with_capacity(b * fw);
            for row in g.data().chunks_exact(total) {
                gf.extend_from_slice(&row[..fw]);
            }
            let (_, flow_grads) = branch.backward(Tensor::new(vec![b, fw], gf)?, fc, branch.layers().len(), false)?;
            push_grads(&mut grads, flow_grads);
        }
        push_grads(&mut grads, head_grads);
        Ok(grads)
    }

    /// Mean cross-entropy and its parameter gradients for one batch.
    pub fn loss_and_gradients_with(
        &self,
        batch: &Batch<T>,
        labels: &Tensor<T>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Tensor<T>>)> {
        let (probs, cache) = self.forward(batch, rng)?;
        let (loss, grad) = cross_entropy_loss(&probs, labels)?;
        Ok((loss, self.backward(grad, &cache)?))
    }
}

fn push_grads<T: Scalar>(out: &mut Vec<Tensor<T>>, grads: Vec<Option<ParamGrads<T>>>) {
    for g in grads.into_iter().flatten() {
        out.push(g.weight);
        out.push(g.bias);
    }
}

impl<T: Scalar> Differentiable<T> for TwoStreamNet<T> {
    type Input = Batch<T>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor<T>> {
        TwoStreamNet::parameters_mut(self)
    }

    fn loss(&self, input: &Batch<T>, labels: &Tensor<T>, dropout_seed: Option<u64>) -> Result<f64> {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        let (probs, _) = self.forward(input, rng.as_mut())?;
        Ok(cross_entropy_loss(&probs, labels)?.0)
    }

    fn loss_and_gradients(&self, input: &Batch<T>, labels: &Tensor<T>, dropout_seed: Option<u64>) -> Result<(f64, Vec<Tensor<T>>)> {
        let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
        self.loss_and_gradients_with(input, labels, rng.as_mut())
    }
}

/// Class probabilities for one sequence, with dropout disabled.
pub fn predict(net: &TwoStreamNet<f32>, latent: &LatentFeature, flow_input: Option<&Tensor<f32>>) -> Result<[f32; NUM_CLASSES]> {
    let batch = Batch::stack([(latent.as_slice(), flow_input)])?;
    let (probs, _) = net.forward(&batch, None)?;
    let mut out = [0.0; NUM_CLASSES];
    out.copy_from_slice(probs.data());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, one_hot};
    use rand::Rng;

    fn small(use_flow: bool, use_stick: bool) -> ModelConfig {
        ModelConfig {
            use_flow,
            use_stick,
            flow_size: 8,
            flow_channels: vec![2, 3],
            flow_dense: vec![6, 5],
            seed: 3,
            ..ModelConfig::default()
        }
    }

    fn batch(cfg: &ModelConfig, b: usize, seed: u64) -> Batch<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = feature_len(cfg.use_stick);
        let s = cfg.flow_size;
        Batch {
            latent: Tensor::from_fn(&[b, d], |_| rng.random_range(-2.0..2.0)).unwrap(),
            flow: cfg
                .use_flow
                .then(|| Tensor::from_fn(&[b, s, s, 4], |_| rng.random_range(-2.0..2.0)).unwrap()),
        }
    }

    #[test]
    fn full_model_shapes() {
        let net: TwoStreamNet = TwoStreamNet::new(ModelConfig::default()).unwrap();
        assert_eq!(net.fusion_input_len(), 64 + 156);
        let latent = LatentFeature::new(vec![0.1; 156]);
        let flow = Tensor::zeros(&[56, 56, 4]).unwrap();
        let p = predict(&net, &latent, Some(&flow)).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!(matches!(predict(&net, &latent, None), Err(Error::Contract(_))));
    }

    #[test]
    fn ablated_model_has_no_conv_layers() {
        let cfg = ModelConfig {
            use_flow: false,
            use_stick: false,
            ..ModelConfig::default()
        };
        let net: TwoStreamNet = TwoStreamNet::new(cfg).unwrap();
        assert_eq!(net.fusion_input_len(), 144);
        assert!(net.layer_specs().iter().all(|s| !matches!(s, LayerSpec::Conv2d { .. })));
        let p = predict(&net, &LatentFeature::new(vec![0.0; 144]), None).unwrap();
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_final_layer_gives_uniform() {
        let mut net: TwoStreamNet = TwoStreamNet::new(small(true, true)).unwrap();
        let n = net.parameters().len();
        for p in &mut net.parameters_mut()[n - 2..] {
            p.data_mut().fill(0.0);
        }
        let p = predict(&net, &LatentFeature::new(vec![0.3; 156]), Some(&Tensor::filled(&[8, 8, 4], 1.0).unwrap())).unwrap();
        assert_eq!(p, [0.25; 4]);
    }

    #[test]
    fn gradients_match_in_f64() {
        for (flow, stick) in [(true, true), (false, false)] {
            let cfg = small(flow, stick);
            let mut net: TwoStreamNet<f64> = TwoStreamNet::new(cfg.clone()).unwrap();
            let x = batch(&cfg, 2, 1);
            let y = one_hot(&[0, 3], 4).unwrap();
            let r = gradient_check(&mut net, &x, &y, 1e-4, Some(5)).unwrap();
            assert!(r.max_rel_error < 1e-3, "{r:?}");
        }
    }

    #[test]
    fn flow_input_preparation() {
        let a = Tensor::from_fn(&[56, 56, 2], |i| i as f32).unwrap();
        let b = Tensor::from_fn(&[56, 56, 2], |i| -(i as f32)).unwrap();
        let p = prepare_flow_input(&a, &b, 56).unwrap();
        for (k, px) in p.data().chunks_exact(4).enumerate() {
            assert_eq!(px, &[a.data()[2 * k], a.data()[2 * k + 1], b.data()[2 * k], b.data()[2 * k + 1]]);
        }
        let u = Tensor::from_fn(&[112, 112, 2], |i| if i % 2 == 0 { 8.0 } else { 0.0 }).unwrap();
        let p = prepare_flow_input(&u, &u, 56).unwrap();
        assert!(p.data().chunks_exact(4).all(|px| px == [4.0, 0.0, 4.0, 0.0]));
        let small = Tensor::zeros(&[50, 56, 2]).unwrap();
        assert!(matches!(prepare_flow_input(&a, &small, 56), Err(Error::Argument(_))));
    }
}
