use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// 2-D convolution over NHWC input; weights are `[kh, kw, in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: usize,
    pub padding: usize,
}

/// Fully-connected layer; weights are `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T = f32> {
    Conv2d(Conv2d<T>),
    /// 2×2 window, stride 2; odd trailing rows/columns are dropped.
    MaxPool2d,
    Dense(Dense<T>),
    Relu,
    Sigmoid,
    Softmax,
    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)` in training.
    Dropout { rate: f32 },
    /// `[B, ...] -> [B, prod(...)]`.
    Flatten,
}

/// Serializable description of a layer, used for building and checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv2d {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Sigmoid,
    Softmax,
    Dropout {
        rate: f32,
    },
    Flatten,
}

impl LayerSpec {
    /// Instantiates the layer with Glorot-uniform weights and zero biases.
    pub fn build<T: Scalar>(&self, rng: &mut ChaCha8Rng) -> Result<Layer<T>> {
        self.build_with_gain(1.0, rng)
    }

    /// Like [`LayerSpec::build`] with the uniform weight limit multiplied by `gain`.
    pub fn build_with_gain<T: Scalar>(&self, gain: f64, rng: &mut ChaCha8Rng) -> Result<Layer<T>> {
        let glorot = |rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize| {
            let limit = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-limit..limit)))
        };
        Ok(match *self {
            LayerSpec::Conv2d {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                stride,
                padding,
            } => {
                if stride == 0 {
                    return Err(Error::Config("conv stride must be positive".into()));
                }
                let area = kernel_h * kernel_w;
                Layer::Conv2d(Conv2d {
                    weight: glorot(
                        rng,
                        &[kernel_h, kernel_w, in_channels, out_channels],
                        area * in_channels,
                        area * out_channels,
                    )?,
                    bias: Tensor::zeros(&[out_channels])?,
                    stride,
                    padding,
                })
            }
            LayerSpec::Dense { inputs, outputs } => Layer::Dense(Dense {
                weight: glorot(rng, &[inputs, outputs], inputs, outputs)?,
                bias: Tensor::zeros(&[outputs])?,
            }),
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
                }
                Layer::Dropout { rate }
            }
            LayerSpec::MaxPool2d => Layer::MaxPool2d,
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Sigmoid => Layer::Sigmoid,
            LayerSpec::Softmax => Layer::Softmax,
            LayerSpec::Flatten => Layer::Flatten,
        })
    }
}

/// What a forward pass remembers for its backward pass.
#[derive(Debug, Clone)]
pub enum Cache<T = f32> {
    Conv2d { input: Tensor<T> },
    MaxPool2d { input_shape: Vec<usize>, argmax: Vec<usize> },
    Dense { input: Tensor<T> },
    Relu { input: Tensor<T> },
    Sigmoid { input: Tensor<T> },
    Softmax { output: Tensor<T> },
    Dropout { mask: Option<Vec<T>> },
    Flatten { input_shape: Vec<usize> },
}

/// Gradients for a layer's weight and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Dot product with eight independent accumulators so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] = acc[k] + x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[inline]
fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv = *yv + alpha * *xv;
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn shape_err(layer: &str, expected: &str, got: &[usize]) -> Error {
    Error::Shape(format!("{layer}: expected input {expected}, got {got:?}"))
}

fn nhwc(t: &[usize], layer: &str) -> Result<(usize, usize, usize, usize)> {
    match *t {
        [b, h, w, c] => Ok((b, h, w, c)),
        _ => Err(shape_err(layer, "[B, H, W, C]", t)),
    }
}

impl<T: Scalar> Conv2d<T> {
    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.weight.shape();
        (s[0], s[1], s[2], s[3])
    }

    fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw, _, _) = self.dims();
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < kh || pw < kw {
            return Err(Error::Shape(format!(
                "conv2d: {h}x{w} input too small for {kh}x{kw} kernel"
            )));
        }
        Ok(((ph - kh) / self.stride + 1, (pw - kw) / self.stride + 1))
    }

    /// Input row/column for output index `o` and kernel offset `k`, if in bounds.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k)
            .checked_sub(self.padding)
            .filter(|&i| i < limit)
    }

    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (b, h, w, c) = nhwc(input.shape(), "conv2d")?;
        let (kh, kw, ic, oc) = self.dims();
        if c != ic {
            return Err(shape_err("conv2d", &format!("{ic} channels"), input.shape()));
        }
        let (oh, ow) = self.output_hw(h, w)?;
        let x = input.data();
        let wt = self.weight.data();
        let mut out = vec![T::zero(); b * oh * ow * oc];
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let o_base = ((bi * oh + oy) * ow + ox) * oc;
                    let out_px = &mut out[o_base..o_base + oc];
                    out_px.copy_from_slice(self.bias.data());
                    for ky in 0..kh {
                        let Some(iy) = self.source(oy, ky, h) else { continue };
                        for kx in 0..kw {
                            let Some(ix) = self.source(ox, kx, w) else { continue };
                            let in_px = &x[((bi * h + iy) * w + ix) * ic..][..ic];
                            let wk = &wt[(ky * kw + kx) * ic * oc..][..ic * oc];
                            for (&v, wrow) in in_px.iter().zip(wk.chunks_exact(oc)) {
                                axpy(v, wrow, out_px);
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![b, oh, ow, oc], out)
    }

    fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, ParamGrads<T>)> {
        let (b, h, w, _) = nhwc(input.shape(), "conv2d")?;
        let (kh, kw, ic, oc) = self.dims();
        let (oh, ow) = self.output_hw(h, w)?;
        if grad_out.shape() != [b, oh, ow, oc] {
            return Err(shape_err("conv2d backward", &format!("[{b}, {oh}, {ow}, {oc}]"), grad_out.shape()));
        }
        let x = input.data();
        let g = grad_out.data();
        let wt = self.weight.data();
        let mut gw = vec![T::zero(); wt.len()];
        let mut gb = vec![T::zero(); oc];
        let mut gin = if want_input { vec![T::zero(); x.len()] } else { Vec::new() };
        for bi in 0..b {
            for oy in 0..oh {
                for ox in 0..ow {
                    let gpx = &g[((bi * oh + oy) * ow + ox) * oc..][..oc];
                    axpy(T::one(), gpx, &mut gb);
                    for ky in 0..kh {
                        let Some(iy) = self.source(oy, ky, h) else { continue };
                        for kx in 0..kw {
                            let Some(ix) = self.source(ox, kx, w) else { continue };
                            let in_off = ((bi * h + iy) * w + ix) * ic;
                            let k_off = (ky * kw + kx) * ic * oc;
                            let in_px = &x[in_off..in_off + ic];
                            let gwk = &mut gw[k_off..k_off + ic * oc];
                            for (&v, gwrow) in in_px.iter().zip(gwk.chunks_exact_mut(oc)) {
                                axpy(v, gpx, gwrow);
                            }
                            if want_input {
                                let wk = &wt[k_off..k_off + ic * oc];
                                for (gi, wrow) in gin[in_off..in_off + ic].iter_mut().zip(wk.chunks_exact(oc)) {
                                    *gi = *gi + dot(wrow, gpx);
                                }
                            }
                        }
                    }
                }
            }
        }
        let gin = if want_input {
            Some(Tensor::new(input.shape().to_vec(), gin)?)
        } else {
            None
        };
        Ok((
            gin,
            ParamGrads {
                weight: Tensor::new(self.weight.shape().to_vec(), gw)?,
                bias: Tensor::new(vec![oc], gb)?,
            },
        ))
    }
}

impl<T: Scalar> Dense<T> {
    fn dims(&self) -> (usize, usize) {
        (self.weight.shape()[0], self.weight.shape()[1])
    }

    fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (ni, no) = self.dims();
        let b = match *input.shape() {
            [b, n] if n == ni => b,
            _ => return Err(shape_err("dense", &format!("[B, {ni}]"), input.shape())),
        };
        let wt = self.weight.data();
        let mut out = Vec::with_capacity(b * no);
        for row in input.data().chunks_exact(ni) {
            let mut acc = self.bias.data().to_vec();
            for (&v, wrow) in row.iter().zip(wt.chunks_exact(no)) {
                axpy(v, wrow, &mut acc);
            }
            out.extend(acc);
        }
        Tensor::new(vec![b, no], out)
    }

    fn backward(
        &self,
        input: &Tensor<T>,
        grad_out: &Tensor<T>,
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, ParamGrads<T>)> {
        let (ni, no) = self.dims();
        let b = input.shape()[0];
        if grad_out.shape() != [b, no] {
            return Err(shape_err("dense backward", &format!("[{b}, {no}]"), grad_out.shape()));
        }
        let wt = self.weight.data();
        let mut gw = vec![T::zero(); wt.len()];
        let mut gb = vec![T::zero(); no];
        let mut gin = Vec::with_capacity(if want_input { b * ni } else { 0 });
        for (row, g) in input.data().chunks_exact(ni).zip(grad_out.data().chunks_exact(no)) {
            axpy(T::one(), g, &mut gb);
            for (&v, gwrow) in row.iter().zip(gw.chunks_exact_mut(no)) {
                axpy(v, g, gwrow);
            }
            if want_input {
                gin.extend(wt.chunks_exact(no).map(|wrow| dot(wrow, g)));
            }
        }
        let gin = if want_input {
            Some(Tensor::new(vec![b, ni], gin)?)
        } else {
            None
        };
        Ok((
            gin,
            ParamGrads {
                weight: Tensor::new(vec![ni, no], gw)?,
                bias: Tensor::new(vec![no], gb)?,
            },
        ))
    }
}

fn maxpool_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (b, h, w, c) = nhwc(input.shape(), "maxpool2d")?;
    let (oh, ow) = (h / 2, w / 2);
    if oh == 0 || ow == 0 {
        return Err(shape_err("maxpool2d", "H, W >= 2", input.shape()));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(b * oh * ow * c);
    let mut argmax = Vec::with_capacity(b * oh * ow * c);
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                for ch in 0..c {
                    let mut best_i = ((bi * h + 2 * oy) * w + 2 * ox) * c + ch;
                    let mut best = x[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = ((bi * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
    }
    Ok((Tensor::new(vec![b, oh, ow, c], out)?, argmax))
}

impl<T: Scalar> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => {
                let (kh, kw, ic, oc) = c.dims();
                LayerSpec::Conv2d {
                    kernel_h: kh,
                    kernel_w: kw,
                    in_channels: ic,
                    out_channels: oc,
                    stride: c.stride,
                    padding: c.padding,
                }
            }
            Layer::Dense(d) => {
                let (inputs, outputs) = d.dims();
                LayerSpec::Dense { inputs, outputs }
            }
            Layer::MaxPool2d => LayerSpec::MaxPool2d,
            Layer::Relu => LayerSpec::Relu,
            Layer::Sigmoid => LayerSpec::Sigmoid,
            Layer::Softmax => LayerSpec::Softmax,
            Layer::Dropout { rate } => LayerSpec::Dropout { rate: *rate },
            Layer::Flatten => LayerSpec::Flatten,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::MaxPool2d => "maxpool2d",
            Layer::Dense(_) => "dense",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::Softmax => "softmax",
            Layer::Dropout { .. } => "dropout",
            Layer::Flatten => "flatten",
        }
    }

    /// `(weight, bias)` for parameterized layers.
    pub fn params(&self) -> Option<(&Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor<T>, &mut Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Layer<U> {
        match self {
            Layer::Conv2d(c) => Layer::Conv2d(Conv2d {
                weight: c.weight.cast(),
                bias: c.bias.cast(),
                stride: c.stride,
                padding: c.padding,
            }),
            Layer::Dense(d) => Layer::Dense(Dense {
                weight: d.weight.cast(),
                bias: d.bias.cast(),
            }),
            Layer::MaxPool2d => Layer::MaxPool2d,
            Layer::Relu => Layer::Relu,
            Layer::Sigmoid => Layer::Sigmoid,
            Layer::Softmax => Layer::Softmax,
            Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
            Layer::Flatten => Layer::Flatten,
        }
    }

    /// Runs the layer. Passing a generator selects training behaviour
    /// (dropout active); `None` is inference.
    pub fn forward(&self, input: &Tensor<T>, rng: Option<&mut ChaCha8Rng>) -> Result<(Tensor<T>, Cache<T>)> {
        match self {
            Layer::Conv2d(c) => Ok((c.forward(input)?, Cache::Conv2d { input: input.clone() })),
            Layer::Dense(d) => Ok((d.forward(input)?, Cache::Dense { input: input.clone() })),
            Layer::MaxPool2d => {
                let (out, argmax) = maxpool_forward(input)?;
                Ok((
                    out,
                    Cache::MaxPool2d {
                        input_shape: input.shape().to_vec(),
                        argmax,
                    },
                ))
            }
            Layer::Relu => {
                let out = map(input, |v| v.max(T::zero()))?;
                Ok((out, Cache::Relu { input: input.clone() }))
            }
            Layer::Sigmoid => {
                let out = map(input, sigmoid)?;
                Ok((out, Cache::Sigmoid { input: input.clone() }))
            }
            Layer::Softmax => {
                let n = match *input.shape() {
                    [_, n] => n,
                    _ => return Err(shape_err("softmax", "[B, N]", input.shape())),
                };
                let mut out = Vec::with_capacity(input.len());
                for row in input.data().chunks_exact(n) {
                    let m = row.iter().copied().fold(T::neg_infinity(), T::max);
                    let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
                    let s: T = e.iter().copied().sum();
                    out.extend(e.into_iter().map(|v| v / s));
                }
                let out = Tensor::new(input.shape().to_vec(), out)?;
                Ok((out.clone(), Cache::Softmax { output: out }))
            }
            Layer::Dropout { rate } => match rng {
                Some(rng) if *rate > 0.0 => {
                    let keep = T::from_f64(1.0 / (1.0 - *rate as f64));
                    let mask: Vec<T> = (0..input.len())
                        .map(|_| if rng.random::<f32>() >= *rate { keep } else { T::zero() })
                        .collect();
                    let out = input.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                    Ok((
                        Tensor::new(input.shape().to_vec(), out)?,
                        Cache::Dropout { mask: Some(mask) },
                    ))
                }
                _ => Ok((input.clone(), Cache::Dropout { mask: None })),
            },
            Layer::Flatten => {
                let b = input.shape()[0];
                let rest = input.len() / b;
                Ok((
                    input.clone().reshape(&[b, rest])?,
                    Cache::Flatten {
                        input_shape: input.shape().to_vec(),
                    },
                ))
            }
        }
    }

    pub fn backward(&self, grad_out: &Tensor<T>, cache: &Cache<T>) -> Result<(Tensor<T>, Option<ParamGrads<T>>)> {
        let (gin, pg) = self.backward_with(grad_out, cache, true)?;
        Ok((gin.expect("input gradient requested"), pg))
    }

    /// Backward pass; the input gradient is skipped when `want_input` is false.
    pub fn backward_with(
        &self,
        grad_out: &Tensor<T>,
        cache: &Cache<T>,
        want_input: bool,
    ) -> Result<(Option<Tensor<T>>, Option<ParamGrads<T>>)> {
        let same_shape = |t: &Tensor<T>| -> Result<()> {
            if t.shape() != grad_out.shape() {
                return Err(shape_err(
                    &format!("{} backward", self.name()),
                    &format!("{:?}", t.shape()),
                    grad_out.shape(),
                ));
            }
            Ok(())
        };
        let g = grad_out.data();
        match (self, cache) {
            (Layer::Conv2d(c), Cache::Conv2d { input }) => {
                let (gin, pg) = c.backward(input, grad_out, want_input)?;
                Ok((gin, Some(pg)))
            }
            (Layer::Dense(d), Cache::Dense { input }) => {
                let (gin, pg) = d.backward(input, grad_out, want_input)?;
                Ok((gin, Some(pg)))
            }
            (Layer::MaxPool2d, Cache::MaxPool2d { input_shape, argmax }) => {
                if g.len() != argmax.len() {
                    return Err(shape_err("maxpool2d backward", "pooled shape", grad_out.shape()));
                }
                let n: usize = input_shape.iter().product();
                let mut gin = vec![T::zero(); n];
                for (&i, &gv) in argmax.iter().zip(g) {
                    gin[i] = gin[i] + gv;
                }
                Ok((Some(Tensor::new(input_shape.clone(), gin)?), None))
            }
            (Layer::Relu, Cache::Relu { input }) => {
                same_shape(input)?;
                let gin = input
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
                    .collect();
                Ok((Some(Tensor::new(input.shape().to_vec(), gin)?), None))
            }
            (Layer::Sigmoid, Cache::Sigmoid { input }) => {
                same_shape(input)?;
                // σ(x)·σ(−x) rather than y·(1 − y): no cancellation once saturated
                let gin = input
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gv)| gv * sigmoid(x) * sigmoid(-x))
                    .collect();
                Ok((Some(Tensor::new(input.shape().to_vec(), gin)?), None))
            }
            (Layer::Softmax, Cache::Softmax { output }) => {
                same_shape(output)?;
                let n = output.shape()[1];
                let mut gin = Vec::with_capacity(g.len());
                for (y, gr) in output.data().chunks_exact(n).zip(g.chunks_exact(n)) {
                    let s = dot(y, gr);
                    gin.extend(y.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - s)));
                }
                Ok((Some(Tensor::new(output.shape().to_vec(), gin)?), None))
            }
            (Layer::Dropout { .. }, Cache::Dropout { mask }) => match mask {
                Some(mask) => {
                    if mask.len() != g.len() {
                        return Err(shape_err("dropout backward", "mask length", grad_out.shape()));
                    }
                    let gin = g.iter().zip(mask).map(|(&gv, &m)| gv * m).collect();
                    Ok((Some(Tensor::new(grad_out.shape().to_vec(), gin)?), None))
                }
                None => Ok((Some(grad_out.clone()), None)),
            },
            (Layer::Flatten, Cache::Flatten { input_shape }) => {
                Ok((Some(grad_out.clone().reshape(input_shape)?), None))
            }
            (layer, _) => Err(Error::Contract(format!(
                "cache does not belong to a {} layer",
                layer.name()
            ))),
        }
    }
}

fn map<T: Scalar>(t: &Tensor<T>, f: impl Fn(T) -> T) -> Result<Tensor<T>> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}
