//! Dense row-major tensors, the `.htsr` file format, and the image-domain
//! primitives (bilinear resize, horizontal flip) shared by every stage.

mod image;
mod io;

pub use image::{hflip, resize_bilinear};
pub use io::{decode_tensor, encode_tensor, read_tensor, write_tensor};

use std::fmt::Debug;

use crate::error::{Error, Result};

/// Floating-point element type used by the numeric layers.
///
/// Files and the pipeline always carry `f32`; `f64` exists so the
/// finite-difference checks can run the exact same layer code at a precision
/// where central differences are meaningful.
pub trait Scalar:
    num_traits::Float + Default + Debug + Send + Sync + std::iter::Sum + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

pub const MAX_RANK: usize = 4;

/// A dense tensor of rank 1 to 4, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_RANK {
        return Err(Error::Shape(format!(
            "rank must be between 1 and {MAX_RANK}, got shape {shape:?}"
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "dimensions must be at least 1, got {shape:?}"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Shape(format!("shape {shape:?} overflows")))
}

impl<T: Copy + Default> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![T::default(); n],
        })
    }

    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Result<Self> {
        let n = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Same data under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    /// Interprets a rank-3 tensor as `[H, W, C]`.
    pub fn hwc(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Shape(format!(
                "expected [H, W, C], got {:?}",
                self.shape
            ))),
        }
    }

    /// Extracts channel `c` of an `[H, W, C]` tensor as `[H, W]`.
    pub fn channel(&self, c: usize) -> Result<Tensor<T>> {
        let (h, w, nc) = self.hwc()?;
        if c >= nc {
            return Err(Error::Argument(format!(
                "channel {c} out of range for {nc} channels"
            )));
        }
        let data = self.data.iter().skip(c).step_by(nc).copied().collect();
        Tensor::new(vec![h, w], data)
    }

    /// Concatenates `[H, W, C_i]` tensors along the channel axis.
    pub fn concat_channels(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Argument("nothing to concatenate".into()))?;
        let (h, w, _) = first.hwc()?;
        let mut channels = Vec::with_capacity(parts.len());
        for p in parts {
            let (ph, pw, pc) = p.hwc()?;
            if (ph, pw) != (h, w) {
                return Err(Error::Argument(format!(
                    "spatial size mismatch: {h}x{w} vs {ph}x{pw}"
                )));
            }
            channels.push(pc);
        }
        let total: usize = channels.iter().sum();
        let mut data = Vec::with_capacity(h * w * total);
        for px in 0..h * w {
            for (p, &pc) in parts.iter().zip(&channels) {
                data.extend_from_slice(&p.data[px * pc..(px + 1) * pc]);
            }
        }
        Tensor::new(vec![h, w, total], data)
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::from_f64(v.as_f64())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
