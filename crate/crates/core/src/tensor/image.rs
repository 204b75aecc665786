use super::Tensor;
use crate::error::{Error, Result};

/// Corner-aligned source coordinate for destination index `i`.
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    if dst == 1 {
        (src - 1) as f64 / 2.0
    } else {
        i as f64 * (src - 1) as f64 / (dst - 1) as f64
    }
}

/// Bilinear resize of an `[H, W, C]` tensor with corner-aligned sampling.
///
/// With `scale_values_as_displacements`, channels are treated as interleaved
/// `(dx, dy)` pairs and rescaled by `out_w / W` and `out_h / H` so that flow
/// vectors keep pointing at the same content on the new grid.
pub fn resize_bilinear(
    t: &Tensor<f32>,
    out_h: usize,
    out_w: usize,
    scale_values_as_displacements: bool,
) -> Result<Tensor<f32>> {
    let (h, w, c) = t.hwc()?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Argument(format!(
            "target size must be positive, got {out_h}x{out_w}"
        )));
    }
    if scale_values_as_displacements && c % 2 != 0 {
        return Err(Error::Argument(format!(
            "displacement rescaling needs (dx, dy) channel pairs, got {c} channels"
        )));
    }
    let src = t.data();
    let mut out = Vec::with_capacity(out_h * out_w * c);
    let sx = out_w as f32 / w as f32;
    let sy = out_h as f32 / h as f32;

    let cols: Vec<(usize, usize, f32)> = (0..out_w)
        .map(|x| {
            let fx = source_coord(x, w, out_w);
            let x0 = (fx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            (x0, x1, (fx - x0 as f64) as f32)
        })
        .collect();

    for y in 0..out_h {
        let fy = source_coord(y, h, out_h);
        let y0 = (fy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let ty = (fy - y0 as f64) as f32;
        for &(x0, x1, tx) in &cols {
            for ch in 0..c {
                let a = src[(y0 * w + x0) * c + ch];
                let b = src[(y0 * w + x1) * c + ch];
                let cc = src[(y1 * w + x0) * c + ch];
                let d = src[(y1 * w + x1) * c + ch];
                // a + t(b - a) keeps constants exact.
                let top = a + tx * (b - a);
                let bottom = cc + tx * (d - cc);
                let mut v = top + ty * (bottom - top);
                if scale_values_as_displacements {
                    v *= if ch % 2 == 0 { sx } else { sy };
                }
                out.push(v);
            }
        }
    }
    Tensor::new(vec![out_h, out_w, c], out)
}

/// Mirrors an `[H, W, C]` tensor left-to-right and negates the listed channels.
pub fn hflip(t: &Tensor<f32>, negate_channels: &[usize]) -> Result<Tensor<f32>> {
    let (h, w, c) = t.hwc()?;
    if let Some(&bad) = negate_channels.iter().find(|&&ch| ch >= c) {
        return Err(Error::Argument(format!(
            "negated channel {bad} out of range for {c} channels"
        )));
    }
    let mut negate = vec![false; c];
    for &ch in negate_channels {
        negate[ch] = true;
    }
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    for y in 0..h {
        for x in 0..w {
            let from = (y * w + (w - 1 - x)) * c;
            for ch in 0..c {
                let v = src[from + ch];
                out.push(if negate[ch] { -v } else { v });
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}
