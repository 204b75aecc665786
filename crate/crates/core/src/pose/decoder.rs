//! Single-person pose assembly from part confidence maps and part affinity
//! fields.
//!
//! Each joint keeps its two best peaks; the pose is grown from the best
//! head-top peak along the limb tree, always committing the (limb, candidate)
//! pair with the strongest PAF line integral among limbs whose parent is
//! already placed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::joints::{Joint, JointId, LimbTree, Pose, NUM_JOINTS, NUM_LIMBS};
use crate::error::{Error, Result};
use crate::tensor::{read_tensor, Tensor};

pub const DEFAULT_PEAKS: usize = 2;
pub const DEFAULT_LINE_SAMPLES: usize = 10;

/// Grid cell index to image pixel coordinate (cell centers).
pub fn grid_to_image(g: f32, stride: f32) -> f32 {
    (g + 0.5) * stride
}

/// Image pixel coordinate to (fractional) grid cell index.
pub fn image_to_grid(p: f32, stride: f32) -> f32 {
    p / stride - 0.5
}

/// Network outputs for one frame: `[H, W, 18]` confidence maps and
/// `[H, W, 34]` part affinity fields, on a grid `stride` image pixels apart.
#[derive(Debug, Clone, PartialEq)]
pub struct PartMaps {
    confidence: Tensor<f32>,
    pafs: Tensor<f32>,
    stride: f32,
}

impl PartMaps {
    pub fn new(confidence: Tensor<f32>, pafs: Tensor<f32>, stride: f32) -> Result<Self> {
        let (h, w, c) = confidence.hwc()?;
        let (ph, pw, pc) = pafs.hwc()?;
        if c != NUM_JOINTS {
            return Err(Error::Shape(format!(
                "confidence maps need {NUM_JOINTS} channels, got {c}"
            )));
        }
        if pc != 2 * NUM_LIMBS || (ph, pw) != (h, w) {
            return Err(Error::Shape(format!(
                "pafs must be [{h}, {w}, {}], got {:?}",
                2 * NUM_LIMBS,
                pafs.shape()
            )));
        }
        if !(stride.is_finite() && stride > 0.0) {
            return Err(Error::Argument(format!("stride must be positive, got {stride}")));
        }
        if !confidence.all_finite() || !pafs.all_finite() {
            return Err(Error::Argument("part maps contain non-finite values".into()));
        }
        Ok(Self {
            confidence,
            pafs,
            stride,
        })
    }

    pub fn load(confidence: impl AsRef<Path>, pafs: impl AsRef<Path>, stride: f32) -> Result<Self> {
        Self::new(read_tensor(confidence)?, read_tensor(pafs)?, stride)
    }

    pub fn confidence(&self) -> &Tensor<f32> {
        &self.confidence
    }

    pub fn pafs(&self) -> &Tensor<f32> {
        &self.pafs
    }

    pub fn stride(&self) -> f32 {
        self.stride
    }

    pub fn grid_size(&self) -> (usize, usize) {
        (self.confidence.shape()[0], self.confidence.shape()[1])
    }
}

/// A peak on the map grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: f32,
    pub y: f32,
    pub score: f32,
}

/// Returns the `k` highest strict local maxima (8-neighbourhood) of an
/// `[H, W]` map, best first, ties in row-major order.
///
/// Short lists are padded by repeating the best candidate; a map without any
/// strict local maximum yields its first global argmax.
pub fn extract_peaks(map: &Tensor<f32>, k: usize) -> Result<Vec<Candidate>> {
    let (h, w) = match map.shape() {
        &[h, w] => (h, w),
        other => {
            return Err(Error::Argument(format!(
                "peak extraction needs an [H, W] map, got {other:?}"
            )))
        }
    };
    if h < 3 || w < 3 {
        return Err(Error::Argument(format!("map too small for peak search: {h}x{w}")));
    }
    peaks_in(map.data(), h, w, 1, 0, k)
}

fn peaks_in(
    data: &[f32],
    h: usize,
    w: usize,
    channels: usize,
    channel: usize,
    k: usize,
) -> Result<Vec<Candidate>> {
    let at = |y: usize, x: usize| data[(y * w + x) * channels + channel];
    let mut peaks: Vec<(usize, Candidate)> = Vec::new();
    let mut best = (0usize, at(0, 0));
    for y in 0..h {
        for x in 0..w {
            let v = at(y, x);
            if v > best.1 {
                best = (y * w + x, v);
            }
            let mut is_peak = true;
            'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if (ny, nx) != (y, x) && at(ny, nx) >= v {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if is_peak {
                peaks.push((
                    y * w + x,
                    Candidate {
                        x: x as f32,
                        y: y as f32,
                        score: v,
                    },
                ));
            }
        }
    }
    // Stable sort keeps row-major order among equal scores.
    peaks.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));
    let mut out: Vec<Candidate> = peaks.into_iter().take(k).map(|(_, c)| c).collect();
    let fill = out.first().copied().unwrap_or(Candidate {
        x: (best.0 % w) as f32,
        y: (best.0 / w) as f32,
        score: best.1,
    });
    out.resize(k, fill);
    Ok(out)
}

/// Two-channel vector field view over an interleaved `[H, W, C]` buffer.
#[derive(Clone, Copy)]
struct FieldView<'a> {
    data: &'a [f32],
    h: usize,
    w: usize,
    channels: usize,
    cx: usize,
    cy: usize,
}

impl FieldView<'_> {
    fn nearest(&self, x: f64, y: f64) -> (f64, f64) {
        let xi = (x.round().max(0.0) as usize).min(self.w - 1);
        let yi = (y.round().max(0.0) as usize).min(self.h - 1);
        let base = (yi * self.w + xi) * self.channels;
        (self.data[base + self.cx] as f64, self.data[base + self.cy] as f64)
    }

    fn line_integral(&self, p1: (f32, f32), p2: (f32, f32), samples: usize) -> f32 {
        if p1 == p2 {
            return 0.0;
        }
        // Integrate along a canonical orientation so swapping the endpoints
        // flips the sign exactly.
        let (a, b, sign) = if (p1.0, p1.1) <= (p2.0, p2.1) {
            (p1, p2, 1.0)
        } else {
            (p2, p1, -1.0)
        };
        let (ax, ay) = (a.0 as f64, a.1 as f64);
        let (dx, dy) = (b.0 as f64 - ax, b.1 as f64 - ay);
        let norm = dx.hypot(dy);
        let (ux, uy) = (dx / norm, dy / norm);
        let mut sum = 0.0f64;
        for i in 0..samples {
            let u = i as f64 / (samples - 1) as f64;
            let (fx, fy) = self.nearest(ax + u * dx, ay + u * dy);
            sum += fx * ux + fy * uy;
        }
        (sign * sum / samples as f64) as f32
    }
}

/// Mean of `PAF · unit(p2 - p1)` over `samples` equally spaced points from
/// `p1` to `p2` (grid coordinates, nearest-cell lookup clamped to the grid).
pub fn paf_line_integral(
    paf_x: &Tensor<f32>,
    paf_y: &Tensor<f32>,
    p1: (f32, f32),
    p2: (f32, f32),
    samples: usize,
) -> Result<f32> {
    let (h, w) = match paf_x.shape() {
        &[h, w] => (h, w),
        other => return Err(Error::Argument(format!("paf_x must be [H, W], got {other:?}"))),
    };
    if paf_y.shape() != paf_x.shape() {
        return Err(Error::Argument(format!(
            "paf_y shape {:?} differs from paf_x {:?}",
            paf_y.shape(),
            paf_x.shape()
        )));
    }
    if samples < 2 {
        return Err(Error::Argument(format!("need at least 2 samples, got {samples}")));
    }
    let interleaved: Vec<f32> = paf_x
        .data()
        .iter()
        .zip(paf_y.data())
        .flat_map(|(&x, &y)| [x, y])
        .collect();
    let view = FieldView {
        data: &interleaved,
        h,
        w,
        channels: 2,
        cx: 0,
        cy: 1,
    };
    Ok(view.line_integral(p1, p2, samples))
}

/// Assembles one pose from a frame's maps by greedy best-first expansion
/// from the head top.
pub fn assemble_pose(maps: &PartMaps, tree: &LimbTree) -> Result<Pose> {
    let (h, w) = maps.grid_size();
    if h < 3 || w < 3 {
        return Err(Error::Argument(format!("map grid too small: {h}x{w}")));
    }
    let conf = maps.confidence.data();
    let candidates: Vec<Vec<Candidate>> = (0..NUM_JOINTS)
        .map(|j| peaks_in(conf, h, w, NUM_JOINTS, j, DEFAULT_PEAKS))
        .collect::<Result<_>>()?;

    let mut chosen: [Option<Candidate>; NUM_JOINTS] = [None; NUM_JOINTS];
    chosen[JointId::HeadTop.index()] = Some(candidates[JointId::HeadTop.index()][0]);

    let fields: Vec<FieldView> = (0..tree.edges().len())
        .map(|e| FieldView {
            data: maps.pafs.data(),
            h,
            w,
            channels: 2 * NUM_LIMBS,
            cx: 2 * e,
            cy: 2 * e + 1,
        })
        .collect();

    for _ in 1..NUM_JOINTS {
        // (score, child, candidate index)
        let mut best: Option<(f32, JointId, usize)> = None;
        for (e, &(parent, child)) in tree.edges().iter().enumerate() {
            let Some(from) = chosen[parent.index()] else { continue };
            if chosen[child.index()].is_some() {
                continue;
            }
            for (ci, cand) in candidates[child.index()].iter().enumerate() {
                let s = fields[e].line_integral((from.x, from.y), (cand.x, cand.y), DEFAULT_LINE_SAMPLES);
                let better = match best {
                    None => true,
                    Some((bs, bj, bc)) => s > bs || (s == bs && (child, ci) < (bj, bc)),
                };
                if better {
                    best = Some((s, child, ci));
                }
            }
        }
        let (_, child, ci) = best.ok_or_else(|| {
            Error::Contract("limb tree does not reach every joint".into())
        })?;
        chosen[child.index()] = Some(candidates[child.index()][ci]);
    }

    let stride = maps.stride;
    let mut pose = Pose::default();
    for (slot, c) in pose.joints.iter_mut().zip(chosen) {
        let c = c.expect("every joint placed");
        *slot = Joint::new(grid_to_image(c.x, stride), grid_to_image(c.y, stride));
    }
    Ok(pose)
}

/// Decodes the three frames of a sequence independently.
pub fn decode_sequence(frames: &[PartMaps], tree: &LimbTree) -> Result<Vec<Pose>> {
    if frames.len() != 3 {
        return Err(Error::Argument(format!(
            "a sequence has 3 frames, got {}",
            frames.len()
        )));
    }
    frames.iter().map(|m| assemble_pose(m, tree)).collect()
}
