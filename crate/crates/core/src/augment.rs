//! Training-time augmentation of a 3-frame sequence: one random similarity
//! transform, per-joint jitter, and a horizontal flip that is always applied
//! to joints and flows together.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::tensor::{hflip, Tensor};

/// Flow channels holding horizontal displacement.
const FLOW_X_CHANNELS: [usize; 1] = [0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub scale_range: [f64; 2],
    /// Rotation is drawn uniformly from `±rotation_deg`.
    pub rotation_deg: f64,
    /// Isotropic Gaussian jitter per joint, in pixels.
    pub joint_jitter_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            scale_range: [0.8, 1.2],
            rotation_deg: 15.0,
            joint_jitter_sigma: 2.0,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// No flip, no scale, no rotation, no jitter.
    pub fn identity() -> Self {
        Self {
            flip_prob: 0.0,
            scale_range: [1.0, 1.0],
            rotation_deg: 0.0,
            joint_jitter_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.scale_range;
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!("flip_prob {} not in [0, 1]", self.flip_prob)));
        }
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Config(format!("bad scale range [{lo}, {hi}]")));
        }
        if !(self.rotation_deg >= 0.0 && self.rotation_deg.is_finite()) {
            return Err(Error::Config(format!("bad rotation range ±{}", self.rotation_deg)));
        }
        if !(self.joint_jitter_sigma >= 0.0 && self.joint_jitter_sigma.is_finite()) {
            return Err(Error::Config(format!("bad jitter sigma {}", self.joint_jitter_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub poses: Vec<Pose>,
    pub flows: Vec<Tensor<f32>>,
    pub flipped: bool,
}

/// Mirrors every pose (with left/right swap) and every flow field (columns
/// reversed, dx negated). Applying it twice restores flows exactly, and
/// joints exactly whenever `W - x` is representable (e.g. sub-pixel grids).
pub fn flip_sequence(poses: &[Pose], flows: &[Tensor<f32>], image_w: u32) -> Result<(Vec<Pose>, Vec<Tensor<f32>>)> {
    let poses = poses.iter().map(|p| p.mirrored(image_w as f32)).collect();
    let flows = flows
        .iter()
        .map(|f| hflip(f, &FLOW_X_CHANNELS))
        .collect::<Result<_>>()?;
    Ok((poses, flows))
}

/// Draws one augmentation and applies it to a sequence.
///
/// Random draws happen in a fixed order (scale, rotation, jitter per frame
/// per joint, flip) whatever the configuration, so two configs that differ
/// only in magnitudes consume the generator identically.
pub fn augment_sequence<R: Rng + ?Sized>(
    poses: &[Pose],
    flows: &[Tensor<f32>],
    image: (u32, u32),
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Augmented> {
    cfg.validate()?;
    let [lo, hi] = cfg.scale_range;
    let scale = lo + (hi - lo) * rng.random::<f64>();
    let theta = cfg.rotation_deg.to_radians() * (2.0 * rng.random::<f64>() - 1.0);
    let (sin, cos) = theta.sin_cos();
    let (cx, cy) = (image.0 as f64 / 2.0, image.1 as f64 / 2.0);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut out = Vec::with_capacity(poses.len());
    for pose in poses {
        let mut p = pose.map_points(|x, y| {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            (
                (cx + scale * (cos * dx - sin * dy)) as f32,
                (cy + scale * (sin * dx + cos * dy)) as f32,
            )
        });
        for j in p.joints.iter_mut() {
            let ex: f64 = unit.sample(rng);
            let ey: f64 = unit.sample(rng);
            if j.valid && cfg.joint_jitter_sigma > 0.0 {
                j.x = (j.x as f64 + cfg.joint_jitter_sigma * ex) as f32;
                j.y = (j.y as f64 + cfg.joint_jitter_sigma * ey) as f32;
            }
        }
        out.push(p);
    }

    let flipped = rng.random::<f64>() < cfg.flip_prob;
    if flipped {
        let (poses, flows) = flip_sequence(&out, flows, image.0)?;
        Ok(Augmented { poses, flows, flipped })
    } else {
        Ok(Augmented {
            poses: out,
            flows: flows.to_vec(),
            flipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{Joint, JointId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pose(seed: u64) -> Pose {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = Pose::default();
        for j in p.joints.iter_mut() {
            // Quarter-pixel grid, so `W - (W - x)` is exact in f32.
            let mut q = || (rng.random_range(50.0..300.0f32) * 4.0).round() / 4.0;
            *j = Joint::new(q(), q());
        }
        p
    }

    fn flow(seed: u64) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(&[8, 8, 2], |_| rng.random_range(-3.0..3.0)).unwrap()
    }

    #[test]
    fn identity_config_is_identity() {
        let poses = [pose(1), pose(2), pose(3)];
        let flows = [flow(4), flow(5)];
        let a = augment_sequence(&poses, &flows, (368, 368), &AugmentConfig::identity(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(!a.flipped);
        assert_eq!(a.poses, poses);
        assert_eq!(a.flows, flows);
    }

    #[test]
    fn forced_flip_swaps_wrists() {
        let mut p = Pose::default();
        *p.joint_mut(JointId::LWrist) = Joint::new(10.0, 0.0);
        *p.joint_mut(JointId::RWrist) = Joint::new(20.0, 0.0);
        let cfg = AugmentConfig {
            flip_prob: 1.0,
            ..AugmentConfig::identity()
        };
        let a = augment_sequence(&[p; 3], &[flow(1), flow(2)], (368, 368), &cfg, &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(a.flipped);
        assert_eq!(*a.poses[0].joint(JointId::LWrist), Joint::new(348.0, 0.0));
        assert_eq!(*a.poses[0].joint(JointId::RWrist), Joint::new(358.0, 0.0));
    }

    #[test]
    fn double_flip_restores_everything() {
        let poses = [pose(7), pose(8), pose(9)];
        let flows = [flow(10), flow(11)];
        let (p1, f1) = flip_sequence(&poses, &flows, 368).unwrap();
        let (p2, f2) = flip_sequence(&p1, &f1, 368).unwrap();
        assert_eq!(p2, poses);
        assert_eq!(f2, flows);
    }

    #[test]
    fn same_seed_same_stream() {
        let poses = [pose(1), pose(2), pose(3)];
        let flows = [flow(4), flow(5)];
        let cfg = AugmentConfig::default();
        let a = augment_sequence(&poses, &flows, (368, 368), &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = augment_sequence(&poses, &flows, (368, 368), &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = AugmentConfig {
            scale_range: [0.0, 1.0],
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = AugmentConfig {
            flip_prob: 1.5,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
