//! Planted poses, rendered part maps, flow fields, and labeled 4-class
//! sequences, all driven by a seed.
//!
//! Every figure faces `+x` in profile: the leading knee, arms, and stick blade
//! are ahead of the pelvis, so a mirrored figure is distinguishable from the
//! original and a horizontal flip keeps its label meaningful.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Manifest, SequenceRecord, Split, MANIFEST_FILE};
use crate::error::{Error, Result};
use crate::model::ActionLabel;
use crate::pose::{image_to_grid, Joint, JointId, LimbTree, PartMaps, Pose, NUM_JOINTS, NUM_LIMBS};
use crate::tensor::{write_tensor, Tensor};

/// Body joint offsets from the pelvis in head lengths (`x` forward, `y` down),
/// in `JointId` order. The head segment has unit length.
const BODY: [(f64, f64); 16] = [
    (0.88, -4.36),
    (0.60, -3.40),
    (0.45, -2.60),
    (1.20, -2.40),
    (-0.30, -2.50),
    (1.70, -1.60),
    (0.30, -1.55),
    (2.30, -1.00),
    (1.20, -0.90),
    (0.00, 0.00),
    (0.70, 0.20),
    (-0.70, 0.10),
    (1.40, 1.60),
    (-0.10, 1.80),
    (1.00, 3.30),
    (-0.90, 3.35),
];
/// Stick butt relative to the right wrist, in head lengths.
const STICK_GRIP: (f64, f64) = (-0.45, -0.55);
const STICK_LENGTH: f64 = 5.0;
/// Stick angle below horizontal for a figure at rest, in degrees.
const STICK_REST: [f64; 2] = [50.0, 70.0];
/// Joint coordinates are snapped to this grid so mirroring is exact in f32.
const QUANTUM: f64 = 64.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Part-map grid `[height, width]`.
    pub grid: [usize; 2],
    pub stride: f32,
    /// Gaussian sigma of confidence maps, in grid cells.
    pub gaussian_sigma: f32,
    /// PAF half-width around each limb segment, in grid cells.
    pub paf_half_width: f32,
    pub sequences_per_class: usize,
    /// Per-class counts in label order; overrides `sequences_per_class`.
    pub class_counts: Option<[usize; 4]>,
    pub seed: u64,
    pub distractor_amplitude: f32,
    /// Minimum distance from a distractor to every limb, in grid cells.
    pub distractor_clearance: f32,
    pub with_maps: bool,
    /// Flow fields are stored at `flow_size × flow_size`.
    pub flow_size: usize,
    /// Flow noise sigma in flow-grid pixels.
    pub flow_noise_sigma: f32,
    /// Head segment length range in image pixels.
    pub head_length_px: [f32; 2],
    /// Per-frame translation magnitude range for skating, in image pixels.
    pub skate_speed_px: [f32; 2],
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            grid: [46, 46],
            stride: 8.0,
            gaussian_sigma: 3.0,
            paf_half_width: 1.5,
            sequences_per_class: 100,
            class_counts: None,
            seed: 0,
            distractor_amplitude: 0.6,
            distractor_clearance: 10.0,
            with_maps: false,
            flow_size: 64,
            flow_noise_sigma: 0.2,
            head_length_px: [18.0, 24.0],
            skate_speed_px: [10.0, 16.0],
        }
    }
}

impl SynthConfig {
    /// `(width, height)` of the image the grid covers.
    pub fn image_size(&self) -> (u32, u32) {
        (
            (self.grid[1] as f32 * self.stride).round() as u32,
            (self.grid[0] as f32 * self.stride).round() as u32,
        )
    }

    pub fn class_counts(&self) -> [usize; 4] {
        self.class_counts.unwrap_or([self.sequences_per_class; 4])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.grid[0] < 3 || self.grid[1] < 3 {
            return bad(format!("grid {:?} must be at least 3×3", self.grid));
        }
        if !(self.stride > 0.0) {
            return bad(format!("stride {} must be positive", self.stride));
        }
        if !(self.gaussian_sigma > 0.0) || !(self.paf_half_width > 0.0) {
            return bad("sigma and PAF width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.distractor_amplitude) {
            return bad(format!("distractor amplitude {} not in [0, 1)", self.distractor_amplitude));
        }
        if self.flow_size == 0 || !(self.flow_noise_sigma >= 0.0) {
            return bad("flow size must be positive and noise non-negative".into());
        }
        let [lo, hi] = self.head_length_px;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("bad head length range {:?}", self.head_length_px));
        }
        let [lo, hi] = self.skate_speed_px;
        if !(lo >= 0.0 && lo <= hi) {
            return bad(format!("bad skating speed range {:?}", self.skate_speed_px));
        }
        if let Some(&n) = self.class_counts().iter().min() {
            if n < 7 {
                return bad(format!("every class needs at least 7 sequences, got {n}"));
            }
        }
        Ok(())
    }
}

/// A ChaCha stream keyed by `(seed, stream)`, for per-item generators.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Snaps to the half-quantum lattice `(n + 0.5) / 64` px. Mirroring and
/// translation stay exact in f32, and no joint lands on a cell boundary
/// where two grid samples would tie for the peak.
fn quantize(v: f64) -> f32 {
    (((v * QUANTUM - 0.5).round() + 0.5) / QUANTUM) as f32
}

/// A planted figure: position, scale, and a per-figure variation of the body.
#[derive(Debug, Clone)]
struct Figure {
    pelvis: (f64, f64),
    scale: f64,
    body: [(f64, f64); 16],
}

impl Figure {
    fn random<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Self {
        let (w, h) = cfg.image_size();
        let [lo, hi] = cfg.head_length_px;
        let scale = rng.random_range(lo as f64..=hi as f64);
        let pelvis = (
            w as f64 / 2.0 - 1.6 * scale + rng.random_range(-12.0..12.0),
            h as f64 / 2.0 + 1.4 * scale + rng.random_range(-8.0..8.0),
        );
        let mut body = BODY;
        let wobble = Normal::new(0.0, 0.06).expect("valid sigma");
        for (i, b) in body.iter_mut().enumerate() {
            // Keep the head segment exactly one unit.
            if i > JointId::UpperNeck.index() {
                b.0 += wobble.sample(rng);
                b.1 += wobble.sample(rng);
            }
        }
        Self { pelvis, scale, body }
    }

    /// The figure shifted by `shift` pixels with its stick at `stick_deg`
    /// below horizontal.
    fn pose(&self, shift: (f64, f64), stick_deg: f64) -> Pose {
        let (px, py) = (self.pelvis.0 + shift.0, self.pelvis.1 + shift.1);
        let at = |(x, y): (f64, f64)| (px + self.scale * x, py + self.scale * y);
        let mut joints = [Joint::default(); NUM_JOINTS];
        let mut place = |id: JointId, (x, y): (f64, f64)| {
            joints[id.index()] = Joint::new(quantize(x), quantize(y));
        };
        for (i, &b) in self.body.iter().enumerate() {
            place(JointId::ALL[i], at(b));
        }
        let wrist = self.body[JointId::RWrist.index()];
        let top = (wrist.0 + STICK_GRIP.0, wrist.1 + STICK_GRIP.1);
        let (s, c) = stick_deg.to_radians().sin_cos();
        place(JointId::StickTop, at(top));
        place(JointId::StickEnd, at((top.0 + STICK_LENGTH * c, top.1 + STICK_LENGTH * s)));
        Pose::new(joints)
    }
}

/// A random figure at a random place, with its stick anywhere in the
/// range the action archetypes use.
pub fn random_pose<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Pose {
    let fig = Figure::random(cfg, rng);
    let shift = (rng.random_range(-16.0..16.0), 0.0);
    fig.pose(shift, rng.random_range(-80.0..100.0))
}

/// Distance from `p` to the segment `a`–`b`.
fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p.0 - a.0 - t * dx).hypot(p.1 - a.1 - t * dy)
}

/// Renders confidence maps and PAFs for `pose` on the configured grid.
///
/// With a positive `distractor_amplitude`, every joint map also gets a
/// second, weaker Gaussian on a cell at least `distractor_clearance` cells
/// from every limb (the farthest cell if none is that far).
pub fn render_maps<R: Rng>(pose: &Pose, tree: &LimbTree, cfg: &SynthConfig, rng: &mut R) -> Result<PartMaps> {
    cfg.validate()?;
    let (w, h) = cfg.image_size();
    for (id, j) in JointId::ALL.iter().zip(&pose.joints) {
        if !(j.x >= 0.0 && j.x <= w as f32 && j.y >= 0.0 && j.y <= h as f32) {
            return Err(Error::Argument(format!(
                "{id} at ({}, {}) outside the {w}x{h} image",
                j.x, j.y
            )));
        }
    }
    let [gh, gw] = cfg.grid;
    let grid: Vec<(f64, f64)> = pose
        .joints
        .iter()
        .map(|j| {
            (
                image_to_grid(j.x, cfg.stride) as f64,
                image_to_grid(j.y, cfg.stride) as f64,
            )
        })
        .collect();
    let segments: Vec<((f64, f64), (f64, f64))> = tree
        .edges()
        .iter()
        .map(|&(a, b)| (grid[a.index()], grid[b.index()]))
        .collect();

    let mut distractors = Vec::new();
    if cfg.distractor_amplitude > 0.0 {
        let clearance: Vec<f64> = (0..gh * gw)
            .map(|i| {
                let p = ((i % gw) as f64, (i / gw) as f64);
                segments
                    .iter()
                    .map(|&(a, b)| segment_distance(p, a, b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let far: Vec<usize> = (0..gh * gw)
            .filter(|&i| clearance[i] >= cfg.distractor_clearance as f64)
            .collect();
        let farthest = (0..gh * gw)
            .max_by(|&a, &b| clearance[a].total_cmp(&clearance[b]).then(b.cmp(&a)))
            .expect("grid is non-empty");
        for _ in 0..NUM_JOINTS {
            let cell = if far.is_empty() {
                farthest
            } else {
                far[rng.random_range(0..far.len())]
            };
            distractors.push(((cell % gw) as f64, (cell / gw) as f64));
        }
    }

    let two_s2 = 2.0 * (cfg.gaussian_sigma as f64).powi(2);
    let mut conf = vec![0.0f32; gh * gw * NUM_JOINTS];
    for y in 0..gh {
        for x in 0..gw {
            let px = &mut conf[(y * gw + x) * NUM_JOINTS..][..NUM_JOINTS];
            let gauss = |c: (f64, f64)| (-((x as f64 - c.0).powi(2) + (y as f64 - c.1).powi(2)) / two_s2).exp();
            for j in 0..NUM_JOINTS {
                let mut v = gauss(grid[j]);
                if let Some(&d) = distractors.get(j) {
                    v = v.max(cfg.distractor_amplitude as f64 * gauss(d));
                }
                px[j] = v as f32;
            }
        }
    }

    let mut pafs = vec![0.0f32; gh * gw * 2 * NUM_LIMBS];
    for (l, &(a, b)) in segments.iter().enumerate() {
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let len = dx.hypot(dy);
        if len == 0.0 {
            continue;
        }
        let (ux, uy) = ((dx / len) as f32, (dy / len) as f32);
        for y in 0..gh {
            for x in 0..gw {
                if segment_distance((x as f64, y as f64), a, b) <= cfg.paf_half_width as f64 {
                    let o = (y * gw + x) * 2 * NUM_LIMBS + 2 * l;
                    pafs[o] = ux;
                    pafs[o + 1] = uy;
                }
            }
        }
    }
    PartMaps::new(
        Tensor::new(vec![gh, gw, NUM_JOINTS], conf)?,
        Tensor::new(vec![gh, gw, 2 * NUM_LIMBS], pafs)?,
        cfg.stride,
    )
}

/// One generated training example.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSequence {
    pub label: ActionLabel,
    pub poses: [Pose; 3],
    /// Flow 1→2 and 2→3, `[flow_size, flow_size, 2]` in flow-grid pixels.
    pub flows: [Tensor<f32>; 2],
    /// Planted translation per frame, in image pixels.
    pub velocity: (f64, f64),
    /// Planted stick angles below horizontal, in degrees.
    pub stick_deg: [f64; 3],
}

/// Generates a sequence of the given class:
///
/// * forward / backward: rigid `±d` translation per frame, stick low and still;
/// * passing: a 15–30° stick sweep with a slight translation;
/// * shooting: a 100–130° stick raise with a slight translation.
///
/// The camera is static. Both flow fields carry the skater's translation
/// inside the figure's bounding box (one cell of margin, all three frames)
/// and zero elsewhere, plus Gaussian noise everywhere.
pub fn gen_action_sequence<R: Rng>(label: ActionLabel, cfg: &SynthConfig, rng: &mut R) -> Result<SyntheticSequence> {
    cfg.validate()?;
    let fig = Figure::random(cfg, rng);
    let rest = rng.random_range(STICK_REST[0]..STICK_REST[1]);
    let [lo, hi] = cfg.skate_speed_px;
    let speed = rng.random_range(lo as f64..=hi as f64);
    let drift = rng.random_range(-3.0..3.0);
    let wobble = rng.random_range(-2.0..2.0);
    let sweep = rng.random_range(15.0..30.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let raise = rng.random_range(100.0..130.0);
    let (vx, delta) = match label {
        ActionLabel::Forward => (speed, wobble),
        ActionLabel::Backward => (-speed, wobble),
        ActionLabel::Passing => (drift, sweep),
        ActionLabel::Shooting => (drift, -raise),
    };
    let velocity = (vx, 0.0);
    let stick_deg = [0.0, 0.5, 1.0].map(|t| rest + t * delta);
    let poses = [0, 1, 2].map(|k| {
        let t = k as f64 - 1.0;
        fig.pose((t * velocity.0, t * velocity.1), stick_deg[k])
    });

    let (w, h) = cfg.image_size();
    let n = cfg.flow_size;
    let (sx, sy) = (n as f64 / w as f64, n as f64 / h as f64);
    let (fx, fy) = ((velocity.0 * sx) as f32, (velocity.1 * sy) as f32);
    let joints = poses.iter().flat_map(|p| p.joints.iter());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for j in joints {
        (x0, x1) = (x0.min(j.x as f64), x1.max(j.x as f64));
        (y0, y1) = (y0.min(j.y as f64), y1.max(j.y as f64));
    }
    let cell = |v: f64, s: f64, round: fn(f64) -> f64, pad: f64| (round(v * s) + pad).clamp(0.0, n as f64 - 1.0) as usize;
    let (bx0, bx1) = (cell(x0, sx, f64::floor, -1.0), cell(x1, sx, f64::ceil, 1.0));
    let (by0, by1) = (cell(y0, sy, f64::floor, -1.0), cell(y1, sy, f64::ceil, 1.0));

    let noise = Normal::new(0.0f32, cfg.flow_noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut flow = || {
        Tensor::from_fn(&[n, n, 2], |i| {
            let (x, y) = ((i / 2) % n, (i / 2) / n);
            let inside = (bx0..=bx1).contains(&x) && (by0..=by1).contains(&y);
            let base = match (inside, i % 2) {
                (false, _) => 0.0,
                (true, 0) => fx,
                (true, _) => fy,
            };
            base + noise.sample(rng)
        })
    };
    let flows = [flow()?, flow()?];
    Ok(SyntheticSequence {
        label,
        poses,
        flows,
        velocity,
        stick_deg,
    })
}

/// Per-class `(train, val, test)` sizes for a 70/15/15 split.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = (n as f64 * 0.70).round() as usize;
    let val = (n as f64 * 0.15).round() as usize;
    (train, val, n - train - val)
}

#[derive(Serialize)]
struct JointsFile<'a> {
    id: &'a str,
    action: ActionLabel,
    joints: &'a [Pose; 3],
}

/// Writes a full synthetic dataset under `out` and returns its manifest.
pub fn gen_dataset(cfg: &SynthConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let tree = LimbTree::default();
    let (w, h) = cfg.image_size();
    let mut manifest = Manifest::new(tree.clone(), cfg.stride, [w, h]);
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    for (c, (&label, &count)) in ActionLabel::ALL.iter().zip(&cfg.class_counts()).enumerate() {
        let mut splits = Vec::with_capacity(count);
        let (train, val, test) = split_sizes(count);
        splits.extend(std::iter::repeat(Split::Train).take(train));
        splits.extend(std::iter::repeat(Split::Val).take(val));
        splits.extend(std::iter::repeat(Split::Test).take(test));
        splits.shuffle(&mut stream_rng(cfg.seed, c as u64));

        for (i, split) in splits.into_iter().enumerate() {
            let id = format!("{}_{i:04}", label.name());
            let mut rng = stream_rng(cfg.seed, ((c as u64 + 1) << 32) | i as u64);
            let seq = gen_action_sequence(label, cfg, &mut rng)?;
            let dir = out.join(&id);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let rel = |name: String| PathBuf::from(&id).join(name);

            let flows = [rel("flow_12.htsr".into()), rel("flow_23.htsr".into())];
            for (t, p) in seq.flows.iter().zip(&flows) {
                write_tensor(t, out.join(p))?;
            }
            let (mut confidence, mut pafs) = (None, None);
            if cfg.with_maps {
                let mut cs = Vec::new();
                let mut ps = Vec::new();
                for (k, pose) in seq.poses.iter().enumerate() {
                    let maps = render_maps(pose, &tree, cfg, &mut rng)?;
                    let (cp, pp) = (rel(format!("confidence_{}.htsr", k + 1)), rel(format!("pafs_{}.htsr", k + 1)));
                    write_tensor(maps.confidence(), out.join(&cp))?;
                    write_tensor(maps.pafs(), out.join(&pp))?;
                    cs.push(cp);
                    ps.push(pp);
                }
                confidence = cs.try_into().ok();
                pafs = ps.try_into().ok();
            }
            let joints_path = dir.join("joints.json");
            let body = serde_json::to_string_pretty(&JointsFile {
                id: &id,
                action: label,
                joints: &seq.poses,
            })
            .expect("joints serialize");
            fs::write(&joints_path, body).map_err(|e| Error::io(&joints_path, e))?;

            manifest.sequences.push(SequenceRecord {
                id,
                action: label,
                split,
                flows,
                confidence,
                pafs,
                joints: seq.poses,
            });
        }
    }
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::assemble_pose;

    fn cfg() -> SynthConfig {
        SynthConfig::default()
    }

    #[test]
    fn gaussian_peak_and_tail() {
        let mut c = cfg();
        c.distractor_amplitude = 0.0;
        let mut p = Pose::default();
        for j in p.joints.iter_mut() {
            // Grid cell (20, 10) has its centre at image (164, 84).
            *j = Joint::new(164.0, 84.0);
        }
        let maps = render_maps(&p, &LimbTree::default(), &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let conf = maps.confidence().data();
        let at = |x: usize, y: usize| conf[(y * 46 + x) * NUM_JOINTS];
        assert_eq!(at(20, 10), 1.0);
        assert!(at(29, 10) <= (-4.5f32).exp() + 1e-7);
        assert!(maps.pafs().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn paf_on_midline_is_the_limb_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pose = random_pose(&cfg(), &mut rng);
        let tree = LimbTree::default();
        let maps = render_maps(&pose, &tree, &cfg(), &mut rng).unwrap();
        for (l, &(a, b)) in tree.edges().iter().enumerate() {
            let (pa, pb) = (pose.joint(a), pose.joint(b));
            let g = |v: f32| image_to_grid(v, 8.0);
            let (ax, ay, bx, by) = (g(pa.x), g(pa.y), g(pb.x), g(pb.y));
            let len = (bx - ax).hypot(by - ay);
            // Nearest cell to the midpoint lies within half a cell of the segment.
            let (mx, my) = (((ax + bx) / 2.0).round() as usize, ((ay + by) / 2.0).round() as usize);
            let o = (my * 46 + mx) * 34 + 2 * l;
            let v = &maps.pafs().data()[o..o + 2];
            assert!((v[0] - (bx - ax) / len).abs() < 1e-6 && (v[1] - (by - ay) / len).abs() < 1e-6);
        }
    }

    #[test]
    fn out_of_bounds_joint_is_rejected() {
        let mut pose = random_pose(&cfg(), &mut ChaCha8Rng::seed_from_u64(1));
        pose.joints[5].x = -1.0;
        assert!(render_maps(&pose, &LimbTree::default(), &cfg(), &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn random_figures_decode_with_distractors() {
        let c = cfg();
        let tree = LimbTree::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let pose = random_pose(&c, &mut rng);
            let maps = render_maps(&pose, &tree, &c, &mut rng).unwrap();
            let got = assemble_pose(&maps, &tree).unwrap();
            for (a, b) in got.joints.iter().zip(&pose.joints) {
                assert!(a.distance(b) <= 8.0, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn forward_translates_rigidly_with_its_flow() {
        let mut c = cfg();
        c.flow_noise_sigma = 0.0;
        let s = gen_action_sequence(ActionLabel::Forward, &c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let d = s.velocity.0;
        assert!((10.0..=16.0).contains(&d));
        for k in 0..2 {
            for (a, b) in s.poses[k].joints.iter().zip(&s.poses[k + 1].joints).take(16) {
                assert!((b.x - a.x - d as f32).abs() < 0.05 && (b.y - a.y).abs() < 0.05);
            }
        }
        let expect = (d * 64.0 / 368.0) as f32;
        let at = |x: f32, y: f32| {
            let (cx, cy) = ((x * 64.0 / 368.0) as usize, (y * 64.0 / 368.0) as usize);
            &s.flows[0].data()[(cy * 64 + cx) * 2..][..2]
        };
        let pelvis = s.poses[1].joint(JointId::Pelvis);
        assert_eq!(at(pelvis.x, pelvis.y), &[expect, 0.0]);
        assert_eq!(at(2.0, 2.0), &[0.0, 0.0]);
        let moving = s.flows[1].data().chunks_exact(2).filter(|v| v[0] != 0.0).count();
        assert!(moving > 20 && moving < 64 * 64 / 2, "{moving}");
    }

    #[test]
    fn shooting_raises_the_blade() {
        let c = cfg();
        for seed in 0..50 {
            let s = gen_action_sequence(ActionLabel::Shooting, &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let len = s.poses[0].head_length().unwrap();
            let rise = s.poses[0].joint(JointId::StickEnd).y - s.poses[2].joint(JointId::StickEnd).y;
            assert!(rise as f64 >= 2.0 * len, "rise {rise} vs L {len}");
        }
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_sizes(100), (70, 15, 15));
        assert_eq!(split_sizes(7), (5, 1, 1));
        for n in 7..200 {
            let (a, b, c) = split_sizes(n);
            assert_eq!(a + b + c, n);
            assert!((a as f64 - 0.7 * n as f64).abs() <= 1.0);
            assert!((c as f64 - 0.15 * n as f64).abs() <= 1.0);
        }
    }

    #[test]
    fn too_few_sequences_is_a_config_error() {
        let c = SynthConfig {
            sequences_per_class: 6,
            ..cfg()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
