use hstream_core::pose::{assemble_pose, image_to_grid, paf_line_integral, NUM_JOINTS};
use hstream_core::synth::{random_pose, render_maps, stream_rng, SynthConfig};
use hstream_core::{LimbTree, Tensor};
use rand::Rng;

#[test]
fn planted_poses_are_recovered_through_distractors() {
    let cfg = SynthConfig::default();
    assert_eq!(cfg.distractor_amplitude, 0.6);
    let tree = LimbTree::default();
    let mut worst = 0.0f64;
    for frame in 0..200u64 {
        let mut rng = stream_rng(2024, frame);
        let pose = random_pose(&cfg, &mut rng);
        let maps = render_maps(&pose, &tree, &cfg, &mut rng).unwrap();
        let got = assemble_pose(&maps, &tree).unwrap();
        for j in 0..NUM_JOINTS {
            let (a, b) = (&got.joints[j], &pose.joints[j]);
            assert!(a.valid);
            let cells = a.distance(b) / cfg.stride as f64;
            worst = worst.max(cells);
            assert!(cells <= 1.0, "frame {frame} joint {j}: {a:?} vs {b:?}");
        }
    }
    assert!(worst <= 1.0);
}

fn field(h: usize, w: usize, v: f32) -> Tensor<f32> {
    Tensor::filled(&[h, w], v).unwrap()
}

#[test]
fn constant_fields() {
    let mut rng = stream_rng(3, 0);
    for _ in 0..200 {
        let p1 = (rng.random_range(0.0f32..39.0), rng.random_range(0.0f32..29.0));
        let p2 = (rng.random_range(0.0f32..39.0), rng.random_range(0.0f32..29.0));
        let (dx, dy) = (p2.0 as f64 - p1.0 as f64, p2.1 as f64 - p1.1 as f64);
        let n = dx.hypot(dy);
        if n < 1e-3 {
            continue;
        }
        let (ux, uy) = ((dx / n) as f32, (dy / n) as f32);
        let aligned = paf_line_integral(&field(30, 40, ux), &field(30, 40, uy), p1, p2, 10).unwrap();
        assert!((aligned - 1.0).abs() <= 1e-6, "{aligned}");
        let ortho = paf_line_integral(&field(30, 40, -uy), &field(30, 40, ux), p1, p2, 10).unwrap();
        assert!(ortho.abs() <= 1e-6, "{ortho}");
    }
}

#[test]
fn endpoint_swap_is_exactly_antisymmetric() {
    let mut rng = stream_rng(4, 0);
    for _ in 0..500 {
        let fx = Tensor::from_fn(&[12, 17], |_| rng.random_range(-1.0f32..1.0)).unwrap();
        let fy = Tensor::from_fn(&[12, 17], |_| rng.random_range(-1.0f32..1.0)).unwrap();
        let p1 = (rng.random_range(0.0f32..16.0), rng.random_range(0.0f32..11.0));
        let p2 = (rng.random_range(0.0f32..16.0), rng.random_range(0.0f32..11.0));
        let samples = rng.random_range(2..15);
        let a = paf_line_integral(&fx, &fy, p1, p2, samples).unwrap();
        let b = paf_line_integral(&fx, &fy, p2, p1, samples).unwrap();
        assert_eq!(a.to_bits(), (-b).to_bits(), "{a} vs {b}");
    }
}

#[test]
fn grid_and_image_coordinates_invert() {
    for g in [0.0f32, 0.5, 7.0, 45.0] {
        let p = hstream_core::pose::grid_to_image(g, 8.0);
        assert_eq!(image_to_grid(p, 8.0), g);
    }
}
