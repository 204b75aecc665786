use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hstream_core::feature::featurize_sequence;
use hstream_core::model::{prepare_flow_input, Batch};
use hstream_core::nn::one_hot;
use hstream_core::pose::assemble_pose;
use hstream_core::synth::{gen_action_sequence, random_pose, render_maps, stream_rng, SynthConfig};
use hstream_core::{ActionLabel, LimbTree, ModelConfig, TwoStreamNet};

fn decode(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let tree = LimbTree::default();
    let mut rng = stream_rng(1, 0);
    let pose = random_pose(&cfg, &mut rng);
    let maps = render_maps(&pose, &tree, &cfg, &mut rng).unwrap();
    c.bench_function("assemble_pose 46x46", |b| b.iter(|| assemble_pose(black_box(&maps), &tree).unwrap()));
}

fn featurize(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let seq = gen_action_sequence(ActionLabel::Shooting, &cfg, &mut stream_rng(2, 0)).unwrap();
    let dims = [cfg.image_size(); 3];
    c.bench_function("featurize_sequence +ST", |b| {
        b.iter(|| featurize_sequence(black_box(&seq.poses), &dims, true).unwrap())
    });
}

fn two_stream(c: &mut Criterion) {
    let cfg = SynthConfig::default();
    let model = ModelConfig::default();
    let net = TwoStreamNet::<f32>::new(model.clone()).unwrap();
    let dims = [cfg.image_size(); 3];
    let mut latents = Vec::new();
    let mut flows = Vec::new();
    for (i, label) in [ActionLabel::Forward, ActionLabel::Passing].into_iter().enumerate() {
        let seq = gen_action_sequence(label, &cfg, &mut stream_rng(3, i as u64)).unwrap();
        latents.push(featurize_sequence(&seq.poses, &dims, true).unwrap());
        flows.push(prepare_flow_input(&seq.flows[0], &seq.flows[1], model.flow_size).unwrap());
    }
    let batch = Batch::stack(latents.iter().map(|l| l.as_slice()).zip(flows.iter().map(Some))).unwrap();
    let labels = one_hot(&[0, 2], 4).unwrap();

    let mut group = c.benchmark_group("two_stream batch 2");
    group.sample_size(20);
    group.bench_function("forward", |b| b.iter(|| net.forward(black_box(&batch), None).unwrap()));
    group.bench_function("forward+backward", |b| {
        b.iter(|| net.loss_and_gradients_with(black_box(&batch), &labels, None).unwrap())
    });
    group.finish();
}

criterion_group!(benches, decode, featurize, two_stream);
criterion_main!(benches);
