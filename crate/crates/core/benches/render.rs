//! Sequential against rayon-parallel rendering and backward passes.
//!
//! Without the `parallel` feature both arms run the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spectral_splat::filters::FilterMode;
use spectral_splat::render::{render, render_backward, PipelineOptions, RenderConfig};
use spectral_splat::synth::{synth_scene, SceneKind};

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("render");
    group.sample_size(20);
    for (n, size) in [(200usize, 128u32), (2000, 256)] {
        let scene = synth_scene(SceneKind::TexturedBallAnalog, n, 1, size, size).unwrap();
        let view = &scene.train_views[0];
        let opts = PipelineOptions::from(FilterMode::mip());
        for (label, cfg) in [
            ("sequential", RenderConfig::default().sequential()),
            ("parallel", RenderConfig::default()),
        ] {
            group.bench_with_input(BenchmarkId::new(label, format!("{n}@{size}")), &cfg, |b, cfg| {
                b.iter(|| render(&scene.gaussians, view, &opts, cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("render_backward");
    group.sample_size(20);
    let scene = synth_scene(SceneKind::TexturedBallAnalog, 2000, 1, 256, 256).unwrap();
    let view = &scene.train_views[0];
    let opts = PipelineOptions::from(FilterMode::mip());
    for (label, cfg) in [
        ("sequential", RenderConfig::default().sequential()),
        ("parallel", RenderConfig::default()),
    ] {
        let (fb, tape) = render(&scene.gaussians, view, &opts, &cfg).unwrap();
        let upstream = vec![[1e-3; 3]; fb.rgb.len()];
        group.bench_function(label, |b| {
            b.iter(|| render_backward(&scene.gaussians, &tape, &upstream, &cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward, backward);
criterion_main!(benches);
