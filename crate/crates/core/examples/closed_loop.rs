//! Fits the textured ball from random init with two variants and compares
//! held-out PSNR and mean spectral entropy.
//!
//! `cargo run --release --example closed_loop -- [iterations] [size] [variants...]`
//!
//! `SEED=n` shifts both the scene and the init seeds.

use std::time::Instant;

use spectral_splat::densify::DensifyConfig;
use spectral_splat::filters::FilterMode;
use spectral_splat::render::{splat_and_render, PipelineOptions, RenderConfig};
use spectral_splat::synth::{random_init, scene_extent, synth_scene, SceneKind};
use spectral_splat::train::loss::psnr;
use spectral_splat::train::{scene_entropy_metric, train, TrainConfig, TrainingView, Variant};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let iterations: usize = args.first().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let size: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(256);
    let variants: Vec<Variant> = if args.len() > 2 {
        args[2..].iter().map(|s| s.parse().unwrap()).collect()
    } else {
        vec![Variant::Baseline3dgs, Variant::Spectral]
    };

    let shift: u64 = std::env::var("SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(0);
    let truth = synth_scene(SceneKind::TexturedBallAnalog, 200, 7 + shift, size, size).unwrap();
    let rcfg = RenderConfig::default();
    let gt = |c| splat_and_render(&truth.gaussians, c, FilterMode::mip(), &rcfg).unwrap();
    let views: Vec<TrainingView> = truth
        .train_views
        .iter()
        .map(|c| TrainingView {
            camera: c.clone(),
            image: gt(c),
        })
        .collect();
    let extent = scene_extent(&truth.train_views);

    for variant in variants {
        let cfg = TrainConfig {
            iterations,
            scene_extent: extent,
            seed: 1 + shift,
            ..Default::default()
        };
        let t0 = Instant::now();
        let out = train(
            &views,
            random_init(200, 1.2, 1 + shift),
            cfg,
            DensifyConfig::for_extent(extent),
            variant,
            |e| {
                if e.iter % 400 == 0 {
                    eprintln!("{variant} {}", serde_json::to_string(e).unwrap());
                }
            },
        )
        .unwrap();
        let secs = t0.elapsed().as_secs_f64();
        let opts = PipelineOptions::from(cfg.filter.unwrap_or(variant.default_filter()));
        let held: f64 = truth
            .test_views
            .iter()
            .map(|c| {
                let (fb, _) = spectral_splat::render::render(&out.state.scene, c, &opts, &rcfg).unwrap();
                psnr(&fb, &gt(c)).unwrap()
            })
            .sum::<f64>()
            / truth.test_views.len() as f64;
        println!(
            "{variant}: {secs:.1}s count {} entropy {:.4} held-out psnr {held:.3}",
            out.state.scene.len(),
            scene_entropy_metric(&out.state.scene).unwrap()
        );
    }
}
