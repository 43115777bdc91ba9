//! Analytic render gradients against central finite differences.

mod common;

use common::{camera, gradient_errors, random_scene};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_splat::filters::FilterMode;
use spectral_splat::render::{render, render_backward, PipelineOptions, RenderConfig};
use spectral_splat::scene::CameraView;

fn check_single(opts: PipelineOptions, view: &CameraView) {
    for seed in 0..4 {
        let errs = gradient_errors(seed, 1, view, opts);
        let worst = errs.iter().cloned().fold(0.0, f64::max);
        assert!(worst < 1e-4, "seed {seed} {opts:?}: worst relative error {worst:e}");
    }
}

#[test]
fn single_splat_gradients_without_filter() {
    check_single(FilterMode::None.into(), &camera());
}

#[test]
fn single_splat_gradients_ewa() {
    check_single(FilterMode::ewa().into(), &camera());
}

#[test]
fn single_splat_gradients_mip_with_3d_smoothing() {
    let opts = PipelineOptions {
        filter: FilterMode::mip(),
        smoothing_3d: Some(0.2),
    };
    check_single(opts, &camera());
}

#[test]
fn single_splat_gradients_view_consistent_zoomed() {
    // ν̂ ≤ 6 while f/depth is about 15 after zooming, so the kernel grows with depth.
    check_single(FilterMode::view_consistent().into(), &camera().zoomed(2.0));
}

#[test]
fn twenty_splat_gradients() {
    for (seed, opts) in [
        (10, PipelineOptions::from(FilterMode::ewa())),
        (
            11,
            PipelineOptions {
                filter: FilterMode::mip(),
                smoothing_3d: Some(0.2),
            },
        ),
        (12, PipelineOptions::from(FilterMode::view_consistent())),
    ] {
        let errs = gradient_errors(seed, 20, &camera(), opts);
        let good = errs.iter().filter(|e| **e < 1e-3).count();
        let frac = good as f64 / errs.len() as f64;
        assert!(frac >= 0.99, "{opts:?}: only {:.2}% within 1e-3", 100.0 * frac);
    }
}

#[test]
fn zero_upstream_gradient_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let scene = random_scene(&mut rng, 5);
    let view = camera();
    let cfg = RenderConfig::default();
    let (_, tape) = render(&scene, &view, &FilterMode::mip().into(), &cfg).unwrap();
    let grads = render_backward(&scene, &tape, &vec![[0.0; 3]; 480], &cfg).unwrap();
    for g in &grads.grads {
        assert_eq!(g.position, Vector3::zeros());
        assert_eq!(g.rotation, [0.0; 4]);
        assert_eq!(g.log_scales, Vector3::zeros());
        assert_eq!(g.opacity_logit, 0.0);
        assert_eq!(g.sh_dc, [0.0; 3]);
    }
}

#[test]
fn backward_is_identical_sequential_and_parallel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scene = random_scene(&mut rng, 30);
    let view = camera();
    let up: Vec<[f64; 3]> = (0..480)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let run = |cfg: RenderConfig| {
        let (_, tape) = render(&scene, &view, &FilterMode::mip().into(), &cfg).unwrap();
        render_backward(&scene, &tape, &up, &cfg).unwrap().grads
    };
    assert_eq!(run(RenderConfig::default()), run(RenderConfig::default().sequential()));
}
