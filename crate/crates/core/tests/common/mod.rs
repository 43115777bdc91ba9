//! Finite-difference gradient harness shared by the integration tests.

#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spectral_splat::render::{render, render_backward, PipelineOptions, RenderConfig};
use spectral_splat::scene::{random_quaternion, CameraView, Gaussian3D};

pub const H: f64 = 1e-4;

pub fn camera() -> CameraView {
    CameraView::look_at(
        Vector3::new(0.6, -0.4, -4.0),
        Vector3::new(0.0, 0.0, 0.0),
        Vector3::new(0.0, -1.0, 0.0),
        30.0,
        24,
        20,
    )
    .unwrap()
}

pub fn random_scene(rng: &mut ChaCha8Rng, n: usize) -> Vec<Gaussian3D> {
    (0..n)
        .map(|_| {
            let mut g = Gaussian3D::new(
                Vector3::new(
                    rng.random_range(-0.8..0.8),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.8..0.8),
                ),
                random_quaternion(rng),
                Vector3::new(
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.05..0.3),
                ),
                rng.random_range(0.2..0.9),
                [
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                    rng.random_range(0.1..0.9),
                ],
            );
            // scale the quaternion off the unit sphere to exercise normalization
            let k = rng.random_range(0.7..1.4);
            g.rotation = g.rotation.map(|v| v * k);
            g.max_sampling_rate = Some(rng.random_range(3.0..6.0));
            g
        })
        .collect()
}

pub fn params(g: &Gaussian3D) -> Vec<f64> {
    let mut v = vec![g.position.x, g.position.y, g.position.z];
    v.extend(g.rotation);
    v.extend(g.log_scales.iter());
    v.push(g.opacity_logit);
    v.extend(g.sh_dc);
    v
}

pub fn set_param(g: &mut Gaussian3D, k: usize, value: f64) {
    match k {
        0..=2 => g.position[k] = value,
        3..=6 => g.rotation[k - 3] = value,
        7..=9 => g.log_scales[k - 7] = value,
        10 => g.opacity_logit = value,
        _ => g.sh_dc[k - 11] = value,
    }
}

pub fn loss(
    scene: &[Gaussian3D],
    view: &CameraView,
    opts: &PipelineOptions,
    cfg: &RenderConfig,
    up: &[[f64; 3]],
) -> f64 {
    let (fb, _) = render(scene, view, opts, cfg).unwrap();
    fb.rgb
        .iter()
        .zip(up)
        .map(|(p, g)| p[0] * g[0] + p[1] * g[1] + p[2] * g[2])
        .sum()
}

/// Relative errors of every parameter of every Gaussian.
pub fn gradient_errors(seed: u64, n: usize, view: &CameraView, opts: PipelineOptions) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scene = random_scene(&mut rng, n);
    let cfg = RenderConfig::smooth();
    let up: Vec<[f64; 3]> = (0..view.width * view.height)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    let (_, tape) = render(&scene, view, &opts, &cfg).unwrap();
    assert!(tape.visible_count() > 0);
    let grads = render_backward(&scene, &tape, &up, &cfg).unwrap();
    let mut errors = Vec::new();
    for (i, g) in scene.iter().enumerate() {
        if !grads.visible[i] {
            continue;
        }
        let gg = &grads.grads[i];
        let mut analytic = vec![gg.position.x, gg.position.y, gg.position.z];
        analytic.extend(gg.rotation);
        analytic.extend(gg.log_scales.iter());
        analytic.push(gg.opacity_logit);
        analytic.extend(gg.sh_dc);
        let base = params(g);
        for k in 0..base.len() {
            let mut plus = scene.clone();
            set_param(&mut plus[i], k, base[k] + H);
            let mut minus = scene.clone();
            set_param(&mut minus[i], k, base[k] - H);
            let numeric = (loss(&plus, view, &opts, &cfg, &up) - loss(&minus, view, &opts, &cfg, &up)) / (2.0 * H);
            let scale = analytic[k].abs().max(numeric.abs()).max(1e-6);
            errors.push((analytic[k] - numeric).abs() / scale);
        }
    }
    errors
}
