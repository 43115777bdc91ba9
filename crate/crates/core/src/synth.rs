//! Seeded synthetic scenes and camera rings.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scene::{matrix_to_quaternion, random_quaternion, CameraView, Gaussian3D, SceneError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Isotropic,
    Needles,
    TexturedBallAnalog,
}

impl SceneKind {
    pub const ALL: [SceneKind; 3] = [Self::Isotropic, Self::Needles, Self::TexturedBallAnalog];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Isotropic => "isotropic",
            Self::Needles => "needles",
            Self::TexturedBallAnalog => "textured-ball-analog",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scene kind `{s}` (expected isotropic, needles, textured-ball-analog)"))
    }
}

#[derive(Debug, Clone)]
pub struct SynthScene {
    pub gaussians: Vec<Gaussian3D>,
    pub train_views: Vec<CameraView>,
    pub test_views: Vec<CameraView>,
}

pub const TRAIN_VIEWS: usize = 8;
pub const TEST_VIEWS: usize = 3;
pub const RING_RADIUS: f64 = 4.0;

/// Focal length giving the ring cameras a ~44° horizontal field of view.
pub fn default_focal(width: u32) -> f64 {
    1.25 * width as f64
}

/// Cameras on a circle of `radius` around the origin looking at it. Training
/// views alternate above and below the equator; test views sit halfway
/// between training azimuths.
pub fn camera_ring(
    n_train: usize,
    n_test: usize,
    radius: f64,
    focal: f64,
    width: u32,
    height: u32,
) -> Result<(Vec<CameraView>, Vec<CameraView>), SceneError> {
    let up = Vector3::new(0.0, -1.0, 0.0);
    let eye = |theta: f64, elevation: f64| {
        let h = radius * elevation.cos();
        Vector3::new(h * theta.cos(), -radius * elevation.sin(), h * theta.sin())
    };
    let step = 2.0 * PI / n_train.max(1) as f64;
    let train = (0..n_train)
        .map(|i| {
            let elev = if i % 2 == 0 { 0.35 } else { -0.25 };
            CameraView::look_at(eye(i as f64 * step, elev), Vector3::zeros(), up, focal, width, height)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let test = (0..n_test)
        .map(|i| {
            let theta = (i as f64 * n_train as f64 / n_test.max(1) as f64 + 0.5) * step;
            CameraView::look_at(eye(theta, 0.1), Vector3::zeros(), up, focal, width, height)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((train, test))
}

fn point_in_ball<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vector3<f64> {
    loop {
        let p = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if p.norm_squared() <= 1.0 {
            return p * radius;
        }
    }
}

fn random_rgb<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    std::array::from_fn(|_| rng.random_range(0.05..0.95))
}

fn isotropic(n: usize, rng: &mut ChaCha8Rng) -> Vec<Gaussian3D> {
    (0..n)
        .map(|_| {
            let p = point_in_ball(rng, 1.0);
            let s = rng.random_range(0.03..0.1);
            let mut g = Gaussian3D::isotropic(p, s, rng.random_range(0.5..0.95), random_rgb(rng));
            // rotation is irrelevant for a sphere but keeps the PLY interesting
            g.rotation = random_quaternion(rng);
            g
        })
        .collect()
}

fn needles(n: usize, rng: &mut ChaCha8Rng) -> Vec<Gaussian3D> {
    (0..n)
        .map(|_| {
            let p = point_in_ball(rng, 1.0);
            let kappa = 10f64.powf(rng.random_range(2.0..4.0));
            let thin = rng.random_range(0.004..0.01);
            let scales = Vector3::new(thin * kappa.sqrt(), thin, thin);
            Gaussian3D::new(
                p,
                random_quaternion(rng),
                scales,
                rng.random_range(0.5..0.95),
                random_rgb(rng),
            )
        })
        .collect()
}

/// Flattened disks tangent to a unit sphere, colored by a seeded
/// high-frequency stripe/checker pattern.
fn textured_ball(n: usize, rng: &mut ChaCha8Rng) -> Vec<Gaussian3D> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let spacing = (4.0 * PI / n as f64).sqrt();
    let freq_a: f64 = rng.random_range(5.0..9.0);
    let freq_b: f64 = rng.random_range(5.0..9.0);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let palette: [[f64; 3]; 4] = std::array::from_fn(|_| random_rgb(rng));
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).sqrt();
            let theta = golden * i as f64;
            let normal = Vector3::new(r * theta.cos(), y, r * theta.sin());
            let tangent = if normal.y.abs() < 0.9 {
                normal.cross(&Vector3::y())
            } else {
                normal.cross(&Vector3::x())
            }
            .normalize();
            let bitangent = normal.cross(&tangent);
            let rot = Matrix3::from_columns(&[tangent, bitangent, normal]);
            let lon = normal.z.atan2(normal.x);
            let lat = normal.y.asin();
            let stripe = ((freq_a * lon + phase).sin() > 0.0) as usize;
            let check = ((freq_b * lat).sin() > 0.0) as usize;
            let rgb = palette[stripe * 2 + check];
            let s = 0.55 * spacing;
            let scales = Vector3::new(s, s * rng.random_range(0.6..1.0), 0.1 * s);
            Gaussian3D::new(normal, matrix_to_quaternion(&rot), scales, 0.9, rgb)
        })
        .collect()
}

/// Synthetic scene of `n` Gaussians with the standard 8 + 3 camera ring.
pub fn synth_scene(kind: SceneKind, n: usize, seed: u64, width: u32, height: u32) -> Result<SynthScene, SceneError> {
    if n == 0 {
        return Err(SceneError::EmptyScene);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = match kind {
        SceneKind::Isotropic => isotropic(n, &mut rng),
        SceneKind::Needles => needles(n, &mut rng),
        SceneKind::TexturedBallAnalog => textured_ball(n, &mut rng),
    };
    let (train_views, test_views) = camera_ring(
        TRAIN_VIEWS,
        TEST_VIEWS,
        RING_RADIUS,
        default_focal(width),
        width,
        height,
    )?;
    Ok(SynthScene {
        gaussians,
        train_views,
        test_views,
    })
}

/// Fitting start point: small gray-ish isotropic Gaussians spread uniformly in
/// a ball, opacity 0.1.
pub fn random_init(n: usize, radius: f64, seed: u64) -> Vec<Gaussian3D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = radius * (4.0 / n.max(1) as f64).cbrt() * 0.4;
    (0..n)
        .map(|_| {
            let p = point_in_ball(&mut rng, radius);
            let rgb = std::array::from_fn(|_| rng.random_range(0.3..0.7));
            Gaussian3D::isotropic(p, scale, 0.1, rgb)
        })
        .collect()
}

/// Radius of the smallest origin-centred sphere containing all camera centers.
pub fn scene_extent(views: &[CameraView]) -> f64 {
    views
        .iter()
        .map(|v| (-(v.rotation.transpose() * v.translation)).norm())
        .fold(0.0, f64::max)
        .max(1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterMode;
    use crate::render::{splat_and_render, RenderConfig};
    use crate::spectral::spectral_entropy;

    fn mean_entropy(gs: &[Gaussian3D]) -> f64 {
        gs.iter()
            .map(|g| spectral_entropy(&g.covariance().eig().unwrap()).unwrap())
            .sum::<f64>()
            / gs.len() as f64
    }

    #[test]
    fn isotropic_scene_has_max_entropy() {
        let s = synth_scene(SceneKind::Isotropic, 50, 1, 64, 64).unwrap();
        for g in &s.gaussians {
            let h = spectral_entropy(&g.covariance().eig().unwrap()).unwrap();
            assert!((h - 3f64.ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn needle_scene_has_low_entropy() {
        let s = synth_scene(SceneKind::Needles, 100, 2, 64, 64).unwrap();
        assert!(mean_entropy(&s.gaussians) < 0.5);
        for g in &s.gaussians {
            let k = crate::spectral::condition_number(&g.covariance().eig().unwrap());
            assert!((100.0 * (1.0 - 1e-9)..=1e4 * (1.0 + 1e-9)).contains(&k), "kappa {k}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in SceneKind::ALL {
            let a = synth_scene(kind, 30, 9, 32, 32).unwrap();
            let b = synth_scene(kind, 30, 9, 32, 32).unwrap();
            assert_eq!(a.gaussians, b.gaussians);
            assert_ne!(a.gaussians, synth_scene(kind, 30, 10, 32, 32).unwrap().gaussians);
        }
        assert!(synth_scene(SceneKind::Needles, 0, 1, 8, 8).is_err());
    }

    #[test]
    fn ring_views_see_the_ball() {
        let s = synth_scene(SceneKind::TexturedBallAnalog, 200, 3, 64, 64).unwrap();
        assert_eq!(s.train_views.len(), 8);
        assert_eq!(s.test_views.len(), 3);
        for v in s.train_views.iter().chain(&s.test_views) {
            let fb = splat_and_render(&s.gaussians, v, FilterMode::mip(), &RenderConfig::default()).unwrap();
            let center = fb.alpha[32 * 64 + 32];
            let corner = fb.alpha[0];
            assert!(center > 0.8, "center alpha {center}");
            assert!(corner < 0.05);
        }
        assert!((scene_extent(&s.train_views) - RING_RADIUS).abs() < 1e-9);
    }

    #[test]
    fn kind_parsing() {
        for k in SceneKind::ALL {
            assert_eq!(k.name().parse::<SceneKind>().unwrap(), k);
        }
        assert!("cubes".parse::<SceneKind>().is_err());
    }

    #[test]
    fn init_is_in_ball() {
        let g = random_init(100, 1.3, 0);
        assert_eq!(g.len(), 100);
        assert!(g
            .iter()
            .all(|g| g.position.norm() <= 1.3 && (g.opacity() - 0.1).abs() < 1e-12));
    }
}
