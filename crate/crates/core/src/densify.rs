//! Adaptive density control: gradient-driven clone/split, entropy-driven
//! spectral split, and pruning of transparent or broken Gaussians.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::scene::Gaussian3D;
use crate::spectral::{condition_number_of, entropy_of, SymMat3, EPS_PSD};

/// Scale divisor of the gradient-driven split.
pub const BASELINE_SPLIT_FACTOR: f64 = 1.6;
/// Relative tolerance for eigenvalues tied with the spectral radius.
pub const RADIUS_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DensifyError {
    #[error("invalid densify config: {0}")]
    InvalidConfig(String),
    #[error("degenerate covariance")]
    DegenerateCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub tau_loss: f64,
    /// Squared world units.
    pub tau_radius: f64,
    pub tau_spectral: f64,
    pub k: f64,
    pub k0: f64,
    /// Children per spectral split.
    pub children: usize,
    pub min_opacity: f64,
    pub kappa_max: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self::for_extent(1.0)
    }
}

impl DensifyConfig {
    pub fn for_extent(scene_extent: f64) -> Self {
        let r = 0.01 * scene_extent;
        Self {
            tau_loss: 2e-4,
            tau_radius: r * r,
            tau_spectral: 0.5,
            k: 0.6,
            k0: 1.0,
            children: 2,
            min_opacity: 0.005,
            kappa_max: 1e8,
        }
    }

    pub fn validate(&self) -> Result<(), DensifyError> {
        let bad = |m: &str| Err(DensifyError::InvalidConfig(m.to_string()));
        if !(self.k > 0.0) {
            return bad("k must be > 0");
        }
        if !(self.k0 >= 1.0) {
            return bad("k0 must be >= 1");
        }
        if self.children < 2 {
            return bad("children (K) must be >= 2");
        }
        if !(self.min_opacity > 0.0 && self.min_opacity < 1.0) {
            return bad("min_opacity must lie in (0, 1)");
        }
        if !(self.tau_loss >= 0.0) || !(self.tau_radius >= 0.0) || self.tau_spectral.is_nan() {
            return bad("thresholds must be nonnegative");
        }
        if !(self.kappa_max >= 1.0) {
            return bad("kappa_max must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensifyStats {
    pub cloned: usize,
    pub split_baseline: usize,
    pub split_spectral: usize,
    pub pruned_opacity: usize,
    pub pruned_spectrum: usize,
}

impl DensifyStats {
    pub fn accumulate(&mut self, o: &Self) {
        self.cloned += o.cloned;
        self.split_baseline += o.split_baseline;
        self.split_spectral += o.split_spectral;
        self.pruned_opacity += o.pruned_opacity;
        self.pruned_spectrum += o.pruned_spectrum;
    }
}

fn squared_scales(g: &Gaussian3D) -> [f64; 3] {
    let s = g.scales();
    [s[0] * s[0], s[1] * s[1], s[2] * s[2]]
}

pub fn should_split_spectral(cov: &SymMat3, tau_spectral: f64) -> bool {
    match cov.eig() {
        Ok(sp) if sp.psd => entropy_of(&sp.eigenvalues).is_ok_and(|h| h < tau_spectral),
        _ => false,
    }
}

/// Largest k keeping κ from growing: −k₀ + k₀·ρ^{3/2}/√|Σ|.
pub fn split_k_bound(cov: &SymMat3, k0: f64) -> Result<f64, DensifyError> {
    let sp = cov.eig().map_err(|_| DensifyError::DegenerateCovariance)?;
    let det: f64 = sp.eigenvalues.iter().product();
    if !(det > 0.0) || !sp.psd {
        return Err(DensifyError::DegenerateCovariance);
    }
    bound_from_eigenvalues(&sp.eigenvalues, k0)
}

fn bound_from_eigenvalues(ev: &[f64; 3], k0: f64) -> Result<f64, DensifyError> {
    let det = ev[0] * ev[1] * ev[2];
    if !(det > 0.0) {
        return Err(DensifyError::DegenerateCovariance);
    }
    let rho = ev.iter().cloned().fold(f64::MIN, f64::max);
    Ok(-k0 + k0 * rho.powf(1.5) / det.sqrt())
}

/// Per-axis divisors kᵢ = k·1{sᵢ² ≈ ρ} + k₀.
pub fn split_divisors(squared_scales: &[f64; 3], k: f64, k0: f64) -> [f64; 3] {
    let rho = squared_scales.iter().cloned().fold(f64::MIN, f64::max);
    squared_scales.map(|s2| if s2 >= rho * (1.0 - RADIUS_TIE_TOL) { k + k0 } else { k0 })
}

/// Square-root factor L with LLᵀ = Σ, from Cholesky when it succeeds.
fn sqrt_factor(g: &Gaussian3D) -> Result<Matrix3<f64>, DensifyError> {
    let cov = g.covariance().to_matrix();
    if let Some(ch) = cov.cholesky() {
        return Ok(ch.l());
    }
    let l = g.rotation_matrix() * Matrix3::from_diagonal(&g.scales());
    if l.iter().all(|v| v.is_finite()) && l.determinant().abs() > 0.0 {
        Ok(l)
    } else {
        Err(DensifyError::DegenerateCovariance)
    }
}

/// `n` i.i.d. positions drawn from the Gaussian's density.
pub fn sample_positions<R: Rng + ?Sized>(
    g: &Gaussian3D,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vector3<f64>>, DensifyError> {
    let l = sqrt_factor(g)?;
    Ok((0..n)
        .map(|_| {
            let z = Vector3::new(
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            );
            g.position + l * z
        })
        .collect())
}

/// Replaces `g` by `cfg.children` Gaussians whose largest axes are divided by
/// k + k₀ and the rest by k₀.
pub fn spectral_split<R: Rng + ?Sized>(
    g: &Gaussian3D,
    cfg: &DensifyConfig,
    rng: &mut R,
) -> Result<Vec<Gaussian3D>, DensifyError> {
    let s2 = squared_scales(g);
    let bound = bound_from_eigenvalues(&s2, cfg.k0)?;
    let mut k = cfg.k;
    if k >= bound {
        k = (0.95 * bound).max(0.0);
        log::warn!("split k {} exceeds bound {bound:.4}; using {k:.4}", cfg.k);
    }
    let div = split_divisors(&s2, k, cfg.k0);
    let positions = sample_positions(g, cfg.children, rng)?;
    Ok(positions
        .into_iter()
        .map(|p| {
            let mut child = g.clone();
            child.position = p;
            for (l, d) in child.log_scales.iter_mut().zip(div) {
                *l -= d.ln();
            }
            child
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineAction {
    None,
    /// Parent kept and a nudged copy appended; the vec holds both.
    Clone(Vec<Gaussian3D>),
    /// Parent replaced by the children.
    Split(Vec<Gaussian3D>),
}

/// Gradient-driven densification. `world_grad` is the accumulated gradient of
/// the loss with respect to the world position, used to nudge clones.
pub fn baseline_densify<R: Rng + ?Sized>(
    g: &Gaussian3D,
    grad_norm: f64,
    world_grad: &Vector3<f64>,
    cfg: &DensifyConfig,
    rng: &mut R,
) -> Result<BaselineAction, DensifyError> {
    if !(grad_norm > cfg.tau_loss) {
        return Ok(BaselineAction::None);
    }
    let s2 = squared_scales(g);
    let rho = s2.iter().cloned().fold(f64::MIN, f64::max);
    if rho > cfg.tau_radius {
        let positions = sample_positions(g, 2, rng)?;
        let shrink = BASELINE_SPLIT_FACTOR.ln();
        let children = positions
            .into_iter()
            .map(|p| {
                let mut c = g.clone();
                c.position = p;
                c.log_scales.add_scalar_mut(-shrink);
                c
            })
            .collect();
        Ok(BaselineAction::Split(children))
    } else {
        let mut copy = g.clone();
        let n = world_grad.norm();
        if n > 0.0 && n.is_finite() {
            copy.position -= world_grad * (0.1 * rho.sqrt() / n);
        }
        Ok(BaselineAction::Clone(vec![g.clone(), copy]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneReason {
    Opacity,
    Spectrum,
}

pub fn prune_reason(g: &Gaussian3D, cfg: &DensifyConfig) -> Option<PruneReason> {
    let o = g.opacity();
    if !o.is_finite() || o < cfg.min_opacity {
        return Some(PruneReason::Opacity);
    }
    if !g.position.iter().all(|v| v.is_finite()) {
        return Some(PruneReason::Spectrum);
    }
    let cov = g.covariance();
    let Ok(sp) = cov.eig() else {
        return Some(PruneReason::Spectrum);
    };
    let scale: f64 = sp.eigenvalues.iter().map(|v| v.abs()).sum();
    let negative = sp.eigenvalues.iter().any(|&v| v < -EPS_PSD * scale);
    if !sp.psd || negative || !(condition_number_of(&sp.eigenvalues) <= cfg.kappa_max) {
        return Some(PruneReason::Spectrum);
    }
    None
}

pub fn prune(g: &Gaussian3D, cfg: &DensifyConfig) -> bool {
    prune_reason(g, cfg).is_some()
}

/// Result of one refinement pass. `origin[i]` is the index of the Gaussian in
/// the previous scene that `gaussians[i]` continues (optimizer state carries
/// over), or `None` for newly created Gaussians.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub gaussians: Vec<Gaussian3D>,
    pub origin: Vec<Option<usize>>,
    pub stats: DensifyStats,
}

/// One refinement pass over the scene: per Gaussian, prune, then
/// gradient-driven densify, then (if enabled) spectral split of the parent
/// when it survived the previous steps unchanged.
pub fn refine<R: Rng + ?Sized>(
    scene: &[Gaussian3D],
    grad_norms: &[f64],
    world_grads: &[Vector3<f64>],
    cfg: &DensifyConfig,
    spectral_split_enabled: bool,
    rng: &mut R,
) -> Result<RefineOutcome, DensifyError> {
    cfg.validate()?;
    assert_eq!(scene.len(), grad_norms.len());
    assert_eq!(scene.len(), world_grads.len());
    let mut out = RefineOutcome {
        gaussians: Vec::with_capacity(scene.len()),
        origin: Vec::with_capacity(scene.len()),
        stats: DensifyStats::default(),
    };
    for (i, g) in scene.iter().enumerate() {
        match prune_reason(g, cfg) {
            Some(PruneReason::Opacity) => {
                out.stats.pruned_opacity += 1;
                continue;
            }
            Some(PruneReason::Spectrum) => {
                out.stats.pruned_spectrum += 1;
                continue;
            }
            None => {}
        }
        let mut parent_alive = true;
        match baseline_densify(g, grad_norms[i], &world_grads[i], cfg, rng)? {
            BaselineAction::None => {}
            BaselineAction::Clone(mut pair) => {
                out.stats.cloned += 1;
                let copy = pair.pop().expect("clone yields two");
                out.gaussians.push(copy);
                out.origin.push(None);
            }
            BaselineAction::Split(children) => {
                out.stats.split_baseline += 1;
                parent_alive = false;
                out.origin.extend(std::iter::repeat_n(None, children.len()));
                out.gaussians.extend(children);
            }
        }
        if !parent_alive {
            continue;
        }
        if spectral_split_enabled && should_split_spectral(&g.covariance(), cfg.tau_spectral) {
            if let Ok(children) = spectral_split(g, cfg, rng) {
                out.stats.split_spectral += 1;
                out.origin.extend(std::iter::repeat_n(None, children.len()));
                out.gaussians.extend(children);
                continue;
            }
        }
        out.gaussians.push(g.clone());
        out.origin.push(Some(i));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::inverse_sigmoid;
    use crate::spectral::{condition_number, spectral_entropy, spectral_radius};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn needle(a: f64, b: f64, c: f64) -> Gaussian3D {
        Gaussian3D::new(
            Vector3::new(0.1, 0.2, 0.3),
            [1.0, 0.0, 0.0, 0.0],
            Vector3::new(a, b, c),
            0.7,
            [0.2, 0.4, 0.6],
        )
    }

    fn h(cov: &SymMat3) -> f64 {
        spectral_entropy(&cov.eig().unwrap()).unwrap()
    }

    fn k(cov: &SymMat3) -> f64 {
        condition_number(&cov.eig().unwrap())
    }

    #[test]
    fn spectral_trigger_examples() {
        assert!(should_split_spectral(&SymMat3::diag(25.0, 1.0, 1.0), 0.5));
        assert!(!should_split_spectral(&SymMat3::diag(9.0, 1.0, 1.0), 0.5));
        assert!(!should_split_spectral(&SymMat3::identity(), 0.5));
        assert!((h(&SymMat3::diag(25.0, 1.0, 1.0)) - 0.3154).abs() < 1e-4);
        assert!((h(&SymMat3::diag(9.0, 1.0, 1.0)) - 0.6002).abs() < 1e-4);
    }

    #[test]
    fn k_bound_examples() {
        assert!((split_k_bound(&SymMat3::diag(9.0, 1.0, 1.0), 1.0).unwrap() - 8.0).abs() < 1e-12);
        assert!(split_k_bound(&SymMat3::identity(), 1.0).unwrap().abs() < 1e-12);
        assert!(split_k_bound(&SymMat3::diag(4.0, 4.0, 4.0), 1.0).unwrap().abs() < 1e-12);
        assert_eq!(
            split_k_bound(&SymMat3::diag(1.0, 1.0, 0.0), 1.0).unwrap_err(),
            DensifyError::DegenerateCovariance
        );
    }

    #[test]
    fn spectral_split_example() {
        let g = needle(3.0, 1.0, 1.0);
        let cfg = DensifyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let children = spectral_split(&g, &cfg, &mut rng).unwrap();
        assert_eq!(children.len(), 2);
        for c in &children {
            let cov = c.covariance();
            assert!((cov.xx - 3.515625).abs() < 1e-12);
            assert!((cov.yy - 1.0).abs() < 1e-12 && (cov.zz - 1.0).abs() < 1e-12);
            assert!((k(&cov) - 3.515625).abs() < 1e-9);
            // -Σ tᵢ ln tᵢ for (3.515625, 1, 1) evaluated independently
            assert!((h(&cov) - 0.906_242_489_890_711_7).abs() < 1e-12);
            assert_eq!(c.opacity(), g.opacity());
            assert_eq!(c.sh_dc, g.sh_dc);
        }
        let same = DensifyConfig { k: 1e-300, ..cfg };
        for c in spectral_split(&g, &same, &mut rng).unwrap() {
            assert!((c.covariance().to_matrix() - g.covariance().to_matrix()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn spectral_split_clamps_k() {
        // bound for diag(9, 9, 1) is 2
        let g = needle(3.0, 3.0, 1.0);
        let cfg = DensifyConfig {
            k: 5.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let children = spectral_split(&g, &cfg, &mut rng).unwrap();
        let cov = children[0].covariance();
        let d = 1.0 + 0.95 * 2.0;
        assert!((cov.xx - 9.0 / (d * d)).abs() < 1e-9);
        assert!((cov.yy - 9.0 / (d * d)).abs() < 1e-9);
        assert!(k(&cov) <= 9.0);
    }

    #[test]
    fn child_positions_follow_parent_density() {
        let g = Gaussian3D::new(
            Vector3::new(1.0, -2.0, 0.5),
            [0.8, 0.3, -0.2, 0.4],
            Vector3::new(0.5, 0.2, 0.1),
            0.5,
            [0.5; 3],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let pts = sample_positions(&g, n, &mut rng).unwrap();
        let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + p) / n as f64;
        let cov = g.covariance().to_matrix();
        for i in 0..3 {
            let sigma = cov[(i, i)].sqrt();
            assert!((mean[i] - g.position[i]).abs() < 4.0 * sigma / (n as f64).sqrt());
        }
    }

    #[test]
    fn baseline_examples() {
        let cfg = DensifyConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = needle(3.0, 1.0, 1.0);
        let grad = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(
            baseline_densify(&g, 1e-5, &grad, &cfg, &mut rng).unwrap(),
            BaselineAction::None
        );
        let BaselineAction::Split(children) = baseline_densify(&g, 1e-3, &grad, &cfg, &mut rng).unwrap() else {
            panic!("expected split");
        };
        assert_eq!(children.len(), 2);
        for c in &children {
            let cov = c.covariance();
            assert!((cov.xx - 9.0 / 2.56).abs() < 1e-12);
            assert!((k(&cov) - 9.0).abs() < 1e-9);
            assert!((h(&cov) - h(&g.covariance())).abs() < 1e-12);
        }
        let small = Gaussian3D::isotropic(Vector3::zeros(), 0.001, 0.5, [0.5; 3]);
        let BaselineAction::Clone(pair) = baseline_densify(&small, 1e-3, &grad, &cfg, &mut rng).unwrap() else {
            panic!("expected clone");
        };
        assert_eq!(pair[0], small);
        assert_eq!(pair[1].log_scales, small.log_scales);
        assert!(pair[1].position.x < 0.0);
    }

    #[test]
    fn prune_examples() {
        let cfg = DensifyConfig::default();
        let mut g = Gaussian3D::isotropic(Vector3::zeros(), 0.1, 0.003, [0.5; 3]);
        assert_eq!(prune_reason(&g, &cfg), Some(PruneReason::Opacity));
        g.opacity_logit = inverse_sigmoid(0.9);
        assert!(!prune(&g, &cfg));
        let flat = needle(1.0, 1.0, 1e-5);
        assert_eq!(prune_reason(&flat, &cfg), Some(PruneReason::Spectrum));
        let mut nan = g.clone();
        nan.log_scales[0] = f64::NAN;
        assert!(prune(&nan, &cfg));
        let mut inf = g.clone();
        inf.position.y = f64::INFINITY;
        assert!(prune(&inf, &cfg));
    }

    #[test]
    fn refine_orders_and_tracks_origin() {
        let cfg = DensifyConfig::default();
        let scene = vec![
            Gaussian3D::isotropic(Vector3::zeros(), 0.1, 0.001, [0.5; 3]), // pruned
            needle(0.5, 0.1, 0.1),                                         // loss split
            needle(0.5, 0.1, 0.1),                                         // spectral split
            Gaussian3D::isotropic(Vector3::zeros(), 0.001, 0.5, [0.5; 3]), // clone
            Gaussian3D::isotropic(Vector3::zeros(), 0.1, 0.5, [0.5; 3]),   // untouched
        ];
        let grads = vec![1.0, 1.0, 0.0, 1.0, 0.0];
        let wg = vec![Vector3::x(); 5];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = refine(&scene, &grads, &wg, &cfg, true, &mut rng).unwrap();
        assert_eq!(
            out.stats,
            DensifyStats {
                cloned: 1,
                split_baseline: 1,
                split_spectral: 1,
                pruned_opacity: 1,
                pruned_spectrum: 0
            }
        );
        assert_eq!(out.gaussians.len(), 2 + 2 + 2 + 1);
        assert_eq!(out.origin, vec![None, None, None, None, None, Some(3), Some(4)]);

        let no_split = refine(&scene, &grads, &wg, &cfg, false, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(no_split.stats.split_spectral, 0);
        assert!(no_split.origin.contains(&Some(2)));

        let again = refine(&scene, &grads, &wg, &cfg, true, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(again.gaussians, out.gaussians);
    }

    #[test]
    fn rho_reduction_with_unique_maximum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = DensifyConfig::default();
        let g = Gaussian3D::new(
            Vector3::zeros(),
            [0.3, 0.1, 0.9, -0.2],
            Vector3::new(2.0, 0.3, 0.2),
            0.5,
            [0.5; 3],
        );
        let rho = spectral_radius(&g.covariance().eig().unwrap());
        let c = &spectral_split(&g, &cfg, &mut rng).unwrap()[0];
        let rho_c = spectral_radius(&c.covariance().eig().unwrap());
        assert!((rho_c - rho / 1.6f64.powi(2)).abs() < 1e-12 * rho);
    }

    #[test]
    fn config_validation() {
        assert!(DensifyConfig::default().validate().is_ok());
        assert!(DensifyConfig {
            k: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DensifyConfig {
            k0: 0.5,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DensifyConfig {
            children: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(DensifyConfig {
            min_opacity: 1.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        let c = DensifyConfig::for_extent(10.0);
        assert!((c.tau_radius - 0.01).abs() < 1e-15);
    }
}
