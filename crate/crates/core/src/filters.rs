//! Screen- and object-space low-pass filters applied to Gaussian splats.
//!
//! * EWA: Σ_filter = Σ_proj + sI, opacity untouched.
//! * 2D Mip: same covariance, opacity rescaled by √(|Σ_proj| / |Σ_filter|).
//! * 3D smoothing: Σ ← Σ + (s/ν̂²)I in world space with the matching
//!   opacity rescale, where ν̂ is the highest training sampling rate.
//! * View-consistent: like Mip, but the kernel grows with (f / depth)² so the
//!   condition number of the filtered splat does not change under zoom.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2x3, Matrix3x2};
use serde::{Deserialize, Serialize};

use crate::scene::{in_frustum, inverse_sigmoid, project, CameraView, Gaussian3D, Splat2D, NEAR_PLANE};
use crate::spectral::SymMat2;

pub const DEFAULT_EWA_S: f64 = 0.3;
pub const DEFAULT_MIP_S: f64 = 0.1;
pub const DEFAULT_VIEW_CONSISTENT_S0: f64 = 0.1;
pub const DEFAULT_SMOOTHING_3D_S: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("gaussian has no recorded sampling rate (not visible in any training view)")]
    NoVisibility,
    #[error("training jacobian is rank deficient")]
    RankDeficient,
    #[error("splat is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("invalid filter: {0}")]
    Invalid(String),
}

/// Screen-space filter selection. Kernel sizes are in pixels².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FilterMode {
    None,
    Ewa { s: f64 },
    Mip { s: f64 },
    ViewConsistent { s0: f64 },
}

impl FilterMode {
    pub fn ewa() -> Self {
        Self::Ewa { s: DEFAULT_EWA_S }
    }

    pub fn mip() -> Self {
        Self::Mip { s: DEFAULT_MIP_S }
    }

    pub fn view_consistent() -> Self {
        Self::ViewConsistent {
            s0: DEFAULT_VIEW_CONSISTENT_S0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Ewa { .. } => "ewa",
            Self::Mip { .. } => "mip",
            Self::ViewConsistent { .. } => "view-consistent",
        }
    }

    /// Kernel parameter (s or s₀), or zero for `None`.
    pub fn kernel(&self) -> f64 {
        match *self {
            Self::None => 0.0,
            Self::Ewa { s } | Self::Mip { s } => s,
            Self::ViewConsistent { s0 } => s0,
        }
    }

    /// Same mode with a different kernel parameter.
    pub fn with_kernel(self, k: f64) -> Result<Self, FilterError> {
        if !(k > 0.0) {
            return Err(FilterError::Invalid(format!("kernel must be positive, got {k}")));
        }
        Ok(match self {
            Self::None => Self::None,
            Self::Ewa { .. } => Self::Ewa { s: k },
            Self::Mip { .. } => Self::Mip { s: k },
            Self::ViewConsistent { .. } => Self::ViewConsistent { s0: k },
        })
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterMode {
    type Err = FilterError;

    /// Parses a mode name with its default kernel.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "ewa" => Ok(Self::ewa()),
            "mip" => Ok(Self::mip()),
            "view-consistent" => Ok(Self::view_consistent()),
            other => Err(FilterError::Invalid(format!(
                "unknown filter `{other}` (expected none, ewa, mip, view-consistent)"
            ))),
        }
    }
}

/// Covariance and opacity of a splat after filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredSplat {
    pub cov: SymMat2,
    pub opacity: f64,
}

/// √(|Σ_proj| / |Σ_proj + kernel|), zero for degenerate projections.
pub fn opacity_scale(cov_proj: &SymMat2, cov_filter: &SymMat2) -> f64 {
    let num = cov_proj.det();
    let den = cov_filter.det();
    if !(num > 0.0) || !(den > 0.0) {
        return 0.0;
    }
    (num / den).sqrt().min(1.0)
}

pub fn ewa_filter(splat: &Splat2D, s: f64) -> FilteredSplat {
    FilteredSplat {
        cov: splat.cov.add_diagonal(s),
        opacity: splat.opacity,
    }
}

pub fn mip_filter_2d(splat: &Splat2D, s: f64) -> FilteredSplat {
    let cov = splat.cov.add_diagonal(s);
    FilteredSplat {
        cov,
        opacity: splat.opacity * opacity_scale(&splat.cov, &cov),
    }
}

/// Kernel of the view-consistent filter: s₀·(f / (depth·ref_ratio))², never
/// smaller than s₀. `ref_ratio` is the training-time f/depth of the splat; 1.0
/// gives the plain s₀·f²/depth² kernel function.
pub fn view_consistent_kernel(s0: f64, focal: f64, depth: f64, ref_ratio: f64) -> f64 {
    let rel = focal / (depth * ref_ratio);
    s0 * (rel * rel).max(1.0)
}

pub fn view_consistent_filter(
    splat: &Splat2D,
    s0: f64,
    focal: f64,
    ref_ratio: f64,
) -> Result<FilteredSplat, FilterError> {
    if !(splat.depth > NEAR_PLANE) {
        return Err(FilterError::BehindCamera(splat.depth));
    }
    let kernel = view_consistent_kernel(s0, focal, splat.depth, ref_ratio);
    let cov = splat.cov.add_diagonal(kernel);
    Ok(FilteredSplat {
        cov,
        opacity: splat.opacity * opacity_scale(&splat.cov, &cov),
    })
}

/// Moore–Penrose right inverse Jᵀ(JJᵀ)⁻¹ of a 2×3 projection jacobian.
pub fn right_pseudo_inverse(j: &Matrix2x3<f64>) -> Result<Matrix3x2<f64>, FilterError> {
    let jjt = j * j.transpose();
    if jjt.determinant().abs() <= 1e-300 {
        return Err(FilterError::RankDeficient);
    }
    let inv = jjt.try_inverse().ok_or(FilterError::RankDeficient)?;
    Ok(j.transpose() * inv)
}

/// Blur covariance (J_test·J_train⁺)·sI·(J_test·J_train⁺)ᵀ − sI. Indefinite
/// when the test view samples more coarsely than the training view.
pub fn blur_kernel(j_test: &Matrix2x3<f64>, j_train_pinv: &Matrix3x2<f64>, s: f64) -> SymMat2 {
    let m = j_test * j_train_pinv;
    SymMat2::from_matrix(&(m * m.transpose() * s)).add_diagonal(-s)
}

/// View-consistent filter through an explicit training jacobian. An
/// indefinite blur (zoom-out) is clamped to zero, leaving the Mip kernel sI.
pub fn view_consistent_filter_exact(
    splat: &Splat2D,
    j_test: &Matrix2x3<f64>,
    j_train_pinv: &Matrix3x2<f64>,
    s: f64,
) -> FilteredSplat {
    let blur = blur_kernel(j_test, j_train_pinv, s);
    let blur = match blur.eig() {
        Ok(sp) if sp.psd => blur,
        _ => SymMat2::diag(0.0, 0.0),
    };
    let cov = splat.cov.add(&blur).add_diagonal(s);
    FilteredSplat {
        cov,
        opacity: splat.opacity * opacity_scale(&splat.cov, &cov),
    }
}

/// World-space smoothing Σ ← Σ + (s/ν̂²)·I, applied in the eigenbasis so the
/// result stays in rotation/log-scale form.
pub fn smoothing_filter_3d(g: &Gaussian3D, s: f64) -> Result<Gaussian3D, FilterError> {
    let rate = g.max_sampling_rate.ok_or(FilterError::NoVisibility)?;
    if !(rate > 0.0) {
        return Err(FilterError::NoVisibility);
    }
    let var = s / (rate * rate);
    let mut out = g.clone();
    let mut ratio = 1.0;
    for i in 0..3 {
        let s2 = (2.0 * g.log_scales[i]).exp();
        out.log_scales[i] = 0.5 * (s2 + var).ln();
        ratio *= s2 / (s2 + var);
    }
    out.opacity_logit = inverse_sigmoid(g.opacity() * ratio.sqrt());
    Ok(out)
}

/// Largest f_x / depth over the views in which `g` is not culled.
pub fn max_sampling_rate(g: &Gaussian3D, views: &[CameraView]) -> Option<f64> {
    views
        .iter()
        .filter_map(|v| {
            let splat = project(g, v, 0).ok()?;
            in_frustum(&splat.mean, &splat.cov, v).then(|| v.fx / splat.depth)
        })
        .reduce(f64::max)
}

pub fn update_max_sampling_rate(g: &Gaussian3D, views: &[CameraView]) -> Gaussian3D {
    Gaussian3D {
        max_sampling_rate: max_sampling_rate(g, views),
        ..g.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::projection_jacobian;
    use crate::spectral::{condition_number, spectral_entropy, SymMat3};
    use nalgebra::{Matrix3, Vector3};

    fn splat(cov: SymMat2, opacity: f64) -> Splat2D {
        Splat2D {
            mean: [0.0, 0.0],
            cov,
            depth: 2.0,
            opacity,
            color: [0.5; 3],
            source_index: 0,
        }
    }

    fn kappa(m: &SymMat2) -> f64 {
        condition_number(&m.eig().unwrap())
    }

    #[test]
    fn ewa_examples() {
        let f = ewa_filter(&splat(SymMat2::identity(), 0.7), 0.3);
        assert_eq!(f.cov, SymMat2::diag(1.3, 1.3));
        assert_eq!(f.opacity, 0.7);
        let f = ewa_filter(&splat(SymMat2::diag(9.0, 1.0), 0.7), 0.3);
        assert!((kappa(&f.cov) - 9.3 / 1.3).abs() < 1e-12);
        let f = ewa_filter(&splat(SymMat2::diag(9.0, 1.0), 0.7), 0.0);
        assert_eq!(f.cov, SymMat2::diag(9.0, 1.0));
    }

    #[test]
    fn mip_examples() {
        let f = mip_filter_2d(&splat(SymMat2::identity(), 1.0), 0.1);
        assert!((f.cov.xx - 1.1).abs() < 1e-15);
        assert!((f.opacity - 1.0 / 1.1).abs() < 1e-12);
        let f = mip_filter_2d(&splat(SymMat2::diag(1.0, 0.0), 0.8), 0.1);
        assert_eq!(f.opacity, 0.0);
        let s = splat(SymMat2::new(3.0, 0.4, 1.0), 0.6);
        assert_eq!(mip_filter_2d(&s, 0.1).cov, ewa_filter(&s, 0.1).cov);
        assert!(mip_filter_2d(&s, 0.1).opacity < ewa_filter(&s, 0.1).opacity);
    }

    #[test]
    fn smoothing_3d_examples() {
        let mut g = Gaussian3D::isotropic(Vector3::zeros(), 1.0, 0.5, [0.5; 3]);
        g.max_sampling_rate = Some(10.0);
        // s/ν̂² = 0.1
        let out = smoothing_filter_3d(&g, 10.0).unwrap();
        assert!((out.covariance().xx - 1.1).abs() < 1e-12);
        let expected = 0.5 * (1.0f64 / 1.1).powf(1.5);
        assert!((out.opacity() - expected).abs() < 1e-12);
        assert!((expected / 0.5 - 0.8668).abs() < 1e-4);

        let mut needle = Gaussian3D::new(
            Vector3::zeros(),
            [1.0, 0.0, 0.0, 0.0],
            Vector3::new(5.0, 1.0, 1.0),
            0.5,
            [0.5; 3],
        );
        needle.max_sampling_rate = Some(1.0);
        let out = smoothing_filter_3d(&needle, 1.0).unwrap();
        let before = needle.covariance().eig().unwrap();
        let after = out.covariance().eig().unwrap();
        assert!((condition_number(&after) - 13.0).abs() < 1e-9);
        assert!(spectral_entropy(&after).unwrap() > spectral_entropy(&before).unwrap());

        let out = smoothing_filter_3d(&needle, 0.0).unwrap();
        assert!(
            (out.covariance().to_matrix() - needle.covariance().to_matrix())
                .abs()
                .max()
                < 1e-12
        );
        assert!((out.opacity() - needle.opacity()).abs() < 1e-15);

        needle.max_sampling_rate = None;
        assert_eq!(
            smoothing_filter_3d(&needle, 1.0).unwrap_err(),
            FilterError::NoVisibility
        );
    }

    #[test]
    fn blur_kernel_examples() {
        let jt = projection_jacobian(&Vector3::new(0.1, -0.2, 2.0), 50.0, 50.0).unwrap();
        let pinv = right_pseudo_inverse(&jt).unwrap();
        let s = 0.1;
        let k = blur_kernel(&(jt * 2.0), &pinv, s);
        assert!((k.to_matrix() - nalgebra::Matrix2::identity() * 3.0 * s).abs().max() < 1e-12);
        let k = blur_kernel(&jt, &pinv, s);
        assert!(k.max_abs() < 1e-12);
        let k = blur_kernel(&(jt * 0.5), &pinv, s);
        assert!((k.to_matrix() + nalgebra::Matrix2::identity() * 0.75 * s).abs().max() < 1e-12);
        assert_eq!(
            right_pseudo_inverse(&Matrix2x3::zeros()).unwrap_err(),
            FilterError::RankDeficient
        );
    }

    #[test]
    fn view_consistent_examples() {
        let mut s = splat(SymMat2::diag(2.0, 0.5), 0.9);
        s.depth = 400.0;
        assert!((view_consistent_kernel(0.1, 800.0, 400.0, 1.0) - 0.4).abs() < 1e-15);
        let f = view_consistent_filter(&s, 0.1, 800.0, 1.0).unwrap();
        assert!((f.cov.xx - 2.4).abs() < 1e-12);

        // Zoom 2×: projected covariance and kernel both scale by 4.
        let base = view_consistent_filter(&s, 0.1, 800.0, 2.0).unwrap();
        let mut zoomed = s;
        zoomed.cov = s.cov.scale(4.0);
        let z = view_consistent_filter(&zoomed, 0.1, 1600.0, 2.0).unwrap();
        assert!((kappa(&base.cov) - kappa(&z.cov)).abs() < 1e-12);

        // At the training ratio with s₀ = s it is exactly the Mip filter.
        let vc = view_consistent_filter(&s, 0.1, 800.0, 2.0).unwrap();
        let mip = mip_filter_2d(&s, 0.1);
        assert_eq!(vc, mip);

        s.depth = 0.0;
        assert!(view_consistent_filter(&s, 0.1, 800.0, 1.0).is_err());
    }

    #[test]
    fn exact_path_matches_kernel_function_on_axis() {
        let g = Gaussian3D::new(
            Vector3::new(0.0, 0.0, 4.0),
            [0.9, 0.2, 0.1, 0.3],
            Vector3::new(0.2, 0.02, 0.05),
            0.8,
            [0.5; 3],
        );
        let cam = CameraView::new(Matrix3::identity(), Vector3::zeros(), 64.0, 64.0, 32.0, 32.0, 64, 64).unwrap();
        let j_train = projection_jacobian(&g.position, cam.fx, cam.fy).unwrap();
        let pinv = right_pseudo_inverse(&j_train).unwrap();
        for m in [1.0, 2.0, 4.0, 8.0] {
            let z = cam.zoomed(m);
            let sp = project(&g, &z, 0).unwrap();
            let j_test = projection_jacobian(&g.position, z.fx, z.fy).unwrap();
            let exact = view_consistent_filter_exact(&sp, &j_test, &pinv, 0.1);
            let approx = view_consistent_filter(&sp, 0.1, z.fx, cam.fx / 4.0).unwrap();
            assert!((exact.cov.to_matrix() - approx.cov.to_matrix()).abs().max() < 1e-9);
        }
        // Zoom-out is clamped to the training kernel.
        let z = cam.zoomed(0.5);
        let sp = project(&g, &z, 0).unwrap();
        let j_test = projection_jacobian(&g.position, z.fx, z.fy).unwrap();
        let exact = view_consistent_filter_exact(&sp, &j_test, &pinv, 0.1);
        assert_eq!(exact, mip_filter_2d(&sp, 0.1));
    }

    #[test]
    fn opacity_soundness_and_psd_difference() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let a: f64 = rng.random_range(0.0..5.0);
            let c: f64 = rng.random_range(0.0..5.0);
            let b = rng.random_range(-1.0..1.0) * (a * c).sqrt();
            let mut s = splat(SymMat2::new(a, b, c), rng.random_range(0.0..1.0));
            s.depth = rng.random_range(0.5..10.0);
            for f in [
                ewa_filter(&s, 0.3),
                mip_filter_2d(&s, 0.1),
                view_consistent_filter(&s, 0.1, 10.0, 1.0).unwrap(),
            ] {
                assert!(f.opacity >= 0.0 && f.opacity <= s.opacity);
                let diff = f.cov.sub(&s.cov).eig().unwrap();
                assert!(diff.psd && diff.min_eigenvalue() >= 0.0);
            }
        }
        let s = splat(SymMat2::diag(2.0, 1.0), 0.5);
        assert_eq!(mip_filter_2d(&s, 0.0).opacity, 0.5);
    }

    #[test]
    fn sampling_rate_tracks_closest_view() {
        let g = Gaussian3D::isotropic(Vector3::new(0.0, 0.0, 0.0), 0.1, 0.5, [0.5; 3]);
        let far = CameraView::new(
            Matrix3::identity(),
            Vector3::new(0.0, 0.0, 2.0),
            1.0,
            1.0,
            4.0,
            4.0,
            8,
            8,
        )
        .unwrap();
        let near = CameraView::new(
            Matrix3::identity(),
            Vector3::new(0.0, 0.0, 1.0),
            1.0,
            1.0,
            4.0,
            4.0,
            8,
            8,
        )
        .unwrap();
        assert_eq!(max_sampling_rate(&g, std::slice::from_ref(&far)), Some(0.5));
        assert_eq!(
            update_max_sampling_rate(&g, &[far.clone(), near]).max_sampling_rate,
            Some(1.0)
        );
        let behind = CameraView::new(
            Matrix3::identity(),
            Vector3::new(0.0, 0.0, -1.0),
            1.0,
            1.0,
            4.0,
            4.0,
            8,
            8,
        )
        .unwrap();
        let invisible = update_max_sampling_rate(&g, &[behind]);
        assert_eq!(invisible.max_sampling_rate, None);
        assert!(smoothing_filter_3d(&invisible, 0.2).is_err());
        let _ = SymMat3::identity();
    }

    #[test]
    fn filter_mode_parsing() {
        assert_eq!("mip".parse::<FilterMode>().unwrap(), FilterMode::Mip { s: 0.1 });
        assert_eq!("view-consistent".parse::<FilterMode>().unwrap().kernel(), 0.1);
        assert_eq!("ewa".parse::<FilterMode>().unwrap().kernel(), 0.3);
        assert!("box".parse::<FilterMode>().is_err());
        assert!(FilterMode::mip().with_kernel(-1.0).is_err());
    }
}
