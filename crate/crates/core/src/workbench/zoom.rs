use std::fmt::Write;

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::analyze::{fmt_kappa, quartiles};
use super::WorkbenchError;
use crate::filters::{ewa_filter, mip_filter_2d, view_consistent_filter, FilterMode, FilteredSplat};
use crate::render::{filtered_splats, render, PipelineOptions, RenderConfig};
use crate::scene::{project, CameraView, Gaussian3D, Splat2D};
use crate::spectral::{condition_number, serialize_kappa, spectral_entropy};
use crate::train::loss::psnr;

/// Focal-length multipliers of the zoom protocol.
pub const DEFAULT_MULTIPLIERS: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Applies `mode` to a projected splat. `ref_ratio` is the f/depth the
/// view-consistent kernel is normalized to.
pub fn filter_splat(
    mode: FilterMode,
    splat: &Splat2D,
    focal: f64,
    ref_ratio: f64,
) -> Result<FilteredSplat, WorkbenchError> {
    Ok(match mode {
        FilterMode::None => FilteredSplat {
            cov: splat.cov,
            opacity: splat.opacity,
        },
        FilterMode::Ewa { s } => ewa_filter(splat, s),
        FilterMode::Mip { s } => mip_filter_2d(splat, s),
        FilterMode::ViewConsistent { s0 } => view_consistent_filter(splat, s0, focal, ref_ratio)?,
    })
}

/// Closed-form κ(J Σ' Jᵀ + sI) as a function of f_x²/μ_z², for a splat with
/// camera-space mean `mean_cam` and covariance `cov_cam`.
pub fn analytic_filter_kappa(cov_cam: &Matrix3<f64>, mean_cam: &Vector3<f64>, fx: f64, fy: f64, s: f64) -> f64 {
    let shear = Matrix3::new(
        1.0,
        0.0,
        -mean_cam.x / mean_cam.z,
        0.0,
        1.0,
        -mean_cam.y / mean_cam.z,
        0.0,
        0.0,
        1.0,
    );
    let c = shear * cov_cam * shear.transpose();
    let (a, b, d) = (c[(0, 0)], c[(0, 1)], c[(1, 1)]);
    let r = fy * fy / (fx * fx);
    let x = fx * fx / (mean_cam.z * mean_cam.z);
    let p = ((a - d * r).powi(2) + 4.0 * b * b * r).sqrt();
    (2.0 * s + (a + d * r + p) * x) / (2.0 * s + (a + d * r - p) * x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomRow {
    pub mode: String,
    pub multiplier: f64,
    pub splats: usize,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_q1: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_median: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_q3: f64,
    pub entropy_mean: f64,
    /// Against the reference scene rendered with the Mip filter, if given.
    pub psnr: Option<f64>,
    /// Filtered κ of the tracked on-axis splat.
    #[serde(serialize_with = "serialize_kappa")]
    pub tracked_kappa: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub analytic_kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub mode: String,
    pub expectation: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoomReport {
    /// Scene index of the Gaussian closest to the optical axis.
    pub tracked: usize,
    pub rows: Vec<ZoomRow>,
    pub checks: Vec<TrendCheck>,
}

impl ZoomReport {
    pub const CSV_HEADER: &'static str =
        "mode,multiplier,splats,kappa_q1,kappa_median,kappa_q3,entropy_mean,psnr,tracked_kappa,analytic_kappa";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.mode,
                r.multiplier,
                r.splats,
                fmt_kappa(r.kappa_q1),
                fmt_kappa(r.kappa_median),
                fmt_kappa(r.kappa_q3),
                r.entropy_mean,
                r.psnr.map(|p| p.to_string()).unwrap_or_default(),
                fmt_kappa(r.tracked_kappa),
                fmt_kappa(r.analytic_kappa),
            );
        }
        s
    }

    pub fn rows_for<'a>(&'a self, mode: &'a str) -> impl Iterator<Item = &'a ZoomRow> + 'a {
        self.rows.iter().filter(move |r| r.mode == mode)
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Relative tolerance for the view-consistent constancy check.
const CONSTANCY_TOL: f64 = 1e-9;

/// Renders `scene` at each focal multiplier of `base` and tabulates the
/// filtered-covariance spectra of the splats visible at the base view. The
/// view-consistent kernel is normalized to the base view, which plays the
/// role of the training camera.
pub fn zoom_bench(
    scene: &[Gaussian3D],
    base: &CameraView,
    modes: &[FilterMode],
    multipliers: &[f64],
    reference: Option<&[Gaussian3D]>,
    cfg: &RenderConfig,
) -> Result<ZoomReport, WorkbenchError> {
    if scene.is_empty() {
        return Err(WorkbenchError::EmptyScene);
    }
    if multipliers.is_empty() || multipliers.iter().any(|m| !(*m > 0.0)) {
        return Err(WorkbenchError::InvalidArgument("multipliers must be positive".into()));
    }
    if multipliers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(WorkbenchError::InvalidArgument(
            "multipliers must be strictly ascending".into(),
        ));
    }
    if modes.is_empty() {
        return Err(WorkbenchError::InvalidArgument("no filter modes given".into()));
    }

    let visible: Vec<usize> = filtered_splats(scene, base, &PipelineOptions::from(FilterMode::None))
        .iter()
        .map(|p| p.index)
        .collect();
    if visible.is_empty() {
        return Err(WorkbenchError::NothingVisible);
    }
    let axis_offset = |i: usize| {
        let m = base.to_camera(&scene[i].position);
        (m.x / m.z).hypot(m.y / m.z)
    };
    let tracked = *visible
        .iter()
        .min_by(|&&a, &&b| axis_offset(a).total_cmp(&axis_offset(b)))
        .expect("nonempty");

    let mut rows = Vec::new();
    for &mode in modes {
        for &m in multipliers {
            let view = base.zoomed(m);
            let mut kappas = Vec::with_capacity(visible.len());
            let mut entropy_sum = 0.0;
            let mut tracked_kappa = f64::NAN;
            for &i in &visible {
                let splat = project(&scene[i], &view, i).map_err(crate::render::RenderError::from)?;
                let ref_ratio = base.fx / splat.depth;
                let f = filter_splat(mode, &splat, view.fx, ref_ratio)?;
                let sp = f
                    .cov
                    .eig()
                    .map_err(|e| WorkbenchError::InvalidArgument(e.to_string()))?;
                let k = condition_number(&sp);
                if i == tracked {
                    tracked_kappa = k;
                }
                kappas.push(k);
                entropy_sum += spectral_entropy(&sp).unwrap_or(f64::NAN);
            }
            let g = &scene[tracked];
            let mean_cam = view.to_camera(&g.position);
            let cov_cam = view.rotation * g.covariance().to_matrix() * view.rotation.transpose();
            let kernel = match mode {
                FilterMode::ViewConsistent { s0 } => {
                    crate::filters::view_consistent_kernel(s0, view.fx, mean_cam.z, base.fx / mean_cam.z)
                }
                other => other.kernel(),
            };
            let analytic_kappa = analytic_filter_kappa(&cov_cam, &mean_cam, view.fx, view.fy, kernel);
            let psnr = match reference {
                Some(truth) => {
                    let (gt, _) = render(truth, &view, &FilterMode::mip().into(), cfg)?;
                    let (fb, _) = render(scene, &view, &mode.into(), cfg)?;
                    Some(psnr(&fb, &gt).map_err(|e| WorkbenchError::InvalidArgument(e.to_string()))?)
                }
                None => None,
            };
            let [q1, q2, q3] = quartiles(&kappas);
            rows.push(ZoomRow {
                mode: mode.name().to_string(),
                multiplier: m,
                splats: kappas.len(),
                kappa_q1: q1,
                kappa_median: q2,
                kappa_q3: q3,
                entropy_mean: entropy_sum / kappas.len() as f64,
                psnr,
                tracked_kappa,
                analytic_kappa,
            });
        }
    }
    let checks = modes.iter().filter_map(|mode| trend_check(*mode, &rows)).collect();
    Ok(ZoomReport { tracked, rows, checks })
}

fn trend_check(mode: FilterMode, rows: &[ZoomRow]) -> Option<TrendCheck> {
    let name = mode.name();
    let rs: Vec<&ZoomRow> = rows.iter().filter(|r| r.mode == name).collect();
    if rs.len() < 2 {
        return None;
    }
    let (expectation, passed, detail) = match mode {
        FilterMode::None => return None,
        FilterMode::ViewConsistent { .. } => {
            let first = rs[0];
            let worst = rs
                .iter()
                .flat_map(|r| {
                    [
                        rel(r.kappa_q1, first.kappa_q1),
                        rel(r.kappa_median, first.kappa_median),
                        rel(r.kappa_q3, first.kappa_q3),
                        rel(r.tracked_kappa, first.tracked_kappa),
                    ]
                })
                .fold(0.0, f64::max);
            (
                "constant",
                worst <= CONSTANCY_TOL,
                format!("max relative change {worst:e}"),
            )
        }
        _ => {
            let tracked_up = rs.windows(2).all(|w| w[1].tracked_kappa > w[0].tracked_kappa);
            let quartiles_up = rs.windows(2).all(|w| {
                w[1].kappa_q1 >= w[0].kappa_q1
                    && w[1].kappa_median >= w[0].kappa_median
                    && w[1].kappa_q3 >= w[0].kappa_q3
            });
            (
                "increasing",
                tracked_up && quartiles_up,
                format!("tracked strictly increasing: {tracked_up}, quartiles nondecreasing: {quartiles_up}"),
            )
        }
    };
    Some(TrendCheck {
        mode: name.to_string(),
        expectation,
        passed,
        detail,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}
