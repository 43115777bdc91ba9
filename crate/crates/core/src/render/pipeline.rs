use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

use super::raster::{rasterize_backward, rasterize_with_tape, RasterSplat, RasterTape};
use super::{Framebuffer, RenderConfig, RenderError};
use crate::exec;
use crate::filters::{opacity_scale, view_consistent_kernel, FilterMode, FilteredSplat};
use crate::scene::{
    in_frustum, normalize_quaternion, projection_jacobian, quaternion_to_matrix, sigmoid, CameraView, Gaussian3D,
    Splat2D, SH_C0,
};
use crate::spectral::{spectral_entropy, SymMat2};

/// Filtering applied on the way from world space to the rasterizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub filter: FilterMode,
    /// World-space smoothing strength s; uses each Gaussian's ν̂. Gaussians
    /// without a recorded sampling rate are left unsmoothed.
    pub smoothing_3d: Option<f64>,
}

impl From<FilterMode> for PipelineOptions {
    fn from(filter: FilterMode) -> Self {
        Self {
            filter,
            smoothing_3d: None,
        }
    }
}

/// Intermediate quantities of one visible Gaussian, kept for the backward pass.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedSplat {
    pub index: usize,
    pub mean_cam: Vector3<f64>,
    pub jacobian: Matrix2x3<f64>,
    /// Camera-space covariance W Σ Wᵀ (after 3D smoothing).
    pub cov_cam: Matrix3<f64>,
    pub splat: Splat2D,
    pub filtered: FilteredSplat,
    /// Screen-space kernel added to the projected covariance.
    pub kernel: f64,
    /// Whether the kernel depends on depth (view-consistent zoom-in).
    pub kernel_depth_dependent: bool,
    /// World-space smoothing variance, zero when disabled.
    pub smoothing_var: f64,
    /// Opacity after 3D smoothing, before the 2D filter.
    pub opacity_3d: f64,
}

#[derive(Debug, Clone)]
pub struct RenderTape {
    pub view: CameraView,
    pub options: PipelineOptions,
    pub projected: Vec<ProjectedSplat>,
    raster: Vec<RasterSplat>,
    raster_tape: RasterTape,
}

impl RenderTape {
    pub fn visible_count(&self) -> usize {
        self.projected.len()
    }
}

/// Parameter gradients of one Gaussian. `mean2d` is dL/dμ_proj in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianGrad {
    pub position: Vector3<f64>,
    pub rotation: [f64; 4],
    pub log_scales: Vector3<f64>,
    pub opacity_logit: f64,
    pub sh_dc: [f64; 3],
    pub mean2d: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct SceneGrad {
    pub grads: Vec<GaussianGrad>,
    pub visible: Vec<bool>,
}

fn effective_shape(g: &Gaussian3D, options: &PipelineOptions) -> (Vector3<f64>, f64, f64) {
    let o = g.opacity();
    match (options.smoothing_3d, g.max_sampling_rate) {
        (Some(s), Some(rate)) if rate > 0.0 && s > 0.0 => {
            let var = s / (rate * rate);
            let mut ratio = 1.0;
            let ls = g.log_scales.map(|l| {
                let s2 = (2.0 * l).exp();
                ratio *= s2 / (s2 + var);
                0.5 * (s2 + var).ln()
            });
            (ls, o * ratio.sqrt(), var)
        }
        _ => (g.log_scales, o, 0.0),
    }
}

fn project_one(g: &Gaussian3D, index: usize, view: &CameraView, options: &PipelineOptions) -> Option<ProjectedSplat> {
    let (log_scales, opacity_3d, smoothing_var) = effective_shape(g, options);
    let r = quaternion_to_matrix(&g.rotation);
    let m = r * Matrix3::from_diagonal(&log_scales.map(f64::exp));
    let cov_world = m * m.transpose();
    let mean_cam = view.to_camera(&g.position);
    let jacobian = projection_jacobian(&mean_cam, view.fx, view.fy).ok()?;
    let cov_cam = view.rotation * cov_world * view.rotation.transpose();
    let cov_proj = SymMat2::from_matrix(&(jacobian * cov_cam * jacobian.transpose()));
    if !cov_proj.is_finite() || !(cov_proj.det() > 0.0) {
        return None;
    }
    let mean = [
        view.fx * mean_cam.x / mean_cam.z + view.cx,
        view.fy * mean_cam.y / mean_cam.z + view.cy,
    ];
    if !mean.iter().all(|v| v.is_finite()) || !in_frustum(&mean, &cov_proj, view) {
        return None;
    }
    let splat = Splat2D {
        mean,
        cov: cov_proj,
        depth: mean_cam.z,
        opacity: opacity_3d,
        color: g.rgb(),
        source_index: index,
    };
    let (kernel, kernel_depth_dependent, attenuate) = match options.filter {
        FilterMode::None => (0.0, false, false),
        FilterMode::Ewa { s } => (s, false, false),
        FilterMode::Mip { s } => (s, false, true),
        FilterMode::ViewConsistent { s0 } => {
            let ref_ratio = g.max_sampling_rate.unwrap_or(view.fx / mean_cam.z);
            let k = view_consistent_kernel(s0, view.fx, mean_cam.z, ref_ratio);
            (k, k > s0, true)
        }
    };
    let cov_f = cov_proj.add_diagonal(kernel);
    let opacity = if attenuate {
        opacity_3d * opacity_scale(&cov_proj, &cov_f)
    } else {
        opacity_3d
    };
    Some(ProjectedSplat {
        index,
        mean_cam,
        jacobian,
        cov_cam,
        splat,
        filtered: FilteredSplat { cov: cov_f, opacity },
        kernel,
        kernel_depth_dependent,
        smoothing_var,
        opacity_3d,
    })
}

fn project_scene(
    scene: &[Gaussian3D],
    view: &CameraView,
    options: &PipelineOptions,
    parallel: bool,
) -> Vec<ProjectedSplat> {
    exec::map_slice(scene, parallel, |i, g| project_one(g, i, view, options))
        .into_iter()
        .flatten()
        .collect()
}

/// Culled, projected and filtered splats of a scene, in scene order.
pub fn filtered_splats(scene: &[Gaussian3D], view: &CameraView, options: &PipelineOptions) -> Vec<ProjectedSplat> {
    project_scene(scene, view, options, true)
}

pub fn render(
    scene: &[Gaussian3D],
    view: &CameraView,
    options: &PipelineOptions,
    cfg: &RenderConfig,
) -> Result<(Framebuffer, RenderTape), RenderError> {
    cfg.validate()?;
    let projected = project_scene(scene, view, options, cfg.parallel);
    let raster: Vec<RasterSplat> = projected
        .iter()
        .map(|p| RasterSplat::new(&p.splat, &p.filtered))
        .collect();
    let (fb, raster_tape) = rasterize_with_tape(&raster, view.width, view.height, cfg)?;
    Ok((
        fb,
        RenderTape {
            view: view.clone(),
            options: *options,
            projected,
            raster,
            raster_tape,
        },
    ))
}

/// Cull, project, filter and rasterize.
pub fn splat_and_render(
    scene: &[Gaussian3D],
    view: &CameraView,
    mode: FilterMode,
    cfg: &RenderConfig,
) -> Result<Framebuffer, RenderError> {
    render(scene, view, &mode.into(), cfg).map(|(fb, _)| fb)
}

/// Blends each Gaussian's 3D spectral entropy instead of its color and
/// normalizes by accumulated opacity. Uncovered pixels read ln 3.
pub fn render_entropy_map(
    scene: &[Gaussian3D],
    view: &CameraView,
    mode: FilterMode,
    cfg: &RenderConfig,
) -> Result<Framebuffer, RenderError> {
    cfg.validate()?;
    let sentinel = 3f64.ln();
    let projected = project_scene(scene, view, &mode.into(), cfg.parallel);
    let raster: Vec<RasterSplat> = projected
        .iter()
        .map(|p| {
            let h = scene[p.index]
                .covariance()
                .eig()
                .ok()
                .and_then(|sp| spectral_entropy(&sp).ok())
                .unwrap_or(sentinel);
            let mut s = RasterSplat::new(&p.splat, &p.filtered);
            s.color = [h; 3];
            s
        })
        .collect();
    let cfg = RenderConfig {
        background: [0.0; 3],
        ..*cfg
    };
    let (mut fb, _) = rasterize_with_tape(&raster, view.width, view.height, &cfg)?;
    for (px, &a) in fb.rgb.iter_mut().zip(&fb.alpha) {
        let v = if a < 1e-4 { sentinel } else { px[0] / a };
        *px = [v; 3];
    }
    Ok(fb)
}

/// Partial derivatives of the rotation matrix of a unit quaternion.
fn rotation_partials(q: &[f64; 4]) -> [Matrix3<f64>; 4] {
    let [w, x, y, z] = *q;
    [
        Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

fn backward_one(
    g: &Gaussian3D,
    p: &ProjectedSplat,
    view: &CameraView,
    options: &PipelineOptions,
    rg: &super::RasterGrad,
) -> GaussianGrad {
    let mut out = GaussianGrad {
        mean2d: rg.mean,
        ..Default::default()
    };

    // Color: rgb = clamp(0.5 + C0·dc).
    for ch in 0..3 {
        let raw = 0.5 + SH_C0 * g.sh_dc[ch];
        if (0.0..=1.0).contains(&raw) {
            out.sh_dc[ch] = SH_C0 * rg.color[ch];
        }
    }

    // 2D filter: Σ_f = Σ_p + kI, o_f = o₃·√(|Σ_p|/|Σ_f|) for attenuating modes.
    let cov_p = p.splat.cov.to_matrix();
    let cov_f = p.filtered.cov.to_matrix();
    let mut g_cov_p = rg.cov;
    let mut d_opacity_3d = rg.opacity;
    let mut d_depth = 0.0;
    let attenuating = matches!(
        options.filter,
        FilterMode::Mip { .. } | FilterMode::ViewConsistent { .. }
    );
    if attenuating && p.opacity_3d > 0.0 {
        let ratio = p.filtered.opacity / p.opacity_3d;
        d_opacity_3d = rg.opacity * ratio;
        let inv_p = cov_p.try_inverse().unwrap_or_else(Matrix2::zeros);
        let inv_f = cov_f.try_inverse().unwrap_or_else(Matrix2::zeros);
        let d_log_ratio = rg.opacity * p.filtered.opacity;
        g_cov_p += (inv_p - inv_f) * (0.5 * d_log_ratio);
        if p.kernel_depth_dependent {
            let d_kernel = rg.cov.trace() - 0.5 * d_log_ratio * inv_f.trace();
            d_depth += d_kernel * (-2.0 * p.kernel / p.mean_cam.z);
        }
    }

    // Projection: Σ_p = J Σ' Jᵀ, μ_proj = f·(x, y)/z + c.
    let j = p.jacobian;
    let g_cov_cam = j.transpose() * g_cov_p * j;
    let d_j = g_cov_p * j * p.cov_cam * 2.0;
    let (x, y, z) = (p.mean_cam.x, p.mean_cam.y, p.mean_cam.z);
    let (fx, fy) = (view.fx, view.fy);
    let z2 = z * z;
    let z3 = z2 * z;
    let mut d_cam = j.transpose() * nalgebra::Vector2::new(rg.mean[0], rg.mean[1]);
    d_cam.x += d_j[(0, 2)] * (-fx / z2);
    d_cam.y += d_j[(1, 2)] * (-fy / z2);
    d_cam.z += d_j[(0, 0)] * (-fx / z2)
        + d_j[(0, 2)] * (2.0 * fx * x / z3)
        + d_j[(1, 1)] * (-fy / z2)
        + d_j[(1, 2)] * (2.0 * fy * y / z3)
        + d_depth;
    out.position = view.rotation.transpose() * d_cam;
    let g_cov = view.rotation.transpose() * g_cov_cam * view.rotation;

    // Σ = M Mᵀ with M = R·S.
    let q = normalize_quaternion(&g.rotation);
    let r = quaternion_to_matrix(&q);
    let (ls_eff, _, _) = effective_shape(g, options);
    let s_eff = ls_eff.map(f64::exp);
    let m = r * Matrix3::from_diagonal(&s_eff);
    let d_m = (g_cov + g_cov.transpose()) * m;
    let rt_dm = r.transpose() * d_m;
    let d_r = d_m * Matrix3::from_diagonal(&s_eff);
    let partials = rotation_partials(&q);
    let d_qhat: [f64; 4] = std::array::from_fn(|k| d_r.component_mul(&partials[k]).sum());
    let norm = g.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        let dot: f64 = (0..4).map(|k| q[k] * d_qhat[k]).sum();
        out.rotation = std::array::from_fn(|k| (d_qhat[k] - q[k] * dot) / norm);
    }

    // 3D smoothing: s'² = s² + c, o₃ = o·Π√(s²/(s² + c)).
    let var = p.smoothing_var;
    for i in 0..3 {
        let d_ls_eff = rt_dm[(i, i)] * s_eff[i];
        if var > 0.0 {
            let s2 = (2.0 * g.log_scales[i]).exp();
            out.log_scales[i] = d_ls_eff * s2 / (s2 + var) + d_opacity_3d * p.opacity_3d * var / (s2 + var);
        } else {
            out.log_scales[i] = d_ls_eff;
        }
    }
    let o = sigmoid(g.opacity_logit);
    let d_o = if var > 0.0 && o > 0.0 {
        d_opacity_3d * p.opacity_3d / o
    } else {
        d_opacity_3d
    };
    out.opacity_logit = d_o * o * (1.0 - o);
    out
}

/// Backpropagates per-pixel dL/d(rgb) to every Gaussian parameter.
pub fn render_backward(
    scene: &[Gaussian3D],
    tape: &RenderTape,
    grad_rgb: &[[f64; 3]],
    cfg: &RenderConfig,
) -> Result<SceneGrad, RenderError> {
    let raster_grads = rasterize_backward(&tape.raster, &tape.raster_tape, cfg, grad_rgb)?;
    let per_splat = exec::map_slice(&tape.projected, cfg.parallel, |k, p| {
        backward_one(&scene[p.index], p, &tape.view, &tape.options, &raster_grads[k])
    });
    let mut out = SceneGrad {
        grads: vec![GaussianGrad::default(); scene.len()],
        visible: vec![false; scene.len()],
    };
    for (p, g) in tape.projected.iter().zip(per_splat) {
        out.grads[p.index] = g;
        out.visible[p.index] = true;
    }
    Ok(out)
}
