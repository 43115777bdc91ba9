//! Tile-based CPU rasterizer with an analytic backward pass.

mod pipeline;
mod raster;

pub use pipeline::{
    filtered_splats, render, render_backward, render_entropy_map, splat_and_render, GaussianGrad, PipelineOptions,
    ProjectedSplat, RenderTape, SceneGrad,
};
pub use raster::{rasterize, rasterize_backward, rasterize_with_tape, RasterGrad, RasterSplat, RasterTape};

use serde::{Deserialize, Serialize};

use crate::scene::SceneError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RenderError {
    #[error("splat {0} has a singular filtered covariance")]
    SingularCovariance(usize),
    #[error("invalid render config: {0}")]
    InvalidConfig(String),
    #[error("gradient buffer has {got} pixels, expected {expected}")]
    GradientShape { expected: usize, got: usize },
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub tile_size: usize,
    /// Squared Mahalanobis distance beyond which a splat contributes nothing.
    pub gaussian_cutoff: f64,
    pub background: [f64; 3],
    pub alpha_min: f64,
    pub alpha_max: f64,
    /// Blending stops once transmittance would fall below this.
    pub transmittance_min: f64,
    /// Spread tiles and splats over the thread pool (needs the `parallel` feature).
    pub parallel: bool,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            gaussian_cutoff: 9.0,
            background: [0.0; 3],
            alpha_min: 1.0 / 255.0,
            alpha_max: 0.99,
            transmittance_min: 1e-4,
            parallel: true,
        }
    }
}

impl RenderConfig {
    /// Everywhere-differentiable variant: no cutoff, no alpha floor, no early
    /// termination. Used for finite-difference checks.
    pub fn smooth() -> Self {
        Self {
            gaussian_cutoff: f64::INFINITY,
            alpha_min: 0.0,
            transmittance_min: 0.0,
            ..Self::default()
        }
    }

    pub fn sequential(self) -> Self {
        Self {
            parallel: false,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidConfig(m.to_string()));
        if self.tile_size == 0 {
            return bad("tile_size must be >= 1");
        }
        if !(self.gaussian_cutoff > 0.0) {
            return bad("gaussian_cutoff must be > 0");
        }
        if !(self.alpha_max > 0.0 && self.alpha_max < 1.0) {
            return bad("alpha_max must lie in (0, 1)");
        }
        if !(self.alpha_min >= 0.0 && self.alpha_min <= self.alpha_max) {
            return bad("alpha_min must lie in [0, alpha_max]");
        }
        if !(self.transmittance_min >= 0.0 && self.transmittance_min < 1.0) {
            return bad("transmittance_min must lie in [0, 1)");
        }
        if !self.background.iter().all(|c| c.is_finite()) {
            return bad("background must be finite");
        }
        Ok(())
    }
}

/// Row-major image with linear RGB in [0, 1] and accumulated opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct Framebuffer {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

impl Framebuffer {
    pub fn filled(width: u32, height: u32, rgb: [f64; 3]) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            rgb: vec![rgb; n],
            alpha: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rgb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rgb.is_empty()
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.rgb[y as usize * self.width as usize + x as usize]
    }

    /// 8-bit sRGB-agnostic quantization (round to nearest).
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb
            .iter()
            .flat_map(|p| p.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() as u8))
            .collect()
    }

    /// First channel of every pixel, for scalar renders.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.rgb.iter().map(|p| p[c]).collect()
    }
}
