//! Scene analysis, zoom benchmark, batch rendering and entropy maps, shared
//! by the command-line tool.

mod analyze;
pub mod plot;
mod views;
mod zoom;

pub use analyze::{analyze, quartiles, AnalyzeReport, AnalyzeSummary, GaussianRow};
pub use views::{entropy_color, entropy_map_image, render_views, ViewStats, ENTROPY_SENTINEL_COLOR};
pub use zoom::{analytic_filter_kappa, filter_splat, zoom_bench, TrendCheck, ZoomReport, ZoomRow, DEFAULT_MULTIPLIERS};

use crate::filters::FilterError;
use crate::io::{CameraError, ImageError, PlyError};
use crate::render::RenderError;

#[derive(Debug, thiserror::Error)]
pub enum WorkbenchError {
    #[error("scene is empty")]
    EmptyScene,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no Gaussian is visible from the base view")]
    NothingVisible,
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
