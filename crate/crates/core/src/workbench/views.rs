use std::path::{Path, PathBuf};

use serde::Serialize;

use super::analyze::quartiles;
use super::WorkbenchError;
use crate::io::{atomic_write, write_png};
use crate::render::{render, Framebuffer, PipelineOptions, RenderConfig};
use crate::scene::{CameraView, Gaussian3D};
use crate::spectral::{condition_number, serialize_kappa, spectral_entropy};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViewStats {
    pub id: u32,
    pub file: PathBuf,
    pub width: u32,
    pub height: u32,
    pub visible: usize,
    pub mean_alpha: f64,
    /// Median κ of the filtered screen-space covariances (NaN if none visible).
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_median: f64,
    pub entropy_mean: f64,
}

/// Renders every camera to `<out_dir>/view_<id>.png` and writes
/// `render_stats.json` alongside.
pub fn render_views(
    scene: &[Gaussian3D],
    cameras: &[(u32, CameraView)],
    options: &PipelineOptions,
    cfg: &RenderConfig,
    out_dir: &Path,
) -> Result<Vec<ViewStats>, WorkbenchError> {
    std::fs::create_dir_all(out_dir)?;
    let mut stats = Vec::with_capacity(cameras.len());
    for (id, cam) in cameras {
        let (fb, tape) = render(scene, cam, options, cfg)?;
        let file = PathBuf::from(format!("view_{id:03}.png"));
        write_png(&out_dir.join(&file), &fb)?;
        let spectra: Vec<_> = tape
            .projected
            .iter()
            .filter_map(|p| p.filtered.cov.eig().ok())
            .collect();
        let kappas: Vec<f64> = spectra.iter().map(condition_number).collect();
        let entropies: Vec<f64> = spectra.iter().filter_map(|s| spectral_entropy(s).ok()).collect();
        stats.push(ViewStats {
            id: *id,
            file,
            width: fb.width,
            height: fb.height,
            visible: tape.visible_count(),
            mean_alpha: fb.alpha.iter().sum::<f64>() / fb.alpha.len().max(1) as f64,
            kappa_median: quartiles(&kappas)[1],
            entropy_mean: if entropies.is_empty() {
                f64::NAN
            } else {
                entropies.iter().sum::<f64>() / entropies.len() as f64
            },
        });
    }
    let json = serde_json::to_string_pretty(&stats)?;
    atomic_write(&out_dir.join("render_stats.json"), json.as_bytes())?;
    Ok(stats)
}

/// Pixels no splat covers.
pub const ENTROPY_SENTINEL_COLOR: [u8; 3] = [48, 48, 48];

/// Blue at H = 0 to green at H = ln 3.
pub fn entropy_color(h: f64) -> [u8; 3] {
    let t = (h / 3f64.ln()).clamp(0.0, 1.0);
    [0, (255.0 * t).round() as u8, (255.0 * (1.0 - t)).round() as u8]
}

/// Colorized entropy map with a colorbar strip of `bar` rows underneath.
pub fn entropy_map_image(map: &Framebuffer, bar: u32) -> (u32, u32, Vec<u8>) {
    let (w, h) = (map.width, map.height);
    let mut rgb = Vec::with_capacity(3 * (w * (h + bar)) as usize);
    for (p, &a) in map.rgb.iter().zip(&map.alpha) {
        let c = if a < 1e-4 {
            ENTROPY_SENTINEL_COLOR
        } else {
            entropy_color(p[0])
        };
        rgb.extend_from_slice(&c);
    }
    for _ in 0..bar {
        for x in 0..w {
            let hv = 3f64.ln() * (x as f64 + 0.5) / w as f64;
            rgb.extend_from_slice(&entropy_color(hv));
        }
    }
    (w, h + bar, rgb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::FilterMode;
    use crate::render::render_entropy_map;
    use crate::synth::{synth_scene, SceneKind};

    #[test]
    fn colormap_ends() {
        assert_eq!(entropy_color(0.0), [0, 0, 255]);
        assert_eq!(entropy_color(3f64.ln()), [0, 255, 0]);
        assert_eq!(entropy_color(5.0), [0, 255, 0]);
    }

    #[test]
    fn isotropic_scene_is_green_and_empty_is_sentinel() {
        let s = synth_scene(SceneKind::Isotropic, 80, 2, 32, 32).unwrap();
        let cfg = RenderConfig::default();
        let map = render_entropy_map(&s.gaussians, &s.train_views[0], FilterMode::mip(), &cfg).unwrap();
        let (_, _, rgb) = entropy_map_image(&map, 0);
        let covered: Vec<&[u8]> = rgb
            .chunks(3)
            .zip(&map.alpha)
            .filter(|(_, a)| **a >= 1e-4)
            .map(|(c, _)| c)
            .collect();
        assert!(!covered.is_empty());
        assert!(covered.iter().all(|c| *c == [0, 255, 0]));

        let empty = render_entropy_map(&[], &s.train_views[0], FilterMode::mip(), &cfg).unwrap();
        let (w, h, rgb) = entropy_map_image(&empty, 4);
        assert_eq!((w, h), (32, 36));
        assert!(rgb[..32 * 32 * 3].chunks(3).all(|c| c == ENTROPY_SENTINEL_COLOR));
        assert_eq!(&rgb[rgb.len() - 3..], &entropy_color(3f64.ln() * 31.5 / 32.0));
    }

    #[test]
    fn render_views_writes_pngs_and_sidecar() {
        let s = synth_scene(SceneKind::Needles, 20, 2, 24, 24).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cams: Vec<(u32, CameraView)> = s
            .test_views
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, c)| (i as u32, c))
            .collect();
        let stats = render_views(
            &s.gaussians,
            &cams,
            &FilterMode::mip().into(),
            &RenderConfig::default(),
            dir.path(),
        )
        .unwrap();
        assert_eq!(stats.len(), 3);
        assert!(dir.path().join("view_002.png").exists());
        let sidecar: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("render_stats.json")).unwrap()).unwrap();
        assert_eq!(sidecar.as_array().unwrap().len(), 3);
    }
}
