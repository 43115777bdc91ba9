//! Minimal line plotting into an RGB8 canvas, used for the zoom curves.

use super::zoom::{analytic_filter_kappa, ZoomReport};
use crate::filters::FilterMode;
use crate::scene::{CameraView, Gaussian3D};

#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, background: [u8; 3]) -> Self {
        Self {
            width,
            height,
            rgb: background.repeat(width as usize * height as usize),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = 3 * (y as usize * self.width as usize + x as usize);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width as usize + x as usize);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// Filled square of side 2·half+1 centered on (x, y).
    pub fn dot(&mut self, x: i64, y: i64, half: i64, c: [u8; 3]) {
        for dy in -half..=half {
            for dx in -half..=half {
                self.set(x + dx, y + dy, c);
            }
        }
    }

    /// Bresenham line with a square pen.
    pub fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), half: i64, c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let (mut x, mut y, mut err) = (x0, y0, dx + dy);
        loop {
            self.dot(x, y, half, c);
            if x == x1 && y == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x += sx;
            }
            if e2 <= dx {
                err += dx;
                y += sy;
            }
        }
    }
}

pub const MODE_COLORS: [[u8; 3]; 4] = [[200, 60, 40], [40, 90, 200], [30, 150, 60], [150, 60, 170]];

/// Color of the `k`-th mode curve.
pub fn mode_color(k: usize) -> [u8; 3] {
    MODE_COLORS[k % MODE_COLORS.len()]
}

/// κ of the tracked splat against log₂ of the focal multiplier. Solid
/// lines are the closed form sampled densely, squares the measured values;
/// one color per mode in report order. The y axis is log κ.
pub fn zoom_curve(
    report: &ZoomReport,
    scene: &[Gaussian3D],
    base: &CameraView,
    modes: &[FilterMode],
    width: u32,
    height: u32,
) -> Canvas {
    let mut c = Canvas::new(width, height, [255; 3]);
    let (l, r, t, b) = (30i64, width as i64 - 12, 12i64, height as i64 - 30);
    let axis = [90, 90, 90];
    c.line((l, b), (r, b), 0, axis);
    c.line((l, t), (l, b), 0, axis);

    let ms: Vec<f64> = report.rows.iter().map(|r| r.multiplier).collect();
    let (m_lo, m_hi) = ms
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
    let g = &scene[report.tracked];
    let curve = |mode: FilterMode, m: f64| {
        let view = base.zoomed(m);
        let mean = view.to_camera(&g.position);
        let cov = view.rotation * g.covariance().to_matrix() * view.rotation.transpose();
        let k = match mode {
            FilterMode::ViewConsistent { s0 } => {
                crate::filters::view_consistent_kernel(s0, view.fx, mean.z, base.fx / mean.z)
            }
            other => other.kernel(),
        };
        analytic_filter_kappa(&cov, &mean, view.fx, view.fy, k)
    };
    const SAMPLES: usize = 200;
    let sample_m = |i: usize| m_lo * (m_hi / m_lo).powf(i as f64 / SAMPLES as f64);
    let mut all: Vec<f64> = report.rows.iter().map(|r| r.tracked_kappa).collect();
    for &mode in modes {
        all.extend((0..=SAMPLES).map(|i| curve(mode, sample_m(i))));
    }
    all.retain(|k| k.is_finite() && *k > 0.0);
    if all.is_empty() {
        return c;
    }
    let (k_lo, k_hi) = all
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(a, b), &k| (a.min(k.ln()), b.max(k.ln())));
    let span_m = (m_hi / m_lo).log2().max(1e-12);
    let span_k = (k_hi - k_lo).max(1e-6);
    let px = |m: f64| l + (((m / m_lo).log2() / span_m) * (r - l) as f64).round() as i64;
    let py = |k: f64| b - (((k.ln() - k_lo) / span_k) * (b - t) as f64 * 0.9 + (b - t) as f64 * 0.05).round() as i64;

    for &m in &ms {
        c.line((px(m), b), (px(m), b + 5), 0, axis);
    }
    for (mi, &mode) in modes.iter().enumerate() {
        let col = mode_color(mi);
        let pts: Vec<(i64, i64)> = (0..=SAMPLES)
            .map(sample_m)
            .map(|m| (px(m), py(curve(mode, m))))
            .collect();
        for w in pts.windows(2) {
            c.line(w[0], w[1], 0, col);
        }
        for row in report.rows_for(mode.name()) {
            if row.tracked_kappa.is_finite() {
                c.dot(px(row.multiplier), py(row.tracked_kappa), 2, col);
            }
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_endpoints_and_clipping() {
        let mut c = Canvas::new(10, 8, [0; 3]);
        c.line((1, 1), (8, 5), 0, [9; 3]);
        assert_eq!(c.get(1, 1), [9; 3]);
        assert_eq!(c.get(8, 5), [9; 3]);
        assert_eq!(c.get(0, 7), [0; 3]);
        c.line((-5, -5), (20, 20), 1, [7; 3]);
        assert_eq!(c.get(4, 4), [7; 3]);
        assert_eq!(c.rgb.len(), 240);
    }
}
