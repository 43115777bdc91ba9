use nalgebra::Matrix2;

use super::{Framebuffer, RenderConfig, RenderError};
use crate::exec;
use crate::filters::FilteredSplat;
use crate::scene::Splat2D;
use crate::spectral::SymMat2;

/// Screen-space splat ready for blending: filtered covariance and opacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterSplat {
    pub mean: [f64; 2],
    pub cov: SymMat2,
    pub opacity: f64,
    pub color: [f64; 3],
    pub depth: f64,
    pub source_index: usize,
}

impl RasterSplat {
    pub fn new(splat: &Splat2D, filtered: &FilteredSplat) -> Self {
        Self {
            mean: splat.mean,
            cov: filtered.cov,
            opacity: filtered.opacity,
            color: splat.color,
            depth: splat.depth,
            source_index: splat.source_index,
        }
    }
}

/// Gradient of the loss with respect to one raster splat. `cov` is the full
/// symmetric matrix G with dL = tr(G·dΣ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterGrad {
    pub mean: [f64; 2],
    pub cov: Matrix2<f64>,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl Default for RasterGrad {
    fn default() -> Self {
        Self {
            mean: [0.0; 2],
            cov: Matrix2::zeros(),
            opacity: 0.0,
            color: [0.0; 3],
        }
    }
}

impl RasterGrad {
    fn add(&mut self, o: &Self) {
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        self.cov += o.cov;
        self.opacity += o.opacity;
        for c in 0..3 {
            self.color[c] += o.color[c];
        }
    }
}

/// Depth order and tile bins recorded by the forward pass.
#[derive(Debug, Clone)]
pub struct RasterTape {
    width: u32,
    height: u32,
    tiles_x: usize,
    conics: Vec<SymMat2>,
    /// Per tile, splat indices in front-to-back order.
    bins: Vec<Vec<u32>>,
}

impl RasterTape {
    pub fn tile_count(&self) -> usize {
        self.bins.len()
    }

    /// Total (tile, splat) pairs, a rough measure of blending work.
    pub fn pair_count(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }
}

struct Contribution {
    /// Position within the tile's bin.
    pos: usize,
    alpha: f64,
    transmittance: f64,
    clamped: bool,
    d: [f64; 2],
}

fn conic_of(s: &RasterSplat) -> Result<SymMat2, RenderError> {
    if !s.cov.is_finite() || !s.mean.iter().all(|v| v.is_finite()) {
        return Err(RenderError::SingularCovariance(s.source_index));
    }
    s.cov
        .inverse_spd()
        .ok_or(RenderError::SingularCovariance(s.source_index))
}

fn build_tape(splats: &[RasterSplat], width: u32, height: u32, cfg: &RenderConfig) -> Result<RasterTape, RenderError> {
    cfg.validate()?;
    let conics = splats.iter().map(conic_of).collect::<Result<Vec<_>, _>>()?;
    let mut order: Vec<u32> = (0..splats.len() as u32).collect();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
        sa.depth
            .total_cmp(&sb.depth)
            .then(sa.source_index.cmp(&sb.source_index))
            .then(a.cmp(&b))
    });
    let ts = cfg.tile_size;
    let tiles_x = (width as usize).div_ceil(ts);
    let tiles_y = (height as usize).div_ceil(ts);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    if width == 0 || height == 0 {
        return Ok(RasterTape {
            width,
            height,
            tiles_x,
            conics,
            bins,
        });
    }
    for &i in &order {
        let s = &splats[i as usize];
        let cutoff = effective_cutoff(s.opacity, cfg);
        if !(cutoff >= 0.0) {
            continue;
        }
        let Some((x0, x1, y0, y1)) = pixel_bounds(s, cutoff, width, height) else {
            continue;
        };
        let a = &conics[i as usize];
        let reach = cutoff * (1.0 + 1e-9) + 1e-9;
        for ty in y0 / ts..=y1 / ts {
            for tx in x0 / ts..=x1 / ts {
                // pixel centers of the tile, clipped to the bounding box
                let rx = ((tx * ts).max(x0) as f64 + 0.5, ((tx + 1) * ts - 1).min(x1) as f64 + 0.5);
                let ry = ((ty * ts).max(y0) as f64 + 0.5, ((ty + 1) * ts - 1).min(y1) as f64 + 0.5);
                if min_maha_over_rect(a, s.mean, rx, ry) <= reach {
                    bins[ty * tiles_x + tx].push(i);
                }
            }
        }
    }
    Ok(RasterTape {
        width,
        height,
        tiles_x,
        conics,
        bins,
    })
}

/// Largest Mahalanobis distance at which a splat of opacity `o` can still
/// pass the α threshold; negative when it never can.
fn effective_cutoff(o: f64, cfg: &RenderConfig) -> f64 {
    if !(o > 0.0) {
        return -1.0;
    }
    if cfg.alpha_min > 0.0 {
        if o < cfg.alpha_min {
            return -1.0;
        }
        cfg.gaussian_cutoff.min(2.0 * (o / cfg.alpha_min).ln())
    } else {
        cfg.gaussian_cutoff
    }
}

/// Minimum of dᵀ A d over the rectangle [x0, x1] × [y0, y1] of positions,
/// d = p − mean.
fn min_maha_over_rect(a: &SymMat2, mean: [f64; 2], (x0, x1): (f64, f64), (y0, y1): (f64, f64)) -> f64 {
    let (mx, my) = (mean[0], mean[1]);
    if (x0..=x1).contains(&mx) && (y0..=y1).contains(&my) {
        return 0.0;
    }
    let q = |dx: f64, dy: f64| a.xx * dx * dx + 2.0 * a.xy * dx * dy + a.yy * dy * dy;
    // on a convex quadratic the minimum over the rectangle lies on its boundary
    let on_vertical = |x: f64| {
        let dx = x - mx;
        let dy = (-(a.xy * dx) / a.yy + my).clamp(y0, y1) - my;
        q(dx, dy)
    };
    let on_horizontal = |y: f64| {
        let dy = y - my;
        let dx = (-(a.xy * dy) / a.xx + mx).clamp(x0, x1) - mx;
        q(dx, dy)
    };
    on_vertical(x0)
        .min(on_vertical(x1))
        .min(on_horizontal(y0))
        .min(on_horizontal(y1))
}

/// Inclusive pixel rectangle whose centers can lie within the cutoff.
fn pixel_bounds(s: &RasterSplat, cutoff: f64, width: u32, height: u32) -> Option<(usize, usize, usize, usize)> {
    let (w, h) = (width as f64, height as f64);
    let lmax = s.cov.eig().map(|sp| sp.eigenvalues[0]).unwrap_or(f64::INFINITY);
    let r = (cutoff * lmax).sqrt() * (1.0 + 1e-9) + 1e-9;
    let range = |m: f64, size: f64| -> Option<(usize, usize)> {
        let lo = (m - r - 0.5).ceil().max(0.0);
        let hi = (m + r - 0.5).floor().min(size - 1.0);
        (lo <= hi && !lo.is_nan() && !hi.is_nan()).then_some((lo as usize, hi as usize))
    };
    let (x0, x1) = range(s.mean[0], w)?;
    let (y0, y1) = range(s.mean[1], h)?;
    Some((x0, x1, y0, y1))
}

/// Bin entry with everything the blend loop touches, stored contiguously.
#[derive(Clone, Copy)]
struct Packed {
    mean: [f64; 2],
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

fn pack(list: &[u32], splats: &[RasterSplat], conics: &[SymMat2]) -> Vec<Packed> {
    list.iter()
        .map(|&i| {
            let (s, a) = (&splats[i as usize], &conics[i as usize]);
            Packed {
                mean: s.mean,
                conic: [a.xx, a.xy, a.yy],
                opacity: s.opacity,
                color: s.color,
            }
        })
        .collect()
}

/// Front-to-back blend at one pixel center; `visit` sees every contribution.
fn shade(
    px: f64,
    py: f64,
    list: &[Packed],
    cfg: &RenderConfig,
    mut visit: impl FnMut(Contribution),
) -> ([f64; 3], f64) {
    let mut t = 1.0;
    let mut c = [0.0; 3];
    for (pos, s) in list.iter().enumerate() {
        let a = &s.conic;
        let d = [px - s.mean[0], py - s.mean[1]];
        let maha = a[0] * d[0] * d[0] + 2.0 * a[1] * d[0] * d[1] + a[2] * d[1] * d[1];
        if !(maha <= cfg.gaussian_cutoff) {
            continue;
        }
        let raw = s.opacity * (-0.5 * maha).exp();
        let clamped = raw > cfg.alpha_max;
        let alpha = if clamped { cfg.alpha_max } else { raw };
        if alpha < cfg.alpha_min || alpha <= 0.0 {
            continue;
        }
        let next = t * (1.0 - alpha);
        if next < cfg.transmittance_min {
            break;
        }
        for (acc, col) in c.iter_mut().zip(s.color) {
            *acc += col * alpha * t;
        }
        visit(Contribution {
            pos,
            alpha,
            transmittance: t,
            clamped,
            d,
        });
        t = next;
    }
    (c, t)
}

fn tile_pixels(tape: &RasterTape, tile: usize, ts: usize) -> impl Iterator<Item = (usize, usize)> {
    let (tx, ty) = (tile % tape.tiles_x, tile / tape.tiles_x);
    let x0 = tx * ts;
    let y0 = ty * ts;
    let x1 = (x0 + ts).min(tape.width as usize);
    let y1 = (y0 + ts).min(tape.height as usize);
    (y0..y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
}

pub fn rasterize(
    splats: &[RasterSplat],
    width: u32,
    height: u32,
    cfg: &RenderConfig,
) -> Result<Framebuffer, RenderError> {
    rasterize_with_tape(splats, width, height, cfg).map(|(fb, _)| fb)
}

pub fn rasterize_with_tape(
    splats: &[RasterSplat],
    width: u32,
    height: u32,
    cfg: &RenderConfig,
) -> Result<(Framebuffer, RasterTape), RenderError> {
    let tape = build_tape(splats, width, height, cfg)?;
    let ts = cfg.tile_size;
    let tiles = exec::map_indexed(tape.bins.len(), cfg.parallel, |tile| {
        let packed = pack(&tape.bins[tile], splats, &tape.conics);
        tile_pixels(&tape, tile, ts)
            .map(|(x, y)| {
                let (c, t) = shade(x as f64 + 0.5, y as f64 + 0.5, &packed, cfg, |_| {});
                let rgb = std::array::from_fn(|ch| c[ch] + cfg.background[ch] * t);
                (x, y, rgb, 1.0 - t)
            })
            .collect::<Vec<_>>()
    });
    let mut fb = Framebuffer::filled(width, height, cfg.background);
    for (x, y, rgb, a) in tiles.into_iter().flatten() {
        let i = y * width as usize + x;
        fb.rgb[i] = rgb;
        fb.alpha[i] = a;
    }
    Ok((fb, tape))
}

/// Reverse-mode pass for dL/d(rgb) given per pixel. Per-tile partial sums are
/// merged in tile order, so the result does not depend on threading.
pub fn rasterize_backward(
    splats: &[RasterSplat],
    tape: &RasterTape,
    cfg: &RenderConfig,
    grad_rgb: &[[f64; 3]],
) -> Result<Vec<RasterGrad>, RenderError> {
    let expected = tape.width as usize * tape.height as usize;
    if grad_rgb.len() != expected {
        return Err(RenderError::GradientShape {
            expected,
            got: grad_rgb.len(),
        });
    }
    let ts = cfg.tile_size;
    let per_tile = exec::map_indexed(tape.bins.len(), cfg.parallel, |tile| {
        let list = &tape.bins[tile];
        if list.is_empty() {
            return Vec::new();
        }
        let packed = pack(list, splats, &tape.conics);
        let mut local = vec![RasterGrad::default(); list.len()];
        let mut contribs = Vec::new();
        for (x, y) in tile_pixels(tape, tile, ts) {
            let g = grad_rgb[y * tape.width as usize + x];
            if g == [0.0; 3] {
                continue;
            }
            contribs.clear();
            let (_, t_final) = shade(x as f64 + 0.5, y as f64 + 0.5, &packed, cfg, |c| contribs.push(c));
            let mut behind: [f64; 3] = std::array::from_fn(|ch| cfg.background[ch] * t_final);
            for c in contribs.iter().rev() {
                let s = &packed[c.pos];
                let acc = &mut local[c.pos];
                let w = c.alpha * c.transmittance;
                let mut d_alpha = 0.0;
                for ch in 0..3 {
                    acc.color[ch] += g[ch] * w;
                    d_alpha += g[ch] * (s.color[ch] * c.transmittance - behind[ch] / (1.0 - c.alpha));
                    behind[ch] += s.color[ch] * w;
                }
                if c.clamped {
                    continue;
                }
                let a = &s.conic;
                // α = o·exp(p), p = −½ dᵀ A d
                acc.opacity += d_alpha * c.alpha / s.opacity;
                let dp = d_alpha * c.alpha;
                let ad = [a[0] * c.d[0] + a[1] * c.d[1], a[1] * c.d[0] + a[2] * c.d[1]];
                acc.mean[0] += dp * ad[0];
                acc.mean[1] += dp * ad[1];
                let off = -0.5 * dp * c.d[0] * c.d[1];
                acc.cov[(0, 0)] += -0.5 * dp * c.d[0] * c.d[0];
                acc.cov[(0, 1)] += off;
                acc.cov[(1, 0)] += off;
                acc.cov[(1, 1)] += -0.5 * dp * c.d[1] * c.d[1];
            }
        }
        local
    });
    let mut out = vec![RasterGrad::default(); splats.len()];
    for (tile, local) in per_tile.iter().enumerate() {
        for (pos, g) in local.iter().enumerate() {
            out[tape.bins[tile][pos] as usize].add(g);
        }
    }
    // The accumulated `cov` entries are gradients with respect to the conic A;
    // map them to Σ through dA = −A dΣ A.
    for (g, a) in out.iter_mut().zip(&tape.conics) {
        let am = a.to_matrix();
        g.cov = -(am * g.cov * am);
    }
    Ok(out)
}
