//! Photometric loss (1 − λ)·L1 + λ·D-SSIM, its image gradient, and PSNR.

use crate::render::Framebuffer;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
pub const PSNR_CAP: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("image shapes differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
}

fn check(a: &Framebuffer, b: &Framebuffer) -> Result<(), LossError> {
    if a.width != b.width || a.height != b.height || a.rgb.len() != b.rgb.len() {
        return Err(LossError::ShapeMismatch(a.width, a.height, b.width, b.height));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    pub value: f64,
    pub l1: f64,
    pub dssim: f64,
    /// dL/d(rendered rgb) per pixel.
    pub grad: Vec<[f64; 3]>,
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let x = i as f64 - half;
        (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable "same" Gaussian blur with zero padding. Self-adjoint because the
/// kernel is symmetric. Symmetric taps are folded and the loops run over whole
/// rows so they vectorize.
fn blur(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW], tmp: &mut Vec<f64>, out: &mut Vec<f64>) {
    let r = SSIM_WINDOW / 2;
    tmp.resize(w * h, 0.0);
    out.resize(w * h, 0.0);
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let dst = &mut tmp[y * w..(y + 1) * w];
        if w > 2 * r {
            let n = w - 2 * r;
            let mid = &mut dst[r..w - r];
            for (d, s) in mid.iter_mut().zip(&row[r..w - r]) {
                *d = taps[r] * s;
            }
            for k in 1..=r {
                let t = taps[r + k];
                for ((d, a), b) in mid.iter_mut().zip(&row[r - k..r - k + n]).zip(&row[r + k..r + k + n]) {
                    *d += t * (a + b);
                }
            }
        }
        for x in (0..w).filter(|&x| x < r || x + r >= w) {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            dst[x] = (lo..=hi).map(|xx| taps[xx + r - x] * row[xx]).sum();
        }
    }
    for y in 0..h {
        let dst = &mut out[y * w..(y + 1) * w];
        let center = &tmp[y * w..(y + 1) * w];
        for (d, s) in dst.iter_mut().zip(center) {
            *d = taps[r] * s;
        }
        for k in 1..=r {
            let t = taps[r + k];
            match (y.checked_sub(k), (y + k < h).then_some(y + k)) {
                (Some(a), Some(b)) => {
                    let (ra, rb) = (&tmp[a * w..(a + 1) * w], &tmp[b * w..(b + 1) * w]);
                    for ((d, u), v) in dst.iter_mut().zip(ra).zip(rb) {
                        *d += t * (u + v);
                    }
                }
                (Some(a), None) | (None, Some(a)) => {
                    for (d, u) in dst.iter_mut().zip(&tmp[a * w..(a + 1) * w]) {
                        *d += t * u;
                    }
                }
                (None, None) => {}
            }
        }
    }
}

/// Mean SSIM over pixels and channels and, if requested, its gradient with
/// respect to `x`.
pub fn ssim_with_grad(x: &Framebuffer, y: &Framebuffer, want_grad: bool) -> Result<(f64, Vec<[f64; 3]>), LossError> {
    check(x, y)?;
    let (w, h) = (x.width as usize, x.height as usize);
    let n = w * h;
    let mut grad = vec![[0.0; 3]; if want_grad { n } else { 0 }];
    if n == 0 {
        return Ok((1.0, grad));
    }
    let taps = gaussian_taps();
    let mut tmp = Vec::new();
    let (mut mx, mut my, mut exx, mut eyy, mut exy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut total = 0.0;
    let norm = 1.0 / (3 * n) as f64;
    for c in 0..3 {
        let xc: Vec<f64> = x.rgb.iter().map(|p| p[c]).collect();
        let yc: Vec<f64> = y.rgb.iter().map(|p| p[c]).collect();
        blur(&xc, w, h, &taps, &mut tmp, &mut mx);
        blur(&yc, w, h, &taps, &mut tmp, &mut my);
        let sq: Vec<f64> = xc.iter().map(|v| v * v).collect();
        blur(&sq, w, h, &taps, &mut tmp, &mut exx);
        let sq: Vec<f64> = yc.iter().map(|v| v * v).collect();
        blur(&sq, w, h, &taps, &mut tmp, &mut eyy);
        let pr: Vec<f64> = xc.iter().zip(&yc).map(|(a, b)| a * b).collect();
        blur(&pr, w, h, &taps, &mut tmp, &mut exy);
        let (mut da, mut db, mut dc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            let (ux, uy) = (mx[i], my[i]);
            let n1 = 2.0 * ux * uy + SSIM_C1;
            let n2 = 2.0 * (exy[i] - ux * uy) + SSIM_C2;
            let d1 = ux * ux + uy * uy + SSIM_C1;
            let d2 = (exx[i] - ux * ux) + (eyy[i] - uy * uy) + SSIM_C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            if want_grad {
                da[i] = norm * s * (2.0 * uy / n1 - 2.0 * uy / n2 - 2.0 * ux / d1 + 2.0 * ux / d2);
                db[i] = -norm * s / d2;
                dc[i] = norm * 2.0 * s / n2;
            }
        }
        if want_grad {
            let (mut ga, mut gb, mut gc) = (Vec::new(), Vec::new(), Vec::new());
            blur(&da, w, h, &taps, &mut tmp, &mut ga);
            blur(&db, w, h, &taps, &mut tmp, &mut gb);
            blur(&dc, w, h, &taps, &mut tmp, &mut gc);
            for i in 0..n {
                grad[i][c] = ga[i] + 2.0 * xc[i] * gb[i] + yc[i] * gc[i];
            }
        }
    }
    Ok((total * norm, grad))
}

pub fn ssim(x: &Framebuffer, y: &Framebuffer) -> Result<f64, LossError> {
    ssim_with_grad(x, y, false).map(|(s, _)| s)
}

/// (1 − SSIM) / 2.
pub fn dssim(x: &Framebuffer, y: &Framebuffer) -> Result<f64, LossError> {
    ssim(x, y).map(|s| (1.0 - s) / 2.0)
}

/// Loss of `rendered` against `target` with D-SSIM weight `lambda`.
pub fn loss(rendered: &Framebuffer, target: &Framebuffer, lambda: f64) -> Result<LossOutput, LossError> {
    check(rendered, target)?;
    let count = (3 * rendered.len()).max(1) as f64;
    let mut l1 = 0.0;
    let mut grad: Vec<[f64; 3]> = rendered
        .rgb
        .iter()
        .zip(&target.rgb)
        .map(|(a, b)| {
            std::array::from_fn(|c| {
                let d = a[c] - b[c];
                l1 += d.abs();
                (1.0 - lambda) * d.signum() * (d != 0.0) as u8 as f64 / count
            })
        })
        .collect();
    l1 /= count;
    let mut dssim = 0.0;
    if lambda != 0.0 {
        let (s, g) = ssim_with_grad(rendered, target, true)?;
        dssim = (1.0 - s) / 2.0;
        for (out, gs) in grad.iter_mut().zip(&g) {
            for c in 0..3 {
                out[c] -= 0.5 * lambda * gs[c];
            }
        }
    }
    Ok(LossOutput {
        value: (1.0 - lambda) * l1 + lambda * dssim,
        l1,
        dssim,
        grad,
    })
}

pub fn mse(x: &Framebuffer, y: &Framebuffer) -> Result<f64, LossError> {
    check(x, y)?;
    let count = (3 * x.len()).max(1) as f64;
    Ok(x.rgb
        .iter()
        .zip(&y.rgb)
        .map(|(a, b)| (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>())
        .sum::<f64>()
        / count)
}

pub fn psnr_from_mse(m: f64) -> f64 {
    if m < 1e-10 {
        PSNR_CAP
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP)
    }
}

pub fn psnr(x: &Framebuffer, y: &Framebuffer) -> Result<f64, LossError> {
    mse(x, y).map(psnr_from_mse)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(w: u32, h: u32, mut f: impl FnMut(usize) -> [f64; 3]) -> Framebuffer {
        let mut fb = Framebuffer::filled(w, h, [0.0; 3]);
        for (i, p) in fb.rgb.iter_mut().enumerate() {
            *p = f(i);
        }
        fb
    }

    fn random_image(rng: &mut ChaCha8Rng, w: u32, h: u32) -> Framebuffer {
        let vals: Vec<[f64; 3]> = (0..w * h)
            .map(|_| std::array::from_fn(|_| rng.random_range(0.0..1.0)))
            .collect();
        image(w, h, |i| vals[i])
    }

    /// Direct windowed SSIM with explicit zero padding.
    fn reference_ssim(x: &Framebuffer, y: &Framebuffer) -> f64 {
        let (w, h) = (x.width as i64, x.height as i64);
        let half = 5i64;
        let g: Vec<f64> = (-half..=half).map(|i| (-(i * i) as f64 / 4.5).exp()).collect();
        let gs: f64 = g.iter().sum();
        let mut total = 0.0;
        for c in 0..3 {
            for py in 0..h {
                for px in 0..w {
                    let (mut ux, mut uy, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for dy in -half..=half {
                        for dx in -half..=half {
                            let (qx, qy) = (px + dx, py + dy);
                            if qx < 0 || qy < 0 || qx >= w || qy >= h {
                                continue;
                            }
                            let wgt = g[(dx + half) as usize] * g[(dy + half) as usize] / (gs * gs);
                            let i = (qy * w + qx) as usize;
                            let (a, b) = (x.rgb[i][c], y.rgb[i][c]);
                            ux += wgt * a;
                            uy += wgt * b;
                            xx += wgt * a * a;
                            yy += wgt * b * b;
                            xy += wgt * a * b;
                        }
                    }
                    let sxx = xx - ux * ux;
                    let syy = yy - uy * uy;
                    let sxy = xy - ux * uy;
                    total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * sxy + SSIM_C2))
                        / ((ux * ux + uy * uy + SSIM_C1) * (sxx + syy + SSIM_C2));
                }
            }
        }
        total / (3 * w * h) as f64
    }

    #[test]
    fn identical_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = random_image(&mut rng, 16, 12);
        let out = loss(&a, &a, 0.2).unwrap();
        assert!(out.value.abs() < 1e-15);
        assert!(dssim(&a, &a).unwrap().abs() < 1e-12);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
    }

    #[test]
    fn pure_l1_offset() {
        let a = image(8, 8, |_| [0.3, 0.4, 0.5]);
        let b = image(8, 8, |_| [0.4, 0.5, 0.6]);
        assert!((loss(&a, &b, 0.0).unwrap().value - 0.1).abs() < 1e-12);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        let black = image(8, 8, |_| [0.0; 3]);
        let white = image(8, 8, |_| [1.0; 3]);
        assert!(psnr(&black, &white).unwrap().abs() < 1e-12);
    }

    #[test]
    fn matches_reference_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 19, 14);
        let b = random_image(&mut rng, 19, 14);
        let s_ref = reference_ssim(&a, &b);
        assert!((ssim(&a, &b).unwrap() - s_ref).abs() < 1e-12);
        let l1: f64 = a
            .rgb
            .iter()
            .zip(&b.rgb)
            .map(|(p, q)| (0..3).map(|c| (p[c] - q[c]).abs()).sum::<f64>())
            .sum::<f64>()
            / (3.0 * 19.0 * 14.0);
        let want = 0.8 * l1 + 0.2 * (1.0 - s_ref) / 2.0;
        assert!((loss(&a, &b, 0.2).unwrap().value - want).abs() < 1e-12);
    }

    #[test]
    fn inverted_pattern_is_near_maximal() {
        let a = image(24, 24, |i| if (i % 24 + i / 24) % 2 == 0 { [1.0; 3] } else { [0.0; 3] });
        let b = image(24, 24, |i| a.rgb[i].map(|v| 1.0 - v));
        assert!(dssim(&a, &b).unwrap() > 0.9);
        let c = image(24, 24, |_| [0.5; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = image(24, 24, |_| std::array::from_fn(|_| 0.5 + rng.random_range(-1e-4..1e-4)));
        assert!(dssim(&c, &d).unwrap() < 1e-3);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 13, 9);
        let b = random_image(&mut rng, 13, 9);
        let out = loss(&a, &b, 0.2).unwrap();
        let h = 1e-6;
        for _ in 0..40 {
            let i = rng.random_range(0..a.len());
            let c = rng.random_range(0..3);
            let mut p = a.clone();
            p.rgb[i][c] += h;
            let mut m = a.clone();
            m.rgb[i][c] -= h;
            let num = (loss(&p, &b, 0.2).unwrap().value - loss(&m, &b, 0.2).unwrap().value) / (2.0 * h);
            assert!(
                (num - out.grad[i][c]).abs() < 1e-7 * num.abs().max(1e-3),
                "{num} vs {}",
                out.grad[i][c]
            );
        }
    }

    #[test]
    fn shape_mismatch() {
        let a = image(4, 4, |_| [0.0; 3]);
        let b = image(4, 5, |_| [0.0; 3]);
        assert!(matches!(loss(&a, &b, 0.2), Err(LossError::ShapeMismatch(..))));
        assert!(psnr(&a, &b).is_err());
        assert!(dssim(&a, &b).is_err());
    }
}
