//! Symmetric eigendecomposition and spectral shape metrics for Gaussian
//! covariances.
//!
//! The covariance of a Gaussian primitive is a small symmetric positive
//! semi-definite matrix. Its eigenvalues (the spectrum) describe the shape of
//! the ellipse/ellipsoid: the largest eigenvalue is the spectral radius, the
//! ratio of the extreme eigenvalues is the condition number, and the Shannon
//! entropy of the trace-normalized eigenvalues is the spectral entropy.
//!
//! 2×2 matrices use the closed-form characteristic polynomial. 3×3 matrices
//! use cyclic Jacobi rotations, which stay accurate for nearly degenerate
//! needle-shaped covariances.

use nalgebra::{Matrix2, Matrix3, SMatrix};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize, Serializer};

/// Relative tolerance below which negative eigenvalues are treated as float
/// noise and clamped to zero.
pub const EPS_PSD: f64 = 1e-9;

const JACOBI_TOLERANCE: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix trace is not positive")]
    ZeroTrace,
    #[error("matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("argument out of domain: {0}")]
    Domain(&'static str),
    #[error("sampling grid too small: {0}")]
    GridTooSmall(&'static str),
}

/// Symmetric 2×2 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

/// Symmetric 3×3 matrix stored as its upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMat3 {
    pub xx: f64,
    pub xy: f64,
    pub xz: f64,
    pub yy: f64,
    pub yz: f64,
    pub zz: f64,
}

impl SymMat2 {
    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    pub const fn identity() -> Self {
        Self::diag(1.0, 1.0)
    }

    /// Symmetric part of an arbitrary 2×2 matrix.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.xx, self.xy, self.xy, self.yy)
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn add_diagonal(&self, s: f64) -> Self {
        Self::new(self.xx + s, self.xy, self.yy + s)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(self.xx * c, self.xy * c, self.yy * c)
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }

    pub fn sub(&self, o: &Self) -> Self {
        Self::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }

    /// Inverse, or `None` when the determinant is not strictly positive.
    pub fn inverse_spd(&self) -> Option<Self> {
        let det = self.det();
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        let inv = 1.0 / det;
        Some(Self::new(self.yy * inv, -self.xy * inv, self.xx * inv))
    }

    pub fn eig(&self) -> Result<Spectrum<2>, SpectralError> {
        eig_sym2(self)
    }
}

impl SymMat3 {
    #[allow(clippy::too_many_arguments)]
    pub const fn new(xx: f64, xy: f64, xz: f64, yy: f64, yz: f64, zz: f64) -> Self {
        Self { xx, xy, xz, yy, yz, zz }
    }

    pub const fn diag(a: f64, b: f64, c: f64) -> Self {
        Self::new(a, 0.0, 0.0, b, 0.0, c)
    }

    pub const fn identity() -> Self {
        Self::diag(1.0, 1.0, 1.0)
    }

    /// Symmetric part of an arbitrary 3×3 matrix.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(
            m[(0, 0)],
            0.5 * (m[(0, 1)] + m[(1, 0)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            m[(1, 1)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            m[(2, 2)],
        )
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn det(&self) -> f64 {
        self.to_matrix().determinant()
    }

    pub fn add_diagonal(&self, s: f64) -> Self {
        Self::new(self.xx + s, self.xy, self.xz, self.yy + s, self.yz, self.zz + s)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_matrix(&(self.to_matrix() * c))
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        [self.xx, self.xy, self.xz, self.yy, self.yz, self.zz]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn eig(&self) -> Result<Spectrum<3>, SpectralError> {
        eig_sym3(self)
    }
}

/// Eigenvalues sorted in descending order with the matching orthonormal
/// eigenvectors stored as the columns of `basis`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum<const D: usize> {
    pub eigenvalues: [f64; D],
    pub basis: SMatrix<f64, D, D>,
    /// False when some eigenvalue was more negative than the PSD tolerance.
    pub psd: bool,
}

impl<const D: usize> Spectrum<D> {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[D - 1]
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// basis · diag(eigenvalues) · basisᵀ
    pub fn reconstruct(&self) -> SMatrix<f64, D, D> {
        let mut out = SMatrix::<f64, D, D>::zeros();
        for k in 0..D {
            let v = self.basis.column(k);
            out += v * v.transpose() * self.eigenvalues[k];
        }
        out
    }

    fn from_unsorted(values: [f64; D], basis: SMatrix<f64, D, D>) -> Self {
        let mut order: [usize; D] = std::array::from_fn(|i| i);
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let mut eigenvalues = [0.0; D];
        let mut sorted = SMatrix::<f64, D, D>::zeros();
        for (dst, &src) in order.iter().enumerate() {
            eigenvalues[dst] = values[src];
            sorted.set_column(dst, &basis.column(src));
        }
        let scale: f64 = eigenvalues.iter().map(|v| v.abs()).sum();
        let mut psd = true;
        for v in eigenvalues.iter_mut() {
            if *v < 0.0 {
                if *v >= -EPS_PSD * scale {
                    *v = 0.0;
                } else {
                    psd = false;
                }
            }
        }
        Self {
            eigenvalues,
            basis: sorted,
            psd,
        }
    }
}

impl Spectrum<3> {
    /// Middle eigenvalue over the smallest one.
    pub fn mid_ratio(&self) -> f64 {
        self.eigenvalues[1] / self.eigenvalues[2]
    }
}

/// Closed-form eigendecomposition of a symmetric 2×2 matrix.
pub fn eig_sym2(m: &SymMat2) -> Result<Spectrum<2>, SpectralError> {
    if !m.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let (a, b, c) = (m.xx, m.xy, m.yy);
    let mean = 0.5 * (a + c);
    let radius = (0.5 * (a - c)).hypot(b);
    let l1 = mean + radius;
    // det / λ₁ avoids the cancellation in mean − radius for thin ellipses;
    // elsewhere mean − radius is exact at isotropy.
    let l2 = if radius > 0.5 * mean.abs() && l1 != 0.0 {
        (a * c - b * b) / l1
    } else {
        mean - radius
    };
    let theta = 0.5 * (2.0 * b).atan2(a - c);
    let (s, co) = theta.sin_cos();
    let basis = Matrix2::new(co, -s, s, co);
    Ok(Spectrum::from_unsorted([l1, l2], basis))
}

/// Cyclic Jacobi eigendecomposition of a symmetric 3×3 matrix.
pub fn eig_sym3(m: &SymMat3) -> Result<Spectrum<3>, SpectralError> {
    if !m.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let mut a = m.to_matrix();
    let mut v = Matrix3::<f64>::identity();
    let norm = a.norm();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = (2.0 * (a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2))).sqrt();
        if off <= JACOBI_TOLERANCE * norm {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::<f64>::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    Ok(Spectrum::from_unsorted([a[(0, 0)], a[(1, 1)], a[(2, 2)]], v))
}

pub fn spectral_radius<const D: usize>(sp: &Spectrum<D>) -> f64 {
    sp.eigenvalues[0]
}

/// λ_max / λ_min, or `f64::INFINITY` when the smallest eigenvalue is zero
/// (after clamping) or negative.
pub fn condition_number<const D: usize>(sp: &Spectrum<D>) -> f64 {
    condition_number_of(&sp.eigenvalues)
}

pub fn condition_number_of(eigenvalues: &[f64]) -> f64 {
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Shannon entropy of the trace-normalized spectrum, with 0·ln 0 = 0.
pub fn spectral_entropy<const D: usize>(sp: &Spectrum<D>) -> Result<f64, SpectralError> {
    if !sp.psd {
        return Err(SpectralError::NotPsd(sp.min_eigenvalue()));
    }
    entropy_of(&sp.eigenvalues)
}

/// Entropy of a list of non-negative eigenvalues.
pub fn entropy_of(eigenvalues: &[f64]) -> Result<f64, SpectralError> {
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    if let Some(&neg) = eigenvalues.iter().find(|v| **v < 0.0) {
        return Err(SpectralError::NotPsd(neg));
    }
    let trace: f64 = eigenvalues.iter().sum();
    if trace <= 0.0 {
        return Err(SpectralError::ZeroTrace);
    }
    Ok(eigenvalues
        .iter()
        .map(|&v| {
            let t = v / trace;
            if t > 0.0 {
                -t * t.ln()
            } else {
                0.0
            }
        })
        .sum())
}

/// Entropy of a 2D spectrum as a function of its condition number.
pub fn entropy_from_kappa_2d(kappa: f64) -> Result<f64, SpectralError> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(SpectralError::Domain("condition number must be >= 1"));
    }
    if kappa.is_infinite() {
        return Ok(0.0);
    }
    Ok((kappa + 1.0).ln() - kappa * kappa.ln() / (kappa + 1.0))
}

/// Entropy of a 3D spectrum from its condition number and the ratio of the
/// middle eigenvalue to the smallest one.
pub fn entropy_from_kappa_3d(kappa: f64, mid_ratio: f64) -> Result<f64, SpectralError> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(SpectralError::Domain("condition number must be >= 1"));
    }
    if mid_ratio.is_nan() || mid_ratio < 1.0 || mid_ratio > kappa {
        return Err(SpectralError::Domain("mid ratio must lie in [1, kappa]"));
    }
    if kappa.is_infinite() {
        return Err(SpectralError::Domain("condition number must be finite"));
    }
    let sum = kappa + mid_ratio + 1.0;
    Ok(sum.ln() - (kappa * kappa.ln() + mid_ratio * mid_ratio.ln()) / sum)
}

/// Dimension-dispatching form of [`entropy_from_kappa_2d`] /
/// [`entropy_from_kappa_3d`]. `mid_ratio` is ignored for `dim == 2`.
pub fn entropy_from_kappa(dim: usize, kappa: f64, mid_ratio: f64) -> Result<f64, SpectralError> {
    match dim {
        2 => entropy_from_kappa_2d(kappa),
        3 => entropy_from_kappa_3d(kappa, mid_ratio),
        _ => Err(SpectralError::Domain("dimension must be 2 or 3")),
    }
}

/// Eccentricity of the ellipse with condition number `kappa`: √(1 − 1/κ).
pub fn eccentricity(kappa: f64) -> Result<f64, SpectralError> {
    if kappa.is_nan() || kappa < 1.0 {
        return Err(SpectralError::Domain("condition number must be >= 1"));
    }
    Ok((1.0 - 1.0 / kappa).sqrt())
}

/// Serializes an infinite condition number as the string `"inf"`.
pub fn serialize_kappa<S: Serializer>(kappa: &f64, s: S) -> Result<S::Ok, S::Error> {
    if kappa.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*kappa)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub radius: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub condition_number: f64,
    pub entropy: f64,
    /// Only defined for 2D spectra.
    pub eccentricity: Option<f64>,
}

pub fn summarize<const D: usize>(sp: &Spectrum<D>) -> Result<SpectralSummary, SpectralError> {
    let kappa = condition_number(sp);
    Ok(SpectralSummary {
        radius: spectral_radius(sp),
        condition_number: kappa,
        entropy: spectral_entropy(sp)?,
        eccentricity: if D == 2 { Some(eccentricity(kappa)?) } else { None },
    })
}

/// Closed-form Fourier transform of a unit-mass 2D Gaussian with covariance
/// `cov`, evaluated at frequency `omega` (cycles per unit).
pub fn gaussian_fourier_magnitude(cov: &SymMat2, omega: [f64; 2]) -> f64 {
    let q = cov.xx * omega[0] * omega[0] + 2.0 * cov.xy * omega[0] * omega[1] + cov.yy * omega[1] * omega[1];
    (-2.0 * std::f64::consts::PI.powi(2) * q).exp()
}

/// Samples the unit-mass Gaussian N(0, cov) on a `grid_size`² grid spanning
/// `[-extent, extent)²`, takes its discrete Fourier transform, and returns the
/// largest absolute deviation of the scaled DFT magnitude from the closed
/// form over every resolvable frequency bin.
pub fn fourier_closure_check(cov: &SymMat2, grid_size: usize, extent: f64) -> Result<f64, SpectralError> {
    if grid_size < 4 || !(extent > 0.0) {
        return Err(SpectralError::Domain("grid size >= 4 and positive extent required"));
    }
    let sp = cov.eig()?;
    if !sp.psd || sp.min_eigenvalue() <= 0.0 {
        return Err(SpectralError::NotPsd(sp.min_eigenvalue()));
    }
    let inv = cov.inverse_spd().ok_or(SpectralError::NotPsd(sp.min_eigenvalue()))?;
    let n = grid_size;
    let dx = 2.0 * extent / n as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * cov.det().sqrt());
    let density = |x: f64, y: f64| norm * (-0.5 * (inv.xx * x * x + 2.0 * inv.xy * x * y + inv.yy * y * y)).exp();

    let coord = |j: usize| -extent + j as f64 * dx;
    let mut boundary = 0.0f64;
    for j in 0..n {
        for (x, y) in [
            (coord(j), coord(0)),
            (coord(j), coord(n - 1)),
            (coord(0), coord(j)),
            (coord(n - 1), coord(j)),
        ] {
            boundary = boundary.max(density(x, y));
        }
    }
    if boundary / norm > 1e-8 {
        return Err(SpectralError::GridTooSmall("gaussian does not decay inside the grid"));
    }
    let nyquist = 0.5 / dx;
    let worst = (-2.0 * std::f64::consts::PI.powi(2) * sp.min_eigenvalue() * nyquist * nyquist).exp();
    if worst > 1e-8 {
        return Err(SpectralError::GridTooSmall("grid spacing aliases the spectrum"));
    }

    let mut data: Vec<Complex<f64>> = (0..n * n)
        .map(|idx| {
            let (row, col) = (idx / n, idx % n);
            Complex::new(density(coord(col), coord(row)), 0.0)
        })
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(n);
    for row in data.chunks_mut(n) {
        fft.process(row);
    }
    let mut column = vec![Complex::new(0.0, 0.0); n];
    for col in 0..n {
        for row in 0..n {
            column[row] = data[row * n + col];
        }
        fft.process(&mut column);
        for row in 0..n {
            data[row * n + col] = column[row];
        }
    }

    let freq = |k: usize| {
        let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        signed / (n as f64 * dx)
    };
    let mut max_err = 0.0f64;
    for row in 0..n {
        for col in 0..n {
            let measured = data[row * n + col].norm() * dx * dx;
            let expected = gaussian_fourier_magnitude(cov, [freq(col), freq(row)]);
            max_err = max_err.max((measured - expected).abs());
        }
    }
    Ok(max_err)
}
