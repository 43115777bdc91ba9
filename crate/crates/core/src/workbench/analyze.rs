use std::fmt::Write;

use serde::Serialize;

use super::WorkbenchError;
use crate::scene::Gaussian3D;
use crate::spectral::{condition_number, serialize_kappa, spectral_entropy, spectral_radius};

/// Per-Gaussian spectral statistics of the 3D covariance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianRow {
    pub index: usize,
    pub radius: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnalyzeSummary {
    pub count: usize,
    pub entropy_mean: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_q1: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_median: f64,
    #[serde(serialize_with = "serialize_kappa")]
    pub kappa_q3: f64,
    /// Gaussians with entropy below `needle_threshold`.
    pub needle_count: usize,
    pub needle_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub summary: AnalyzeSummary,
    pub gaussians: Vec<GaussianRow>,
}

impl AnalyzeReport {
    pub const CSV_HEADER: &'static str = "index,radius,kappa,entropy";

    /// One row per Gaussian; the summary is only part of the JSON form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.gaussians {
            let _ = writeln!(s, "{},{:e},{},{}", r.index, r.radius, fmt_kappa(r.kappa), r.entropy);
        }
        s
    }
}

pub(crate) fn fmt_kappa(k: f64) -> String {
    if k.is_infinite() {
        "inf".into()
    } else {
        format!("{k}")
    }
}

/// Linearly interpolated quartiles of an unsorted sample. Infinite values
/// propagate instead of producing NaN.
pub fn quartiles(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi || v[lo] == v[hi] {
            v[lo]
        } else if v[hi].is_infinite() {
            v[hi]
        } else {
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        }
    };
    [at(0.25), at(0.5), at(0.75)]
}

pub fn analyze(scene: &[Gaussian3D], needle_threshold: f64) -> Result<AnalyzeReport, WorkbenchError> {
    if scene.is_empty() {
        return Err(WorkbenchError::EmptyScene);
    }
    let mut rows = Vec::with_capacity(scene.len());
    for (index, g) in scene.iter().enumerate() {
        let sp = g
            .covariance()
            .eig()
            .map_err(|e| WorkbenchError::InvalidArgument(format!("Gaussian {index}: {e}")))?;
        rows.push(GaussianRow {
            index,
            radius: spectral_radius(&sp),
            kappa: condition_number(&sp),
            entropy: spectral_entropy(&sp)
                .map_err(|e| WorkbenchError::InvalidArgument(format!("Gaussian {index}: {e}")))?,
        });
    }
    let kappas: Vec<f64> = rows.iter().map(|r| r.kappa).collect();
    let [q1, q2, q3] = quartiles(&kappas);
    Ok(AnalyzeReport {
        summary: AnalyzeSummary {
            count: rows.len(),
            entropy_mean: rows.iter().map(|r| r.entropy).sum::<f64>() / rows.len() as f64,
            kappa_q1: q1,
            kappa_median: q2,
            kappa_q3: q3,
            needle_count: rows.iter().filter(|r| r.entropy < needle_threshold).count(),
            needle_threshold,
        },
        gaussians: rows,
    })
}
