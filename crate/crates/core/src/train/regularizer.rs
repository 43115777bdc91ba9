//! Entropy-deficit shape regularizer L_Σ = mean(ln 3 − H(Σ)).
//!
//! H depends only on the eigenvalues sᵢ², so the gradient reaches the
//! log-scales alone: position, rotation, opacity and color get nothing.

use nalgebra::Vector3;

use crate::scene::Gaussian3D;

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerOutput {
    pub value: f64,
    /// dL_Σ/d(log_scales) per Gaussian.
    pub log_scales: Vec<Vector3<f64>>,
}

pub fn shape_regularizer(scene: &[Gaussian3D]) -> RegularizerOutput {
    let n = scene.len();
    if n == 0 {
        return RegularizerOutput {
            value: 0.0,
            log_scales: Vec::new(),
        };
    }
    let inv_n = 1.0 / n as f64;
    let ln3 = 3f64.ln();
    let mut value = 0.0;
    let grads = scene
        .iter()
        .map(|g| {
            let lam = g.log_scales.map(|l| (2.0 * l).exp());
            let tr = lam.sum();
            let t = lam / tr;
            let h: f64 = -t.iter().filter(|&&ti| ti > 0.0).map(|ti| ti * ti.ln()).sum::<f64>();
            value += (ln3 - h) * inv_n;
            // dH/dλⱼ = −(ln tⱼ + H)/tr and dλⱼ/dlⱼ = 2λⱼ
            t.map(|tj| {
                if tj > 0.0 {
                    inv_n * 2.0 * tj * (tj.ln() + h)
                } else {
                    0.0
                }
            })
        })
        .collect();
    RegularizerOutput {
        value,
        log_scales: grads,
    }
}
