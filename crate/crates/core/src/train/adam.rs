//! Adam over the flat per-Gaussian parameter vector.

use serde::{Deserialize, Serialize};

use crate::render::GaussianGrad;
use crate::scene::Gaussian3D;

/// Parameters per Gaussian: position 3, quaternion 4, log-scales 3,
/// opacity logit 1, color 3.
pub const PARAMS: usize = 14;
pub type ParamVec = [f64; PARAMS];

const POSITION: std::ops::Range<usize> = 0..3;
const ROTATION: std::ops::Range<usize> = 3..7;
const SCALE: std::ops::Range<usize> = 7..10;
const OPACITY: usize = 10;
const COLOR: std::ops::Range<usize> = 11..14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// Step sizes of the parameter groups for one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRates {
    pub position: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
}

impl GroupRates {
    fn per_param(&self) -> ParamVec {
        let mut r = [0.0; PARAMS];
        r[POSITION].fill(self.position);
        r[ROTATION].fill(self.rotation);
        r[SCALE].fill(self.scale);
        r[OPACITY] = self.opacity;
        r[COLOR].fill(self.color);
        r
    }
}

pub fn pack(g: &Gaussian3D) -> ParamVec {
    let mut p = [0.0; PARAMS];
    p[POSITION].copy_from_slice(g.position.as_slice());
    p[ROTATION].copy_from_slice(&g.rotation);
    p[SCALE].copy_from_slice(g.log_scales.as_slice());
    p[OPACITY] = g.opacity_logit;
    p[COLOR].copy_from_slice(&g.sh_dc);
    p
}

pub fn unpack(g: &mut Gaussian3D, p: &ParamVec) {
    g.position.as_mut_slice().copy_from_slice(&p[POSITION]);
    g.rotation.copy_from_slice(&p[ROTATION]);
    g.log_scales.as_mut_slice().copy_from_slice(&p[SCALE]);
    g.opacity_logit = p[OPACITY];
    g.sh_dc.copy_from_slice(&p[COLOR]);
}

pub fn pack_grad(g: &GaussianGrad) -> ParamVec {
    let mut p = [0.0; PARAMS];
    p[POSITION].copy_from_slice(g.position.as_slice());
    p[ROTATION].copy_from_slice(&g.rotation);
    p[SCALE].copy_from_slice(g.log_scales.as_slice());
    p[OPACITY] = g.opacity_logit;
    p[COLOR].copy_from_slice(&g.sh_dc);
    p
}

/// One bias-corrected Adam update of a scalar; `t` is the 1-based step.
pub fn adam_update(param: &mut f64, m: &mut f64, v: &mut f64, grad: f64, lr: f64, t: u64, cfg: &AdamConfig) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * grad;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * grad * grad;
    let m_hat = *m / (1.0 - cfg.beta1.powi(t as i32));
    let v_hat = *v / (1.0 - cfg.beta2.powi(t as i32));
    *param -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// Moments index-aligned with the scene, plus a shared step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub m: Vec<ParamVec>,
    pub v: Vec<ParamVec>,
    pub step: u64,
}

impl Adam {
    pub fn new(n: usize, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            m: vec![[0.0; PARAMS]; n],
            v: vec![[0.0; PARAMS]; n],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Updates every Gaussian and renormalizes quaternions.
    pub fn apply(&mut self, scene: &mut [Gaussian3D], grads: &[ParamVec], rates: &GroupRates) {
        assert_eq!(scene.len(), self.m.len(), "optimizer state out of sync with scene");
        assert_eq!(scene.len(), grads.len());
        self.step += 1;
        let lr = rates.per_param();
        for (i, g) in scene.iter_mut().enumerate() {
            let mut p = pack(g);
            for k in 0..PARAMS {
                adam_update(
                    &mut p[k],
                    &mut self.m[i][k],
                    &mut self.v[i][k],
                    grads[i][k],
                    lr[k],
                    self.step,
                    &self.cfg,
                );
            }
            unpack(g, &p);
            g.normalize_rotation();
        }
    }

    /// Carries moments over to the new topology; `origin[i]` names the old
    /// index continued by new Gaussian `i`, new ones start at zero.
    pub fn remap(&mut self, origin: &[Option<usize>]) {
        let pick = |src: &Vec<ParamVec>| origin.iter().map(|o| o.map_or([0.0; PARAMS], |j| src[j])).collect();
        self.m = pick(&self.m);
        self.v = pick(&self.v);
    }
}
