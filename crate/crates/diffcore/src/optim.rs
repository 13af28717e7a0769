use serde::{Deserialize, Serialize};

use crate::error::{DiffError, Result};
use crate::real::Real;
use crate::store::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every entry. Gradients are left in place.
pub fn adam_step<R: Real>(store: &mut ParamStore<R>, cfg: &AdamConfig, t: u64) -> Result<()> {
    if t == 0 {
        return Err(DiffError::ZeroStep);
    }
    let (b1, b2) = (R::of(cfg.beta1), R::of(cfg.beta2));
    let c1 = R::of(1.0 - cfg.beta1.powf(t as f64));
    let c2 = R::of(1.0 - cfg.beta2.powf(t as f64));
    let (lr, eps) = (R::of(cfg.lr), R::of(cfg.eps));
    for (_, e) in store.iter_mut() {
        let values = e.value.data_mut();
        for (i, &g) in e.grad.data().iter().enumerate() {
            let m = b1 * e.moment1[i] + (R::one() - b1) * g;
            let v = b2 * e.moment2[i] + (R::one() - b2) * g * g;
            e.moment1[i] = m;
            e.moment2[i] = v;
            values[i] = values[i] - lr * (m / c1) / ((v / c2).sqrt() + eps);
        }
    }
    Ok(())
}
