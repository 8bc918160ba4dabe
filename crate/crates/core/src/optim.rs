//! Adam with per-group learning rates and a linear-warmup schedule.

use serde::{Deserialize, Serialize};

use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::Matrix;

/// Linear warmup to `peak` over `warmup_steps`, constant afterwards.
/// Steps are 1-based: the first update uses `peak / warmup_steps`.
pub fn warmup_lr(peak: f64, step: usize, warmup_steps: usize) -> f64 {
    if warmup_steps == 0 || step >= warmup_steps {
        peak
    } else {
        peak * step as f64 / warmup_steps as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter of a store.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub hyper: AdamHyper,
    /// number of updates applied so far
    pub step: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, hyper: AdamHyper) -> Self {
        let zeros: Vec<Matrix> = store
            .entries()
            .iter()
            .map(|e| Matrix::zeros(e.value.rows(), e.value.cols()))
            .collect();
        Adam {
            hyper,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one update. Parameters without a gradient are left untouched.
    pub fn update(&mut self, store: &mut ParamStore, grads: &[(ParamId, Matrix)], lr: impl Fn(ParamGroup) -> f64) {
        self.step += 1;
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (id, g) in grads {
            let rate = lr(store.entry(*id).group);
            let m = self.m[id.0].as_mut_slice();
            let v = self.v[id.0].as_mut_slice();
            let p = store.get_mut(*id).as_mut_slice();
            for (((p, m), v), &g) in p.iter_mut().zip(m).zip(v).zip(g.as_slice()) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / bc1;
                let vh = *v / bc2;
                *p -= rate * mh / (vh.sqrt() + eps);
            }
        }
    }
}
