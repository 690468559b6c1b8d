use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transformer::Parameters;

/// AdamW hyper-parameters other than the learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Per-tensor first and second moments plus the update counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    pub step: u64,
}

/// One bias-corrected AdamW update from the gradients stored on `params`.
/// Weight decay shrinks every value by `lr·weight_decay` directly, outside
/// the adaptive term. Tensors without a gradient buffer count as zero
/// gradient. Nothing is modified if any gradient is non-finite.
pub fn optimizer_step(
    params: &mut Parameters,
    state: &mut OptimizerState,
    hp: &AdamW,
    lr: f64,
) -> Result<()> {
    for (name, t) in params.iter() {
        if let Some(g) = t.grad() {
            if g.len() != t.len() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    lhs: t.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    let shrink = 1.0 - lr * hp.weight_decay;
    for (name, tensor) in params.iter_mut() {
        let n = tensor.len();
        let (m, v) = state
            .moments
            .entry(name.to_string())
            .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
        let grad = tensor.grad().map(<[f64]>::to_vec);
        let data = tensor.data_mut();
        for i in 0..n {
            let g = grad.as_ref().map_or(0.0, |g| g[i]);
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            let update = (m[i] / c1) / ((v[i] / c2).sqrt() + hp.eps);
            data[i] = data[i] * shrink - lr * update;
        }
    }
    Ok(())
}
