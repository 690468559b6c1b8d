//! Greedy mask-shift decoding, the factorized NLL, corpus BLEU and the
//! congruence and zero-shot evaluation protocols.

mod bleu;
mod eval;

pub use bleu::{bleu, bleu_with_order, BleuStats};
pub use eval::{
    congruence_eval, decode_samples, evaluate_task, zero_shot_eval, CongruenceScores, EvalMode,
    EvalReport, TaskScores,
};

use crate::embeddings::Conditioning;
use crate::error::{Error, Result};
use crate::numerics::softmax_along;
use crate::tasks::Sample;
use crate::transformer::{MaskedCase, Model};
use crate::vocab::{TokenId, MASK, STOP};

/// Decoding cap when none is configured: twice the source length plus 8.
pub fn default_max_len(source_len: usize) -> usize {
    2 * source_len + 8
}

/// Progress of one greedy decode.
#[derive(Debug, Clone)]
pub struct DecodeState<'a> {
    pub cond: Conditioning<'a>,
    pub prefix: Vec<TokenId>,
    pub steps: usize,
    pub finished: bool,
}

impl<'a> DecodeState<'a> {
    pub fn new(cond: Conditioning<'a>) -> Self {
        Self {
            cond,
            prefix: Vec::new(),
            steps: 0,
            finished: false,
        }
    }

    /// Runs one full forward pass over conditioning + prefix + `[MASK]` and
    /// appends the argmax token, lowest id on ties. `[MASK]` itself is never
    /// a candidate. Emitting `[STOP]` or reaching `max_len` finishes the
    /// decode.
    pub fn advance(&mut self, model: &Model, max_len: usize) -> Result<TokenId> {
        if self.finished {
            return Err(Error::invalid("decode already finished"));
        }
        let mut logits = model.logits(&self.cond, &self.prefix)?;
        logits[MASK] = f64::NEG_INFINITY;
        let best = argmax(&logits);
        self.steps += 1;
        if best == STOP {
            self.finished = true;
        } else {
            self.prefix.push(best);
            self.finished = self.steps >= max_len;
        }
        Ok(best)
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding with full recomputation at every step. The returned ids
/// exclude `[STOP]`.
pub fn greedy_decode(
    model: &Model,
    cond: &Conditioning<'_>,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    let mut state = DecodeState::new(*cond);
    while !state.finished {
        state.advance(model, max_len)?;
    }
    Ok(state.prefix)
}

/// `Σ_t −log P(y_t | x, v, y_<t)` with one forward pass per target token.
pub fn stepwise_nll(model: &Model, cond: &Conditioning<'_>, target: &[TokenId]) -> Result<f64> {
    if target.is_empty() {
        return Err(Error::Empty("target sequence"));
    }
    let v = model.config.vocab_size;
    let mut total = 0.0;
    for t in 0..target.len() {
        let logits = model.logits(cond, &target[..t])?;
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        if target[t] >= v {
            return Err(Error::OutOfRange {
                what: "gold token",
                index: target[t],
                extent: v,
            });
        }
        total += lse - logits[target[t]];
    }
    Ok(total)
}

/// Next-token distribution for a prefix.
pub fn next_token_probs(
    model: &Model,
    cond: &Conditioning<'_>,
    prefix: &[TokenId],
) -> Result<Vec<f64>> {
    let logits = model.logits(cond, prefix)?;
    let n = logits.len();
    Ok(softmax_along(&logits, &[1, n], 1))
}

/// `mlm_loss` over the sample's unrolled cases, for comparison with
/// [`stepwise_nll`].
pub fn unrolled_loss(model: &Model, cond: &Conditioning<'_>, sample: &Sample) -> Result<f64> {
    let cases: Vec<MaskedCase<'_>> = (0..sample.target.len())
        .map(|t| MaskedCase {
            cond: *cond,
            prefix: &sample.target[..t],
            gold: sample.target[t],
        })
        .collect();
    model.mlm_loss(&cases)
}
