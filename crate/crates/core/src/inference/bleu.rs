use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corpus-level sufficient statistics for BLEU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuStats {
    /// Clipped n-gram matches, index `n − 1`.
    pub matches: Vec<usize>,
    /// Hypothesis n-gram totals, index `n − 1`.
    pub totals: Vec<usize>,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn collect<T, H, R>(hyps: &[H], refs: &[R], max_n: usize) -> Result<Self>
    where
        T: Eq + Hash,
        H: AsRef<[T]>,
        R: AsRef<[T]>,
    {
        if hyps.len() != refs.len() {
            return Err(Error::invalid(format!(
                "{} hypotheses for {} references",
                hyps.len(),
                refs.len()
            )));
        }
        if max_n == 0 {
            return Err(Error::invalid("BLEU order must be at least 1"));
        }
        let mut stats = Self {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        };
        for (h, r) in hyps.iter().zip(refs) {
            let (h, r) = (h.as_ref(), r.as_ref());
            stats.hyp_len += h.len();
            stats.ref_len += r.len();
            for n in 1..=max_n {
                let mut ref_counts: HashMap<&[T], usize> = HashMap::new();
                for g in r.windows(n) {
                    *ref_counts.entry(g).or_default() += 1;
                }
                let mut hyp_counts: HashMap<&[T], usize> = HashMap::new();
                for g in h.windows(n) {
                    *hyp_counts.entry(g).or_default() += 1;
                }
                stats.totals[n - 1] += h.len().saturating_sub(n - 1);
                stats.matches[n - 1] += hyp_counts
                    .iter()
                    .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                    .sum::<usize>();
            }
        }
        Ok(stats)
    }

    /// Score in `[0, 100]`. Any order with zero matches (including orders
    /// the hypotheses are too short to contain) gives 0.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let n = self.matches.len() as f64;
        let log_p: f64 = self
            .matches
            .iter()
            .zip(&self.totals)
            .map(|(&m, &t)| (m as f64 / t as f64).ln())
            .sum::<f64>()
            / n;
        let bp = if self.hyp_len > self.ref_len {
            0.0
        } else {
            1.0 - self.ref_len as f64 / self.hyp_len as f64
        };
        100.0 * (log_p + bp).exp()
    }
}

/// Corpus BLEU with n-grams up to 4, one reference per hypothesis, brevity
/// penalty and no smoothing.
pub fn bleu<T, H, R>(hyps: &[H], refs: &[R]) -> Result<f64>
where
    T: Eq + Hash,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    bleu_with_order(hyps, refs, 4)
}

pub fn bleu_with_order<T, H, R>(hyps: &[H], refs: &[R], max_n: usize) -> Result<f64>
where
    T: Eq + Hash,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    Ok(BleuStats::collect(hyps, refs, max_n)?.score())
}
