use serde::{Deserialize, Serialize};

use super::{bleu, default_max_len, greedy_decode};
use crate::embeddings::Conditioning;
use crate::error::{Error, Result};
use crate::tasks::{shuffle_images, Direction, Modality, Sample, Task};
use crate::transformer::Model;
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Standard,
    Congruence,
    ZeroShot,
}

/// Corpus BLEU and exact-sequence match over one decoded set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScores {
    pub bleu: f64,
    /// Fraction of hypotheses identical to their reference.
    pub exact_match: f64,
    pub count: usize,
}

impl TaskScores {
    pub fn score<T, H, R>(hyps: &[H], refs: &[R]) -> Result<Self>
    where
        T: Eq + std::hash::Hash,
        H: AsRef<[T]>,
        R: AsRef<[T]>,
    {
        let bleu = bleu(hyps, refs)?;
        let exact = hyps
            .iter()
            .zip(refs)
            .filter(|(h, r)| h.as_ref() == r.as_ref())
            .count();
        Ok(Self {
            bleu,
            exact_match: if hyps.is_empty() {
                0.0
            } else {
                exact as f64 / hyps.len() as f64
            },
            count: hyps.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CongruenceScores {
    pub congruent: TaskScores,
    pub incongruent: TaskScores,
    /// Congruent minus incongruent BLEU.
    pub delta: f64,
}

/// Evaluation outcome for one direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub direction: Direction,
    /// The direction was absent from the model's training registry.
    pub zero_shot: bool,
    pub scores: TaskScores,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub congruence: Option<CongruenceScores>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One-line human summary.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{} {}: BLEU {:.2}, exact {:.1}% over {} lines",
            self.direction.modality,
            self.direction,
            self.scores.bleu,
            100.0 * self.scores.exact_match,
            self.scores.count
        );
        if self.zero_shot {
            s.push_str(" [zero-shot]");
        }
        if let Some(c) = &self.congruence {
            s.push_str(&format!(
                "; congruent {:.2} vs incongruent {:.2} (delta {:.2})",
                c.congruent.bleu, c.incongruent.bleu, c.delta
            ));
        }
        s
    }
}

/// Decodes every sample under `modality` with the given target specifier.
pub fn decode_samples(
    model: &Model,
    modality: Modality,
    specifier: TokenId,
    samples: &[Sample],
    max_len: Option<usize>,
) -> Result<Vec<Vec<TokenId>>> {
    samples
        .iter()
        .map(|s| {
            let cond = Conditioning {
                modality,
                specifier,
                source: s.source.as_deref(),
                image: s.image.as_ref(),
            };
            let cap =
                max_len.unwrap_or_else(|| default_max_len(s.source.as_ref().map_or(0, Vec::len)));
            greedy_decode(model, &cond, cap)
        })
        .collect()
}

fn references(task: &Task) -> Vec<&[TokenId]> {
    task.samples.iter().map(Sample::target_words).collect()
}

/// Decodes a task's samples and scores them against their targets.
pub fn evaluate_task(
    model: &Model,
    task: &Task,
    max_len: Option<usize>,
) -> Result<(TaskScores, Vec<Vec<TokenId>>)> {
    let hyps = decode_samples(
        model,
        task.spec.modality,
        task.specifier,
        &task.samples,
        max_len,
    )?;
    let scores = TaskScores::score(&hyps, &references(task))?;
    Ok((scores, hyps))
}

/// Scores a multimodal corpus with its own images and with images moved to
/// other sentences by a seeded derangement. `modality` is the configuration
/// the model decodes under; a text-only configuration never reads the
/// images, so its delta is exactly zero.
pub fn congruence_eval(
    model: &Model,
    task: &Task,
    modality: Modality,
    seed: u64,
    max_len: Option<usize>,
) -> Result<EvalReport> {
    if task.samples.iter().any(|s| s.image.is_none()) {
        return Err(Error::Modality(
            "congruence evaluation needs images on every line".into(),
        ));
    }
    let shuffled = shuffle_images(task, seed)?;
    let refs = references(task);
    let congruent = TaskScores::score(
        &decode_samples(model, modality, task.specifier, &task.samples, max_len)?,
        &refs,
    )?;
    let incongruent = TaskScores::score(
        &decode_samples(model, modality, task.specifier, &shuffled.samples, max_len)?,
        &refs,
    )?;
    Ok(EvalReport {
        mode: EvalMode::Congruence,
        direction: Direction {
            modality,
            ..task.spec.direction()
        },
        zero_shot: false,
        scores: congruent,
        congruence: Some(CongruenceScores {
            congruent,
            incongruent,
            delta: congruent.bleu - incongruent.bleu,
        }),
    })
}

/// Decodes a direction that is absent from `trained`, pairing the task's
/// source language with its target specifier.
pub fn zero_shot_eval(
    model: &Model,
    task: &Task,
    trained: &[Direction],
    max_len: Option<usize>,
) -> Result<EvalReport> {
    let direction = task.spec.direction();
    if trained.iter().any(|d| d.same_languages(&direction)) {
        return Err(Error::Config(format!(
            "direction {direction} is in the training registry, not zero-shot"
        )));
    }
    if task.specifier >= model.config.vocab_size {
        return Err(Error::UnknownToken(format!(
            "specifier id {}",
            task.specifier
        )));
    }
    let (scores, _) = evaluate_task(model, task, max_len)?;
    Ok(EvalReport {
        mode: EvalMode::ZeroShot,
        direction,
        zero_shot: true,
        scores,
        congruence: None,
    })
}
