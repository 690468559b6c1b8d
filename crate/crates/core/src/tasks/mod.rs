//! Task declarations, sequence unrolling, synthetic corpora, multi-task
//! scheduling and the incongruent-image transform.

mod corpus;
mod scheduler;
mod shuffle;
pub mod synth;

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub use corpus::{read_corpus, write_corpus, CorpusRecord};
pub use scheduler::{Scheduler, SchedulerState};
pub use shuffle::{derangement, shuffle_images};

use crate::embeddings::{Conditioning, ImageFeatures};
use crate::error::{Error, Result};
use crate::transformer::MaskedCase;
use crate::vocab::{TokenId, Vocabulary, STOP};

/// Input configuration of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Modality {
    /// `{x, y}`: machine translation.
    #[serde(alias = "MT")]
    TextToText,
    /// `{v, y}`: image captioning.
    #[serde(alias = "IC")]
    ImageToText,
    /// `{x, v, y}`: multimodal translation.
    #[serde(alias = "MMT")]
    ImageTextToText,
}

impl Modality {
    pub fn uses_source(self) -> bool {
        matches!(self, Modality::TextToText | Modality::ImageTextToText)
    }

    pub fn uses_image(self) -> bool {
        matches!(self, Modality::ImageToText | Modality::ImageTextToText)
    }

    /// Short family label: MT, IC or MMT.
    pub fn kind(self) -> &'static str {
        match self {
            Modality::TextToText => "MT",
            Modality::ImageToText => "IC",
            Modality::ImageTextToText => "MMT",
        }
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    /// Accepts `MT`, `IC`, `MMT` or the full names in any case.
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mt" | "text_to_text" => Ok(Modality::TextToText),
            "ic" | "image_to_text" => Ok(Modality::ImageToText),
            "mmt" | "image_text_to_text" => Ok(Modality::ImageTextToText),
            _ => Err(Error::Config(format!("unknown modality `{s}`"))),
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

/// A (source language, target language) pairing under a modality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction {
    pub modality: Modality,
    /// Absent for captioning.
    pub source: Option<String>,
    pub target: String,
}

impl Direction {
    /// Whether `other` uses the same language pairing, ignoring whether an
    /// image is attached.
    pub fn same_languages(&self, other: &Direction) -> bool {
        self.source == other.source && self.target == other.target
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = self.source.as_deref().unwrap_or("im");
        write!(f, "{}->{}", src.to_uppercase(), self.target.to_uppercase())
    }
}

/// Declaration of one training task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub modality: Modality,
    #[serde(default)]
    pub source_lang: Option<String>,
    pub target_lang: String,
    /// Corpus file; in-memory task sets may leave it empty.
    #[serde(default)]
    pub corpus: PathBuf,
    /// The task whose full pass defines one epoch.
    #[serde(default)]
    pub reference: bool,
}

impl TaskSpec {
    pub fn direction(&self) -> Direction {
        Direction {
            modality: self.modality,
            source: self.source_lang.clone(),
            target: self.target_lang.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modality.uses_source() != self.source_lang.is_some() {
            return Err(Error::Config(format!(
                "task `{}`: {} tasks {} a source language",
                self.name,
                self.modality,
                if self.modality.uses_source() {
                    "need"
                } else {
                    "must not have"
                }
            )));
        }
        Ok(())
    }
}

/// One task instance: optional source, optional image, `[STOP]`-terminated
/// target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub source: Option<Vec<TokenId>>,
    pub image: Option<ImageFeatures>,
    pub target: Vec<TokenId>,
}

impl Sample {
    pub fn validate(&self, modality: Modality) -> Result<()> {
        if self.target.last() != Some(&STOP) {
            return Err(Error::invalid(
                "target must be non-empty and end with [STOP]",
            ));
        }
        if self.target[..self.target.len() - 1].contains(&STOP) {
            return Err(Error::invalid("[STOP] inside target"));
        }
        if modality.uses_source() != self.source.is_some()
            || modality.uses_image() != self.image.is_some()
        {
            return Err(Error::Modality(format!(
                "{modality} sample with source={} image={}",
                self.source.is_some(),
                self.image.is_some()
            )));
        }
        Ok(())
    }

    /// Target without the trailing `[STOP]`.
    pub fn target_words(&self) -> &[TokenId] {
        match self.target.split_last() {
            Some((&STOP, rest)) => rest,
            _ => &self.target,
        }
    }
}

/// One masked-prediction training case derived from a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UnrolledExample {
    pub task: usize,
    pub sample: usize,
    /// 1-based position of the predicted token.
    pub step: usize,
    pub gold: TokenId,
}

/// Expands a sample into `|y|` cases; case `t` sees `y_<t` and predicts
/// `y_t`, the last one predicting `[STOP]`.
pub fn unroll(task: usize, sample_index: usize, sample: &Sample) -> Result<Vec<UnrolledExample>> {
    if sample.target.is_empty() {
        return Err(Error::Empty("target sequence"));
    }
    Ok(sample
        .target
        .iter()
        .enumerate()
        .map(|(i, &gold)| UnrolledExample {
            task,
            sample: sample_index,
            step: i + 1,
            gold,
        })
        .collect())
}

/// A task with its encoded samples.
#[derive(Debug, Clone)]
pub struct Task {
    pub spec: TaskSpec,
    pub specifier: TokenId,
    pub samples: Vec<Sample>,
}

impl Task {
    pub fn new(spec: TaskSpec, vocab: &Vocabulary, samples: Vec<Sample>) -> Result<Self> {
        spec.validate()?;
        let specifier = vocab.specifier(&spec.target_lang)?;
        if let Some(src) = &spec.source_lang {
            vocab.specifier(src)?;
        }
        for s in &samples {
            s.validate(spec.modality)?;
        }
        Ok(Self {
            spec,
            specifier,
            samples,
        })
    }

    /// Encodes corpus records; targets get `[STOP]` appended.
    pub fn from_records(
        spec: TaskSpec,
        vocab: &Vocabulary,
        records: &[CorpusRecord],
    ) -> Result<Self> {
        let samples = records
            .iter()
            .map(|r| r.to_sample(vocab))
            .collect::<Result<Vec<_>>>()?;
        Self::new(spec, vocab, samples)
    }

    pub fn conditioning<'a>(&self, sample: &'a Sample) -> Conditioning<'a> {
        Conditioning {
            modality: self.spec.modality,
            specifier: self.specifier,
            source: sample.source.as_deref(),
            image: sample.image.as_ref(),
        }
    }

    pub fn unrolled(&self, task_index: usize) -> Vec<UnrolledExample> {
        self.samples
            .iter()
            .enumerate()
            .flat_map(|(i, s)| unroll(task_index, i, s).expect("validated sample"))
            .collect()
    }

    /// `Σ |y|` over the task's samples.
    pub fn unrolled_count(&self) -> usize {
        self.samples.iter().map(|s| s.target.len()).sum()
    }

    /// Splits off the last `n` samples as a held-out task.
    pub fn split_heldout(mut self, n: usize) -> Result<(Task, Task)> {
        if n >= self.samples.len() {
            return Err(Error::Config(format!(
                "task `{}` has {} samples, cannot hold out {n}",
                self.spec.name,
                self.samples.len()
            )));
        }
        let held = self.samples.split_off(self.samples.len() - n);
        let heldout = Task {
            spec: self.spec.clone(),
            specifier: self.specifier,
            samples: held,
        };
        Ok((self, heldout))
    }
}

/// The training registry: every task with its samples.
#[derive(Debug, Clone, Default)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>) -> Result<Self> {
        if tasks.is_empty() {
            return Err(Error::Empty("task registry"));
        }
        let refs = tasks.iter().filter(|t| t.spec.reference).count();
        if refs != 1 {
            return Err(Error::Config(format!(
                "exactly one reference task required, found {refs}"
            )));
        }
        let mut names: Vec<&str> = tasks.iter().map(|t| t.spec.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate task names".into()));
        }
        if let Some(t) = tasks.iter().find(|t| t.samples.is_empty()) {
            return Err(Error::Config(format!(
                "task `{}` has no samples",
                t.spec.name
            )));
        }
        Ok(Self { tasks })
    }

    /// Registry with `reference` as the reference task, overriding the
    /// flags the tasks were declared with.
    pub fn with_reference(mut tasks: Vec<Task>, reference: &str) -> Result<Self> {
        if !tasks.iter().any(|t| t.spec.name == reference) {
            return Err(Error::Config(format!(
                "reference task `{reference}` is not registered"
            )));
        }
        for t in &mut tasks {
            t.spec.reference = t.spec.name == reference;
        }
        Self::new(tasks)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn reference_index(&self) -> usize {
        self.tasks
            .iter()
            .position(|t| t.spec.reference)
            .expect("validated registry")
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.tasks.iter().map(|t| t.spec.direction()).collect()
    }

    /// Resolves an unrolled example to the model-level case.
    pub fn case(&self, ex: &UnrolledExample) -> MaskedCase<'_> {
        let task = &self.tasks[ex.task];
        let sample = &task.samples[ex.sample];
        MaskedCase {
            cond: task.conditioning(sample),
            prefix: &sample.target[..ex.step - 1],
            gold: ex.gold,
        }
    }
}

#[cfg(test)]
mod tests;
