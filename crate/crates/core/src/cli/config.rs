use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::{read_corpus, CorpusRecord, Task, TaskSet, TaskSpec};
use crate::trainer::TrainConfig;
use crate::transformer::{InitMode, ModelConfig};
use crate::vocab::Vocabulary;

/// Model architecture without the fields derived at run time (vocabulary
/// size from the vocabulary, seed from the run seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    /// Inferred from the first image in the corpora when absent.
    pub d_visual: Option<usize>,
    pub tied_head: bool,
    pub region_token: bool,
    pub init_std: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let toy = ModelConfig::toy(1, 1);
        Self {
            layers: toy.layers,
            heads: toy.heads,
            d_model: toy.d_model,
            d_ff: toy.d_ff,
            max_positions: toy.max_positions,
            d_visual: None,
            tied_head: toy.tied_head,
            region_token: toy.region_token,
            init_std: toy.init_std,
        }
    }
}

impl ModelSettings {
    pub fn resolve(&self, vocab_size: usize, d_visual: usize, seed: u64) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            layers: self.layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            vocab_size,
            max_positions: self.max_positions,
            d_visual: self.d_visual.unwrap_or(d_visual),
            seed,
            tied_head: self.tied_head,
            region_token: self.region_token,
            init_std: self.init_std,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Starting point of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSettings {
    pub mode: InitMode,
    #[serde(default)]
    pub text: Option<PathBuf>,
    #[serde(default)]
    pub visual: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSettings {
    #[serde(default)]
    pub seeds: Vec<u64>,
    /// Text-side checkpoint for the init study.
    #[serde(default)]
    pub text: Option<PathBuf>,
    /// Visual-side checkpoint for the init study.
    #[serde(default)]
    pub visual: Option<PathBuf>,
}

/// Training and ablation run file. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Vocabulary file; built from the corpora when absent.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    /// Lines split off the end of each corpus for validation.
    #[serde(default = "default_heldout")]
    pub heldout: usize,
    /// Checkpoint to resume from.
    #[serde(default)]
    pub resume: Option<PathBuf>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub init: Option<InitSettings>,
    #[serde(default)]
    pub ablation: Option<AblationSettings>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

fn default_heldout() -> usize {
    50
}

impl Default for RunFile {
    fn default() -> Self {
        Self {
            seed: 0,
            out: None,
            vocab: None,
            heldout: default_heldout(),
            resume: None,
            train: TrainConfig::default(),
            model: ModelSettings::default(),
            init: None,
            ablation: None,
            tasks: Vec::new(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        let joined = base.join(&*p);
        *p = std::path::absolute(&joined).unwrap_or(joined);
    }
}

impl RunFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run file: {e}")))
    }

    /// Reads a run file and rebases its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|_| Error::MissingFile {
            path: path.to_path_buf(),
            what: "config file".into(),
        })?;
        let mut file = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut file.out, &mut file.vocab, &mut file.resume]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        if let Some(init) = &mut file.init {
            for p in [&mut init.text, &mut init.visual].into_iter().flatten() {
                rebase(base, p);
            }
        }
        if let Some(ab) = &mut file.ablation {
            for p in [&mut ab.text, &mut ab.visual].into_iter().flatten() {
                rebase(base, p);
            }
        }
        for t in &mut file.tasks {
            rebase(base, &mut t.corpus);
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize run file: {e}")))
    }

    /// Checks the task list, each corpus path, and the training schedule.
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::Config("tasks: at least one task is required".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            t.validate()?;
            if t.corpus.as_os_str().is_empty() {
                return Err(Error::Config(format!(
                    "tasks[{i}].corpus: missing for task `{}`",
                    t.name
                )));
            }
            if !t.corpus.is_file() {
                return Err(Error::MissingFile {
                    path: t.corpus.clone(),
                    what: format!("tasks[{i}].corpus of task `{}`", t.name),
                });
            }
        }
        self.train.validate()
    }

    fn records(&self) -> Result<Vec<Vec<CorpusRecord>>> {
        self.tasks.iter().map(|t| read_corpus(&t.corpus)).collect()
    }

    /// The vocabulary file, or one built from every corpus.
    pub fn vocabulary(&self, records: &[Vec<CorpusRecord>]) -> Result<Vocabulary> {
        if let Some(path) = &self.vocab {
            if !path.is_file() {
                return Err(Error::MissingFile {
                    path: path.clone(),
                    what: "vocab".into(),
                });
            }
            return Vocabulary::load(path);
        }
        let mut langs: Vec<&str> = Vec::new();
        for t in &self.tasks {
            for l in t.source_lang.iter().chain(std::iter::once(&t.target_lang)) {
                if !langs.contains(&l.as_str()) {
                    langs.push(l);
                }
            }
        }
        let text = records.iter().flatten().flat_map(|r| {
            r.src
                .as_deref()
                .into_iter()
                .chain(std::iter::once(r.tgt.as_str()))
        });
        Vocabulary::build(text, &langs)
    }

    /// Loads every corpus and splits off the held-out tail of each.
    pub fn load_tasks(&self) -> Result<LoadedTasks> {
        self.validate()?;
        let records = self.records()?;
        let vocab = self.vocabulary(&records)?;
        let d_visual = records
            .iter()
            .flatten()
            .find_map(|r| {
                r.regions
                    .as_ref()
                    .and_then(|rs| rs.first().map(|f| f.feature.len()))
            })
            .unwrap_or(ModelConfig::toy(1, 16).d_visual);
        let mut train = Vec::new();
        let mut heldout = Vec::new();
        for (spec, recs) in self.tasks.iter().zip(&records) {
            let task = Task::from_records(spec.clone(), &vocab, recs)?;
            if self.heldout > 0 {
                let (a, b) = task.split_heldout(self.heldout)?;
                train.push(a);
                heldout.push(b);
            } else {
                train.push(task);
            }
        }
        Ok(LoadedTasks {
            tasks: TaskSet::new(train)?,
            heldout,
            vocab,
            d_visual,
        })
    }
}

pub struct LoadedTasks {
    pub tasks: TaskSet,
    pub heldout: Vec<Task>,
    pub vocab: Vocabulary,
    pub d_visual: usize,
}
