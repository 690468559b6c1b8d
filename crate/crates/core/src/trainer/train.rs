use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::optim::{optimizer_step, AdamW, OptimizerState};
use super::schedule::lr_at;
use crate::error::{Error, Result};
use crate::inference::{evaluate_task, TaskScores};
use crate::tasks::{Scheduler, Task, TaskSet};
use crate::transformer::{save_checkpoint, CheckpointMeta, MaskedCase, Model};

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub warmup: usize,
    pub total_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds the example stream; parameter init uses the model seed.
    pub seed: u64,
    /// Validate every this many steps (and at steps 0 and `total_steps`);
    /// 0 disables validation.
    pub validate_every: usize,
    /// Checkpoint every this many steps; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Decoding cap for validation; defaults to twice the source plus 8.
    pub max_decode_len: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            warmup: 200,
            total_steps: 20_000,
            weight_decay: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            validate_every: 0,
            checkpoint_every: 0,
            max_decode_len: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.total_steps > 0 && self.warmup >= self.total_steps {
            return bad(format!(
                "warmup ({}) must be below total_steps ({})",
                self.warmup, self.total_steps
            ));
        }
        if self.total_steps > 0 && self.warmup == 0 {
            return bad("warmup must be positive".into());
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            ));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0)
        {
            return bad("betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamW {
        AdamW {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        lr_at(step, self.lr, self.warmup, self.total_steps)
    }
}

/// One training-log row: a task's loss at a step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: usize,
    pub epoch: usize,
    pub task: String,
    pub loss: f64,
    pub lr: f64,
}

/// Validation scores of one task at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub step: usize,
    pub epoch: usize,
    pub task: String,
    pub bleu: f64,
    pub exact_match: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub meta: CheckpointMeta,
    pub log: Vec<LogRow>,
    pub validation: Vec<ValidationRow>,
}

impl TrainOutcome {
    /// Validation series of one task, in step order.
    pub fn curve(&self, task: &str) -> Vec<(usize, TaskScores)> {
        self.validation
            .iter()
            .filter(|r| r.task == task)
            .map(|r| {
                (
                    r.step,
                    TaskScores {
                        bleu: r.bleu,
                        exact_match: r.exact_match,
                        count: r.count,
                    },
                )
            })
            .collect()
    }
}

/// A training run: tasks, held-out sets and where artifacts go.
pub struct TrainRun<'a> {
    pub config: &'a TrainConfig,
    pub tasks: &'a TaskSet,
    /// Held-out tasks scored at the validation cadence.
    pub validation: &'a [Task],
    /// Directory for `train_log.csv`, `validation.csv` and checkpoints.
    pub out_dir: Option<&'a Path>,
    /// Steps already taken by the model, when resuming.
    pub start_step: usize,
    /// Print a progress line at each validation point.
    pub verbose: bool,
}

struct Sinks {
    log: Option<csv::Writer<fs::File>>,
    validation: Option<csv::Writer<fs::File>>,
}

impl Sinks {
    fn open(dir: Option<&Path>, resume: bool) -> Result<Self> {
        let Some(dir) = dir else {
            return Ok(Self {
                log: None,
                validation: None,
            });
        };
        fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<csv::Writer<fs::File>> {
            let path = dir.join(name);
            let existing = resume && path.exists();
            let file = fs::OpenOptions::new()
                .create(true)
                .append(existing)
                .write(true)
                .truncate(!existing)
                .open(path)?;
            Ok(csv::WriterBuilder::new()
                .has_headers(!existing)
                .from_writer(file))
        };
        Ok(Self {
            log: Some(open("train_log.csv")?),
            validation: Some(open("validation.csv")?),
        })
    }
}

impl<'a> TrainRun<'a> {
    pub fn new(config: &'a TrainConfig, tasks: &'a TaskSet) -> Self {
        Self {
            config,
            tasks,
            validation: &[],
            out_dir: None,
            start_step: 0,
            verbose: false,
        }
    }

    pub fn validation(mut self, tasks: &'a [Task]) -> Self {
        self.validation = tasks;
        self
    }

    pub fn out_dir(mut self, dir: &'a Path) -> Self {
        self.out_dir = Some(dir);
        self
    }

    pub fn resume_at(mut self, step: usize) -> Self {
        self.start_step = step;
        self
    }

    pub fn verbose(mut self, on: bool) -> Self {
        self.verbose = on;
        self
    }

    fn checkpoint_path(&self, name: &str) -> Option<PathBuf> {
        self.out_dir.map(|d| d.join(name))
    }

    fn validate(&self, model: &Model, step: usize, epoch: usize) -> Result<Vec<ValidationRow>> {
        self.validation
            .iter()
            .map(|task| {
                let (s, _) = evaluate_task(model, task, self.config.max_decode_len)?;
                Ok(ValidationRow {
                    step,
                    epoch,
                    task: task.spec.name.clone(),
                    bleu: s.bleu,
                    exact_match: s.exact_match,
                    count: s.count,
                })
            })
            .collect()
    }

    /// Trains `model` for the configured number of steps. Each step draws one
    /// unrolled example per task, sums their losses, and applies a single
    /// optimizer update. Optimizer moments start fresh, also on resume.
    pub fn run(&self, mut model: Model) -> Result<TrainOutcome> {
        let cfg = self.config;
        cfg.validate()?;
        if self.start_step > cfg.total_steps {
            return Err(Error::Config(format!(
                "resume step {} is past total_steps {}",
                self.start_step, cfg.total_steps
            )));
        }
        let mut sched = Scheduler::new(self.tasks, cfg.seed);
        sched.skip(self.start_step);
        let hp = cfg.adamw();
        let mut opt = OptimizerState::default();
        let mut sinks = Sinks::open(self.out_dir, self.start_step > 0)?;
        let mut log = Vec::new();
        let mut validation = Vec::new();
        let mut meta = CheckpointMeta {
            step: self.start_step,
            epoch: sched.state().epoch,
            directions: self.tasks.directions(),
        };
        let validating = cfg.validate_every > 0 && !self.validation.is_empty();
        let mut record_validation =
            |model: &Model, step: usize, epoch: usize, sinks: &mut Sinks| -> Result<()> {
                let rows = self.validate(model, step, epoch)?;
                if self.verbose {
                    let parts: Vec<String> = rows
                        .iter()
                        .map(|r| format!("{} {:.1}%", r.task, 100.0 * r.exact_match))
                        .collect();
                    eprintln!("step {step:>6} epoch {epoch:>3}  {}", parts.join("  "));
                }
                if let Some(w) = &mut sinks.validation {
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                }
                validation.extend(rows);
                Ok(())
            };
        if validating && self.start_step == 0 {
            record_validation(&model, 0, 0, &mut sinks)?;
        }

        for step in self.start_step + 1..=cfg.total_steps {
            let lr = cfg.lr_at(step)?;
            let batch = sched.next_batch();
            let cases: Vec<MaskedCase<'_>> = batch.iter().map(|ex| self.tasks.case(ex)).collect();
            model.params.zero_grad();
            let losses = match model.accumulate_gradients(&cases) {
                Ok(l) => l,
                Err(Error::NonFinite(what)) => return Err(self.diverged(&model, &meta, step, what)),
                Err(e) => return Err(e),
            };
            if let Err(Error::NonFinite(what)) =
                optimizer_step(&mut model.params, &mut opt, &hp, lr)
            {
                return Err(self.diverged(&model, &meta, step, what));
            }
            let epoch = sched.state().epoch;
            for (ex, loss) in batch.iter().zip(&losses) {
                let row = LogRow {
                    step,
                    epoch,
                    task: self.tasks.tasks[ex.task].spec.name.clone(),
                    loss: *loss,
                    lr,
                };
                if let Some(w) = &mut sinks.log {
                    w.serialize(&row)?;
                }
                log.push(row);
            }
            meta.step = step;
            meta.epoch = epoch;
            if cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 {
                if let Some(path) = self.checkpoint_path(&format!("step_{step:06}.bgen")) {
                    save_checkpoint(&model, &meta, &path)?;
                }
            }
            if validating && (step % cfg.validate_every == 0 || step == cfg.total_steps) {
                record_validation(&model, step, epoch, &mut sinks)?;
            }
        }
        if let Some(w) = &mut sinks.log {
            w.flush()?;
        }
        if let Some(path) = self.checkpoint_path("final.bgen") {
            save_checkpoint(&model, &meta, &path)?;
        }
        Ok(TrainOutcome {
            model,
            meta,
            log,
            validation,
        })
    }

    /// Keeps the last finite parameters as `last_good.bgen` and builds the
    /// abort error.
    fn diverged(&self, model: &Model, meta: &CheckpointMeta, step: usize, what: String) -> Error {
        if let Some(path) = self.checkpoint_path("last_good.bgen") {
            if model.params.is_finite() {
                let _ = save_checkpoint(model, meta, &path);
            }
        }
        Error::Diverged {
            step,
            reason: format!("non-finite {what}"),
        }
    }
}

/// [`TrainRun`] with defaults: no validation, no output directory.
pub fn train(config: &TrainConfig, model: Model, tasks: &TaskSet) -> Result<TrainOutcome> {
    TrainRun::new(config, tasks).run(model)
}
