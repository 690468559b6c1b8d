use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{TrainConfig, TrainRun, ValidationRow};
use crate::error::{Error, Result};
use crate::tasks::{Task, TaskSet};
use crate::transformer::{init_for_mode, Donor, InitMode, ModelConfig, TransferManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Init,
    Multitask,
}

/// Settings shared by every run of a study. The train and model seeds are
/// replaced by each entry of `seeds`.
#[derive(Debug, Clone)]
pub struct AblationSetup<'a> {
    pub train: TrainConfig,
    pub model: ModelConfig,
    pub seeds: Vec<u64>,
    pub out_dir: Option<&'a Path>,
    pub verbose: bool,
}

/// Initialization study: the same tasks trained from random, visual-only
/// and hybrid starting points.
#[derive(Debug, Clone, Copy)]
pub struct InitStudy<'a> {
    pub tasks: &'a TaskSet,
    pub validation: &'a [Task],
    pub text: Option<Donor<'a>>,
    pub visual: Option<Donor<'a>>,
}

/// Multi-task study: the full registry against its reference task alone.
/// `validation` holds a held-out set for every registered task.
#[derive(Debug, Clone, Copy)]
pub struct MultitaskSetup<'a> {
    pub tasks: &'a TaskSet,
    pub validation: &'a [Task],
}

/// Validation series of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunCurve {
    pub variant: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<TransferManifest>,
    pub rows: Vec<ValidationRow>,
}

impl RunCurve {
    /// `(step, exact_match)` of one task.
    pub fn exact_series(&self, task: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.task == task)
            .map(|r| (r.step, r.exact_match))
            .collect()
    }

    pub fn steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.rows.iter().map(|r| r.step).collect();
        s.dedup();
        s
    }

    /// First validation step whose exact match reaches `target`.
    pub fn steps_to_reach(&self, task: &str, target: f64) -> Option<usize> {
        self.exact_series(task)
            .into_iter()
            .find(|&(_, e)| e >= target)
            .map(|(s, _)| s)
    }

    pub fn final_exact(&self, task: &str) -> Option<f64> {
        self.exact_series(task).last().map(|&(_, e)| e)
    }
}

/// Per-seed comparison of the initialization variants: the step at which
/// each reached the random run's final exact match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitComparison {
    pub seed: u64,
    pub target: f64,
    pub random: Option<usize>,
    pub visual_only: Option<usize>,
    pub hybrid: Option<usize>,
}

impl InitComparison {
    pub fn hybrid_faster(&self) -> bool {
        matches!((self.hybrid, self.random), (Some(h), Some(r)) if h < r)
    }
}

/// Forgetting probe for one task of a multi-task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgettingRow {
    pub seed: u64,
    pub task: String,
    /// Best exact match at any validation point before the last.
    pub peak: f64,
    pub peak_step: usize,
    pub final_exact: f64,
    /// `final_exact ≥ 0.9 · peak`.
    pub retained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    /// The task the variants are compared on.
    pub reference: String,
    pub variants: Vec<String>,
    pub runs: Vec<RunCurve>,
    #[serde(default)]
    pub init: Vec<InitComparison>,
    #[serde(default)]
    pub forgetting: Vec<ForgettingRow>,
}

/// The study to run.
#[derive(Debug, Clone, Copy)]
pub enum AblationStudy<'a> {
    Init(InitStudy<'a>),
    Multitask(MultitaskSetup<'a>),
}

impl AblationStudy<'_> {
    pub fn mode(&self) -> AblationMode {
        match self {
            AblationStudy::Init(_) => AblationMode::Init,
            AblationStudy::Multitask(_) => AblationMode::Multitask,
        }
    }
}

fn per_seed(setup: &AblationSetup<'_>, seed: u64) -> (TrainConfig, ModelConfig) {
    let mut train = setup.train.clone();
    train.seed = seed;
    let mut model = setup.model.clone();
    model.seed = seed;
    (train, model)
}

fn run_dir(setup: &AblationSetup<'_>, variant: &str, seed: u64) -> Option<std::path::PathBuf> {
    setup
        .out_dir
        .map(|d| d.join(format!("{variant}_seed{seed}")))
}

/// Runs an ablation study and, when `setup.out_dir` is set, writes one
/// directory per run plus `curves.csv`, `summary.csv` and the
/// mode-specific comparison table.
pub fn run_ablation(study: AblationStudy<'_>, setup: &AblationSetup<'_>) -> Result<AblationReport> {
    if setup.seeds.is_empty() {
        return Err(Error::Config("ablation needs at least one seed".into()));
    }
    if setup.train.validate_every == 0 {
        return Err(Error::Config("ablation needs validate_every > 0".into()));
    }
    let report = match study {
        AblationStudy::Init(s) => run_init(s, setup)?,
        AblationStudy::Multitask(s) => run_multitask(s, setup)?,
    };
    if let Some(dir) = setup.out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

fn run_init(study: InitStudy<'_>, setup: &AblationSetup<'_>) -> Result<AblationReport> {
    if study.text.is_none() || study.visual.is_none() {
        return Err(Error::Config(
            "init ablation needs both a text and a visual checkpoint".into(),
        ));
    }
    let reference = study.tasks.tasks[study.tasks.reference_index()]
        .spec
        .name
        .clone();
    if !study.validation.iter().any(|t| t.spec.name == reference) {
        return Err(Error::Config(format!(
            "no held-out set for reference task `{reference}`"
        )));
    }
    let mut runs = Vec::new();
    let mut init = Vec::new();
    for &seed in &setup.seeds {
        let (train, model_cfg) = per_seed(setup, seed);
        let mut by_mode = BTreeMap::new();
        for mode in InitMode::ALL {
            let (model, manifest) = init_for_mode(mode, &model_cfg, study.text, study.visual)?;
            let dir = run_dir(setup, mode.name(), seed);
            let mut run = TrainRun::new(&train, study.tasks)
                .validation(study.validation)
                .verbose(setup.verbose);
            if let Some(d) = &dir {
                fs::create_dir_all(d)?;
                fs::write(
                    d.join("manifest.json"),
                    serde_json::to_string_pretty(&manifest)?,
                )?;
                run = run.out_dir(d);
            }
            let outcome = run.run(model)?;
            let curve = RunCurve {
                variant: mode.name().to_string(),
                seed,
                manifest: Some(manifest),
                rows: outcome.validation,
            };
            by_mode.insert(mode.name(), curve.clone());
            runs.push(curve);
        }
        let target = by_mode["random"].final_exact(&reference).unwrap_or(0.0);
        init.push(InitComparison {
            seed,
            target,
            random: by_mode["random"].steps_to_reach(&reference, target),
            visual_only: by_mode["visual_only"].steps_to_reach(&reference, target),
            hybrid: by_mode["hybrid"].steps_to_reach(&reference, target),
        });
    }
    Ok(AblationReport {
        mode: AblationMode::Init,
        reference,
        variants: InitMode::ALL.iter().map(|m| m.name().to_string()).collect(),
        runs,
        init,
        forgetting: Vec::new(),
    })
}

fn run_multitask(study: MultitaskSetup<'_>, setup: &AblationSetup<'_>) -> Result<AblationReport> {
    let reference_task = study.tasks.tasks[study.tasks.reference_index()].clone();
    let reference = reference_task.spec.name.clone();
    for t in &study.tasks.tasks {
        if !study.validation.iter().any(|v| v.spec.name == t.spec.name) {
            return Err(Error::Config(format!(
                "no held-out set for task `{}`",
                t.spec.name
            )));
        }
    }
    let single = TaskSet::new(vec![reference_task])?;
    let single_validation: Vec<Task> = study
        .validation
        .iter()
        .filter(|t| t.spec.name == reference)
        .cloned()
        .collect();
    let mut runs = Vec::new();
    let mut forgetting = Vec::new();
    for &seed in &setup.seeds {
        let (train, model_cfg) = per_seed(setup, seed);
        for (variant, tasks, validation) in [
            ("single_task", &single, single_validation.as_slice()),
            ("multi_task", study.tasks, study.validation),
        ] {
            let (model, _) = init_for_mode(InitMode::Random, &model_cfg, None, None)?;
            let dir = run_dir(setup, variant, seed);
            let mut run = TrainRun::new(&train, tasks)
                .validation(validation)
                .verbose(setup.verbose);
            if let Some(d) = &dir {
                run = run.out_dir(d);
            }
            let outcome = run.run(model)?;
            let curve = RunCurve {
                variant: variant.to_string(),
                seed,
                manifest: None,
                rows: outcome.validation,
            };
            if variant == "multi_task" {
                for t in &study.tasks.tasks {
                    forgetting.push(forgetting_row(&curve, seed, &t.spec.name));
                }
            }
            runs.push(curve);
        }
    }
    Ok(AblationReport {
        mode: AblationMode::Multitask,
        reference,
        variants: vec!["single_task".into(), "multi_task".into()],
        runs,
        init: Vec::new(),
        forgetting,
    })
}

fn forgetting_row(curve: &RunCurve, seed: u64, task: &str) -> ForgettingRow {
    let series = curve.exact_series(task);
    let final_exact = series.last().map_or(0.0, |&(_, e)| e);
    let (peak_step, peak) =
        series[..series.len().saturating_sub(1)]
            .iter()
            .fold(
                (0, 0.0),
                |best, &(s, e)| if e > best.1 { (s, e) } else { best },
            );
    ForgettingRow {
        seed,
        task: task.to_string(),
        peak,
        peak_step,
        final_exact,
        retained: final_exact >= 0.9 * peak,
    }
}

#[derive(Serialize)]
struct CurveRow<'a> {
    variant: &'a str,
    seed: u64,
    step: usize,
    epoch: usize,
    task: &'a str,
    bleu: f64,
    exact_match: f64,
}

impl AblationReport {
    /// Rows of the summary table: the reference task's exact match and BLEU
    /// for every variant at each `(seed, step)` of the shared grid.
    pub fn summary_table(&self) -> Result<(Vec<String>, Vec<Vec<String>>)> {
        let mut header = vec!["seed".to_string(), "step".to_string()];
        for v in &self.variants {
            header.push(format!("{v}_exact"));
            header.push(format!("{v}_bleu"));
        }
        let mut rows = Vec::new();
        let seeds: Vec<u64> = {
            let mut s: Vec<u64> = self.runs.iter().map(|r| r.seed).collect();
            s.dedup();
            s
        };
        for seed in seeds {
            let curves: Vec<&RunCurve> = self
                .variants
                .iter()
                .map(|v| {
                    self.runs
                        .iter()
                        .find(|r| r.seed == seed && &r.variant == v)
                        .ok_or_else(|| Error::invalid(format!("missing run {v} seed {seed}")))
                })
                .collect::<Result<_>>()?;
            let grid = curves[0].steps();
            if curves.iter().any(|c| c.steps() != grid) {
                return Err(Error::invalid(
                    "variants were validated on different step grids",
                ));
            }
            for step in grid {
                let mut row = vec![seed.to_string(), step.to_string()];
                for c in &curves {
                    let r = c
                        .rows
                        .iter()
                        .find(|r| r.step == step && r.task == self.reference)
                        .ok_or_else(|| {
                            Error::invalid(format!("no {} score at step {step}", self.reference))
                        })?;
                    row.push(r.exact_match.to_string());
                    row.push(r.bleu.to_string());
                }
                rows.push(row);
            }
        }
        Ok((header, rows))
    }

    /// Writes `curves.csv`, `summary.csv`, `report.json` and either
    /// `init_comparison.csv` or `forgetting.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("curves.csv"))?;
        for run in &self.runs {
            for r in &run.rows {
                w.serialize(CurveRow {
                    variant: &run.variant,
                    seed: run.seed,
                    step: r.step,
                    epoch: r.epoch,
                    task: &r.task,
                    bleu: r.bleu,
                    exact_match: r.exact_match,
                })?;
            }
        }
        w.flush()?;
        let (header, rows) = self.summary_table()?;
        let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
        w.write_record(&header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        w.flush()?;
        match self.mode {
            AblationMode::Init => {
                let mut w = csv::Writer::from_path(dir.join("init_comparison.csv"))?;
                for r in &self.init {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            AblationMode::Multitask => {
                let mut w = csv::Writer::from_path(dir.join("forgetting.csv"))?;
                for r in &self.forgetting {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
        }
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
