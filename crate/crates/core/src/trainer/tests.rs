use super::*;
use crate::tasks::synth::SynthSpec;
use crate::tasks::{Task, TaskSet};
use crate::transformer::{load_checkpoint, Donor, Model, ModelConfig};
use crate::Error;

fn small_world(size: usize, heldout: usize) -> (TaskSet, Vec<Task>, usize) {
    let corpus = SynthSpec::multitask_demo(size, 11).generate().unwrap();
    let vocab = corpus.vocabulary().unwrap();
    let names = ["mt_en_de", "ic_en", "mmt_en_de"];
    let (set, held) = corpus.split(&vocab, &names, heldout).unwrap();
    (set, held, vocab.len())
}

fn small_model(vocab: usize, seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::toy(vocab, 16);
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.seed = seed;
    cfg
}

fn short_run(total: usize) -> TrainConfig {
    TrainConfig {
        lr: 3e-3,
        warmup: 2,
        total_steps: total,
        validate_every: 3,
        checkpoint_every: 4,
        max_decode_len: Some(6),
        ..TrainConfig::default()
    }
}

#[test]
fn config_invariants() {
    assert!(TrainConfig::default().validate().is_ok());
    let zero = TrainConfig {
        total_steps: 0,
        warmup: 0,
        ..TrainConfig::default()
    };
    assert!(zero.validate().is_ok());
    for bad in [
        TrainConfig {
            warmup: 20_000,
            ..TrainConfig::default()
        },
        TrainConfig {
            warmup: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            lr: 0.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            weight_decay: -1.0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))), "{bad:?}");
    }
    let text = toml::to_string(&TrainConfig::default()).unwrap();
    assert_eq!(
        toml::from_str::<TrainConfig>(&text).unwrap(),
        TrainConfig::default()
    );
    assert!(toml::from_str::<TrainConfig>("learning_rate = 1.0").is_err());
}

#[test]
fn zero_steps_returns_initial_parameters() {
    let (set, _, v) = small_world(8, 2);
    let model = Model::init_random(small_model(v, 1)).unwrap();
    let cfg = TrainConfig {
        total_steps: 0,
        warmup: 0,
        ..TrainConfig::default()
    };
    let out = train(&cfg, model.clone(), &set).unwrap();
    assert_eq!(out.model, model);
    assert!(out.log.is_empty());
}

#[test]
fn one_log_row_per_task_per_step() {
    let (set, held, v) = small_world(8, 2);
    let cfg = short_run(5);
    let out = TrainRun::new(&cfg, &set)
        .validation(&held)
        .run(Model::init_random(small_model(v, 1)).unwrap())
        .unwrap();
    assert_eq!(out.log.len(), 5 * set.len());
    for (i, row) in out.log.iter().enumerate() {
        assert_eq!(row.step, i / set.len() + 1);
        assert_eq!(row.task, set.tasks[i % set.len()].spec.name);
        assert_eq!(row.lr, cfg.lr_at(row.step).unwrap());
        assert!(row.loss.is_finite() && row.loss > 0.0);
    }
    // Validation at 0, 3 and the final step, for each held-out task.
    let steps: Vec<usize> = out.curve("mmt_en_de").iter().map(|p| p.0).collect();
    assert_eq!(steps, vec![0, 3, 5]);
    assert_eq!(out.validation.len(), 3 * held.len());
    assert_eq!(out.meta.step, 5);
    assert_eq!(out.meta.directions, set.directions());
}

#[test]
fn step_loss_matches_model_loss_before_update() {
    let (set, _, v) = small_world(8, 2);
    let model = Model::init_random(small_model(v, 2)).unwrap();
    let cfg = short_run(3);
    let out = train(&cfg, model.clone(), &set).unwrap();
    let mut sched = crate::tasks::Scheduler::new(&set, cfg.seed);
    let batch = sched.next_batch();
    for (ex, row) in batch.iter().zip(&out.log) {
        let expected = model.mlm_loss(&[set.case(ex)]).unwrap();
        assert_eq!(row.loss, expected);
    }
}

#[test]
fn identical_runs_write_identical_artifacts() {
    let (set, held, v) = small_world(8, 2);
    let cfg = short_run(6);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        TrainRun::new(&cfg, &set)
            .validation(&held)
            .out_dir(d.path())
            .run(Model::init_random(small_model(v, 3)).unwrap())
            .unwrap();
    }
    for name in [
        "final.bgen",
        "step_000004.bgen",
        "train_log.csv",
        "validation.csv",
    ] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let log = std::fs::read_to_string(dirs[0].path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,epoch,task,loss,lr\n"));
    let ck = load_checkpoint(&dirs[0].path().join("final.bgen")).unwrap();
    assert_eq!(ck.meta.step, 6);
}

#[test]
fn resumed_run_continues_step_numbering() {
    let (set, _, v) = small_world(8, 2);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short_run(8);
    cfg.validate_every = 0;
    let first = TrainConfig {
        total_steps: 8,
        ..cfg.clone()
    };
    let part = TrainRun::new(&first, &set)
        .out_dir(dir.path())
        .run(Model::init_random(small_model(v, 4)).unwrap())
        .unwrap();
    let mid = load_checkpoint(&dir.path().join("step_000004.bgen")).unwrap();
    assert_eq!(mid.meta.step, 4);
    let resumed = TrainRun::new(&cfg, &set)
        .resume_at(mid.meta.step)
        .run(mid.model)
        .unwrap();
    let steps: Vec<usize> = resumed.log.iter().map(|r| r.step).collect();
    assert_eq!(steps.first(), Some(&5));
    assert_eq!(steps.last(), Some(&8));
    // Same examples in the same order as the uninterrupted run.
    let tail: Vec<&str> = part.log[4 * set.len()..]
        .iter()
        .map(|r| r.task.as_str())
        .collect();
    let again: Vec<&str> = resumed.log.iter().map(|r| r.task.as_str()).collect();
    assert_eq!(tail, again);
    assert!(TrainRun::new(&cfg, &set)
        .resume_at(9)
        .run(Model::init_random(small_model(v, 4)).unwrap())
        .is_err());
}

#[test]
fn divergence_aborts_and_keeps_last_good() {
    let (set, _, v) = small_world(8, 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        lr: 1e300,
        warmup: 1,
        total_steps: 50,
        ..TrainConfig::default()
    };
    let err = TrainRun::new(&cfg, &set)
        .out_dir(dir.path())
        .run(Model::init_random(small_model(v, 5)).unwrap())
        .unwrap_err();
    assert!(matches!(err, Error::Diverged { .. }), "{err}");
    let kept = load_checkpoint(&dir.path().join("last_good.bgen")).unwrap();
    assert!(kept.model.params.is_finite());
    assert!(!dir.path().join("final.bgen").exists());
}

fn ablation_setup(total: usize, seeds: Vec<u64>, v: usize) -> AblationSetup<'static> {
    AblationSetup {
        train: short_run(total),
        model: small_model(v, 0),
        seeds,
        out_dir: None,
        verbose: false,
    }
}

#[test]
fn init_ablation_runs_three_variants_on_one_grid() {
    let (set, held, v) = small_world(8, 2);
    let text = Model::init_random(small_model(v, 100)).unwrap();
    let visual = Model::init_random(small_model(v, 200)).unwrap();
    let mmt: Vec<Task> = held
        .iter()
        .filter(|t| t.spec.name == "mmt_en_de")
        .cloned()
        .collect();
    let mmt_set = TaskSet::new(vec![set.tasks[2].clone()]).unwrap();
    let study = InitStudy {
        tasks: &mmt_set,
        validation: &mmt,
        text: Some(Donor {
            model: &text,
            label: "text",
        }),
        visual: Some(Donor {
            model: &visual,
            label: "visual",
        }),
    };
    let dir = tempfile::tempdir().unwrap();
    let mut setup = ablation_setup(4, vec![1], v);
    setup.out_dir = Some(dir.path());
    let report = run_ablation(AblationStudy::Init(study), &setup).unwrap();
    assert_eq!(report.variants, vec!["random", "visual_only", "hybrid"]);
    assert_eq!(report.runs.len(), 3);
    let grid = report.runs[0].steps();
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
    assert!(report.runs.iter().all(|r| r.steps() == grid));
    assert_eq!(report.init.len(), 1);
    // Random runs always reach their own final score.
    assert!(report.init[0].random.is_some());
    let manifests: Vec<_> = report
        .runs
        .iter()
        .map(|r| r.manifest.clone().unwrap())
        .collect();
    assert_eq!(manifests[0].len(), manifests[2].len());
    assert_ne!(manifests[0], manifests[1]);
    assert_ne!(manifests[1], manifests[2]);
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + grid.len());
    assert!(summary.starts_with("seed,step,random_exact,random_bleu,visual_only_exact"));
    for f in [
        "curves.csv",
        "init_comparison.csv",
        "report.json",
        "hybrid_seed1/manifest.json",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }

    let missing = InitStudy {
        visual: None,
        ..study
    };
    assert!(matches!(
        run_ablation(AblationStudy::Init(missing), &setup),
        Err(Error::Config(_))
    ));
}

#[test]
fn multitask_ablation_has_series_for_every_task() {
    let (set, held, v) = small_world(8, 2);
    let setup = ablation_setup(3, vec![2], v);
    let study = MultitaskSetup {
        tasks: &set,
        validation: &held,
    };
    let report = run_ablation(AblationStudy::Multitask(study), &setup).unwrap();
    assert_eq!(report.variants, vec!["single_task", "multi_task"]);
    let multi = report
        .runs
        .iter()
        .find(|r| r.variant == "multi_task")
        .unwrap();
    let single = report
        .runs
        .iter()
        .find(|r| r.variant == "single_task")
        .unwrap();
    for t in &set.tasks {
        assert_eq!(multi.exact_series(&t.spec.name).len(), multi.steps().len());
    }
    assert!(single.rows.iter().all(|r| r.task == report.reference));
    assert_eq!(report.forgetting.len(), set.len());
    assert!(report.summary_table().is_ok());
    let again = run_ablation(AblationStudy::Multitask(study), &setup).unwrap();
    assert_eq!(again, report);
}
