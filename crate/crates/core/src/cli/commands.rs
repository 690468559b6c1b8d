use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use super::config::RunFile;
use super::{
    AblateArgs, AblateMode, Common, DecodeArgs, DecodeOptions, EvalArgs, EvalOptions, SynthArgs,
    TrainArgs, TrainFlags,
};
use crate::error::{Error, Result};
use crate::inference::{
    congruence_eval, decode_samples, zero_shot_eval, EvalMode, EvalReport, TaskScores,
};
use crate::tasks::synth::SynthSpec;
use crate::tasks::{read_corpus, CorpusRecord, Direction, Modality, Sample, Task, TaskSpec};
use crate::trainer::{
    run_ablation, AblationSetup, AblationStudy, InitStudy, MultitaskSetup, TrainRun,
};
use crate::transformer::{init_for_mode, load_checkpoint, Checkpoint, Donor, Model};
use crate::vocab::{Vocabulary, STOP};

const ECHO: &str = "effective_config.toml";

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn out_dir(common: &Common, file_out: Option<&PathBuf>) -> Result<PathBuf> {
    let dir = common
        .out
        .clone()
        .or_else(|| file_out.cloned())
        .ok_or_else(|| Error::Config("--out is required".into()))?;
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn echo<T: serde::Serialize>(dir: &Path, value: &T) -> Result<()> {
    let text =
        toml::to_string(value).map_err(|e| Error::Config(format!("cannot echo config: {e}")))?;
    fs::write(dir.join(ECHO), text)?;
    Ok(())
}

fn read_options<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|_| Error::MissingFile {
                path: p.to_path_buf(),
                what: "config file".into(),
            })?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Flags win over config-file values.
macro_rules! merge {
    ($flags:expr, $file:expr; $($field:ident),*; $($switch:ident),*) => {{
        let mut out = $file;
        $( if $flags.$field.is_some() { out.$field = $flags.$field.clone(); } )*
        $( out.$switch |= $flags.$switch; )*
        out
    }};
}

fn load_model(path: &Path) -> Result<Checkpoint> {
    if !path.is_file() {
        return Err(Error::MissingFile {
            path: path.to_path_buf(),
            what: "checkpoint".into(),
        });
    }
    load_checkpoint(path)
}

fn load_vocab(explicit: Option<&PathBuf>, checkpoint: &Path) -> Result<Vocabulary> {
    let path = explicit.cloned().unwrap_or_else(|| {
        checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("vocab.txt")
    });
    if !path.is_file() {
        return Err(Error::MissingFile {
            path,
            what: "vocab (pass --vocab)".into(),
        });
    }
    Vocabulary::load(&path)
}

fn check_vocab(model: &Model, vocab: &Vocabulary) -> Result<()> {
    if model.config.vocab_size != vocab.len() {
        return Err(Error::Config(format!(
            "checkpoint expects {} tokens, vocabulary has {}",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

/// `maskgen synthdata`: generates corpora from a spec file (the five-task
/// demo world when none is given).
pub fn synthdata(args: &SynthArgs) -> Result<()> {
    let mut spec = match &args.common.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|_| Error::MissingFile {
                path: p.clone(),
                what: "synthetic data spec".into(),
            })?;
            SynthSpec::from_toml(&text)?
        }
        None => SynthSpec::multitask_demo(500, 0),
    };
    if let Some(seed) = args.common.seed {
        spec.seed = seed;
    }
    let dir = out_dir(&args.common, None)?;
    let stats = spec.generate()?.write(&dir)?;
    echo(&dir, &spec)?;
    println!(
        "{:<12} {:<4} {:<8} {:>7} {:>8} {:>6}",
        "name", "type", "task", "sents", "augm", "ratio"
    );
    for s in stats {
        println!(
            "{:<12} {:<4} {:<8} {:>7} {:>8} {:>6.2}",
            s.name, s.kind, s.task, s.sents, s.augm, s.ratio
        );
    }
    Ok(())
}

fn apply_flags(file: &mut RunFile, common: &Common, flags: &TrainFlags) {
    if let Some(seed) = common.seed {
        file.seed = seed;
    }
    if let Some(out) = &common.out {
        file.out = Some(out.clone());
    }
    let t = &mut file.train;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = flags.$f { t.$f = v; } )* };
    }
    set!(
        lr,
        warmup,
        total_steps,
        weight_decay,
        beta1,
        beta2,
        eps,
        validate_every,
        checkpoint_every
    );
    if flags.max_decode_len.is_some() {
        t.max_decode_len = flags.max_decode_len;
    }
    t.seed = file.seed;
    if let Some(h) = flags.heldout {
        file.heldout = h;
    }
}

fn run_file(common: &Common, flags: &TrainFlags) -> Result<RunFile> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut file = RunFile::load(path)?;
    apply_flags(&mut file, common, flags);
    Ok(file)
}

/// `maskgen train`.
pub fn train(args: &TrainArgs) -> Result<()> {
    let mut file = run_file(&args.common, &args.flags)?;
    if let Some(r) = &args.resume {
        file.resume = Some(r.clone());
    }
    let loaded = file.load_tasks()?;
    let dir = out_dir(&args.common, file.out.as_ref())?;
    let config = file
        .model
        .resolve(loaded.vocab.len(), loaded.d_visual, file.seed)?;
    let (model, start) = if let Some(path) = &file.resume {
        let ck = load_model(path)?;
        (ck.model, ck.meta.step)
    } else if let Some(init) = &file.init {
        let text = init.text.as_deref().map(load_model).transpose()?;
        let visual = init.visual.as_deref().map(load_model).transpose()?;
        let donor = |ck: &Option<Checkpoint>, label: &Option<PathBuf>| -> Option<(Model, String)> {
            ck.as_ref().map(|c| {
                (
                    c.model.clone(),
                    label
                        .as_ref()
                        .map_or(String::new(), |p| p.display().to_string()),
                )
            })
        };
        let text = donor(&text, &init.text);
        let visual = donor(&visual, &init.visual);
        let (model, manifest) = init_for_mode(
            init.mode,
            &config,
            text.as_ref().map(|(m, l)| Donor { model: m, label: l }),
            visual.as_ref().map(|(m, l)| Donor { model: m, label: l }),
        )?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        (model, 0)
    } else {
        (Model::init_random(config)?, 0)
    };
    check_vocab(&model, &loaded.vocab)?;
    echo(&dir, &file)?;
    loaded.vocab.save(&dir.join("vocab.txt"))?;
    let out = TrainRun::new(&file.train, &loaded.tasks)
        .validation(&loaded.heldout)
        .out_dir(&dir)
        .resume_at(start)
        .verbose(args.verbose)
        .run(model)?;
    println!(
        "trained to step {} (epoch {}), final checkpoint {}",
        out.meta.step,
        out.meta.epoch,
        dir.join("final.bgen").display()
    );
    for task in &loaded.heldout {
        if let Some((step, s)) = out.curve(&task.spec.name).pop() {
            println!(
                "  {:<12} step {step}: exact {:.1}%, BLEU {:.2}",
                task.spec.name,
                100.0 * s.exact_match,
                s.bleu
            );
        }
    }
    Ok(())
}

fn infer_modality(records: &[CorpusRecord]) -> Modality {
    match records.first() {
        Some(r) if r.regions.is_some() && r.src.is_some() => Modality::ImageTextToText,
        Some(r) if r.regions.is_some() => Modality::ImageToText,
        _ => Modality::TextToText,
    }
}

fn modality_of(flag: &Option<String>, records: &[CorpusRecord]) -> Result<Modality> {
    match flag {
        Some(m) => m.parse(),
        None => Ok(infer_modality(records)),
    }
}

fn samples_for_decoding(records: &[CorpusRecord], vocab: &Vocabulary) -> Result<Vec<Sample>> {
    records
        .iter()
        .map(|r| {
            Ok(Sample {
                source: r.src.as_deref().map(|s| vocab.encode(s)),
                image: r.image()?,
                target: vec![STOP],
            })
        })
        .collect()
}

fn direction(modality: Modality, source: &Option<String>, target: &str) -> Result<Direction> {
    if modality.uses_source() && source.is_none() {
        return Err(Error::Config(format!(
            "--source-lang is required for {modality}"
        )));
    }
    Ok(Direction {
        modality,
        source: if modality.uses_source() {
            source.clone()
        } else {
            None
        },
        target: target.to_string(),
    })
}

fn zero_shot_guard(trained: &[Direction], dir: &Direction, allowed: bool) -> Result<bool> {
    let unseen = !trained.iter().any(|d| d.same_languages(dir));
    if unseen && !allowed {
        return Err(Error::Config(format!(
            "direction {dir} is not in the checkpoint's training registry; pass --zero-shot"
        )));
    }
    Ok(unseen)
}

/// `maskgen decode`: one hypothesis line per input record in
/// `<out>/hypotheses.txt`.
pub fn decode(args: &DecodeArgs) -> Result<()> {
    let file: DecodeOptions = read_options(args.common.config.as_deref())?;
    let o = merge!(args.options, file; checkpoint, input, vocab, source_lang, target_lang, modality, max_len; zero_shot);
    let ck_path = required(&o.checkpoint, "checkpoint")?;
    let input = required(&o.input, "input")?;
    let target = required(&o.target_lang, "target-lang")?;
    let dir = out_dir(&args.common, None)?;
    let ck = load_model(&ck_path)?;
    let vocab = load_vocab(o.vocab.as_ref(), &ck_path)?;
    check_vocab(&ck.model, &vocab)?;
    let specifier = vocab.specifier(&target)?;
    let records = read_corpus(&input)?;
    let modality = modality_of(&o.modality, &records)?;
    let dir_spec = direction(modality, &o.source_lang, &target)?;
    zero_shot_guard(&ck.meta.directions, &dir_spec, o.zero_shot)?;
    let samples = samples_for_decoding(&records, &vocab)?;
    let hyps = decode_samples(&ck.model, modality, specifier, &samples, o.max_len)?;
    let mut text = String::new();
    for h in &hyps {
        text.push_str(&vocab.decode(h)?);
        text.push('\n');
    }
    fs::write(dir.join("hypotheses.txt"), text)?;
    echo(&dir, &o)?;
    println!("decoded {} lines ({dir_spec}, {modality})", hyps.len());
    Ok(())
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|_| Error::MissingFile {
        path: path.to_path_buf(),
        what: "text file".into(),
    })?;
    Ok(text.lines().map(str::to_string).collect())
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn words(lines: &[String]) -> Vec<Vec<String>> {
    lines
        .iter()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
        .collect()
}

fn eval_task(
    records: &[CorpusRecord],
    modality: Modality,
    dir: &Direction,
    vocab: &Vocabulary,
) -> Result<Task> {
    let spec = TaskSpec {
        name: "eval".into(),
        modality,
        source_lang: dir.source.clone(),
        target_lang: dir.target.clone(),
        corpus: PathBuf::new(),
        reference: true,
    };
    Task::from_records(spec, vocab, records)
}

/// `maskgen eval`: writes `<out>/report.json` and prints a summary.
pub fn eval(args: &EvalArgs) -> Result<()> {
    let file: EvalOptions = read_options(args.common.config.as_deref())?;
    let o = merge!(args.options, file; hyps, refs, checkpoint, vocab, source_lang, target_lang, modality, max_len; congruence, zero_shot);
    let refs_path = required(&o.refs, "refs")?;
    let target = required(&o.target_lang, "target-lang")?;
    if o.congruence && o.zero_shot {
        return Err(Error::Config(
            "--congruence and --zero-shot are exclusive".into(),
        ));
    }
    let dir = out_dir(&args.common, None)?;
    let records = if is_jsonl(&refs_path) {
        Some(read_corpus(&refs_path)?)
    } else {
        None
    };
    let record_modality = records
        .as_deref()
        .map(infer_modality)
        .unwrap_or(Modality::TextToText);

    let report = if o.congruence || (o.zero_shot && o.hyps.is_none()) {
        let ck_path = required(&o.checkpoint, "checkpoint")?;
        let records =
            records.ok_or_else(|| Error::Config("--refs must be a .jsonl corpus here".into()))?;
        let ck = load_model(&ck_path)?;
        let vocab = load_vocab(o.vocab.as_ref(), &ck_path)?;
        check_vocab(&ck.model, &vocab)?;
        vocab.specifier(&target)?;
        let dir_spec = direction(record_modality, &o.source_lang, &target)?;
        let task = eval_task(&records, record_modality, &dir_spec, &vocab)?;
        if o.congruence {
            let decode_as = match &o.modality {
                Some(m) => m.parse()?,
                None => ck
                    .meta
                    .directions
                    .iter()
                    .find(|d| d.same_languages(&dir_spec) && d.modality.uses_image())
                    .map_or(Modality::TextToText, |d| d.modality),
            };
            congruence_eval(
                &ck.model,
                &task,
                decode_as,
                args.common.seed.unwrap_or(0),
                o.max_len,
            )?
        } else {
            zero_shot_eval(&ck.model, &task, &ck.meta.directions, o.max_len)?
        }
    } else {
        let hyps_path = required(&o.hyps, "hyps")?;
        let hyps = words(&read_lines(&hyps_path)?);
        let refs = match &records {
            Some(r) => words(&r.iter().map(|r| r.tgt.clone()).collect::<Vec<_>>()),
            None => words(&read_lines(&refs_path)?),
        };
        let modality = modality_of(&o.modality, records.as_deref().unwrap_or(&[]))?;
        let dir_spec = direction(modality, &o.source_lang, &target)?;
        let mut zero_shot = false;
        if o.zero_shot {
            let ck_path = required(&o.checkpoint, "checkpoint")?;
            let ck = load_model(&ck_path)?;
            if !zero_shot_guard(&ck.meta.directions, &dir_spec, true)? {
                return Err(Error::Config(format!(
                    "direction {dir_spec} is in the training registry, not zero-shot"
                )));
            }
            zero_shot = true;
        }
        EvalReport {
            mode: if zero_shot {
                EvalMode::ZeroShot
            } else {
                EvalMode::Standard
            },
            direction: dir_spec,
            zero_shot,
            scores: TaskScores::score(&hyps, &refs)?,
            congruence: None,
        }
    };
    fs::write(dir.join("report.json"), report.to_json()?)?;
    echo(&dir, &o)?;
    println!("{}", report.summary());
    Ok(())
}

/// `maskgen ablate init|multitask`.
pub fn ablate(args: &AblateArgs) -> Result<()> {
    let file = run_file(&args.common, &args.flags)?;
    let section = file.ablation.clone().unwrap_or_default();
    let seeds = if !args.seeds.is_empty() {
        args.seeds.clone()
    } else if !section.seeds.is_empty() && args.common.seed.is_none() {
        section.seeds.clone()
    } else {
        vec![file.seed]
    };
    let text_path = args.text_checkpoint.clone().or(section.text.clone());
    let visual_path = args.visual_checkpoint.clone().or(section.visual.clone());
    if args.mode == AblateMode::Init && (text_path.is_none() || visual_path.is_none()) {
        return Err(Error::Config(
            "init ablation needs --text-checkpoint and --visual-checkpoint".into(),
        ));
    }
    let loaded = file.load_tasks()?;
    if loaded.heldout.is_empty() {
        return Err(Error::Config("ablation needs heldout > 0".into()));
    }
    let dir = out_dir(&args.common, file.out.as_ref())?;
    let config = file
        .model
        .resolve(loaded.vocab.len(), loaded.d_visual, file.seed)?;
    let mut echoed = file.clone();
    echoed.ablation = Some(super::AblationSettings {
        seeds: seeds.clone(),
        text: text_path.clone(),
        visual: visual_path.clone(),
    });
    echo(&dir, &echoed)?;
    loaded.vocab.save(&dir.join("vocab.txt"))?;
    let setup = AblationSetup {
        train: file.train.clone(),
        model: config,
        seeds,
        out_dir: Some(&dir),
        verbose: args.verbose,
    };
    let report = match args.mode {
        AblateMode::Init => {
            let (tp, vp) = (text_path.expect("checked"), visual_path.expect("checked"));
            let text = load_model(&tp)?;
            let visual = load_model(&vp)?;
            check_vocab(&text.model, &loaded.vocab)?;
            check_vocab(&visual.model, &loaded.vocab)?;
            let (tl, vl) = (tp.display().to_string(), vp.display().to_string());
            run_ablation(
                AblationStudy::Init(InitStudy {
                    tasks: &loaded.tasks,
                    validation: &loaded.heldout,
                    text: Some(Donor {
                        model: &text.model,
                        label: &tl,
                    }),
                    visual: Some(Donor {
                        model: &visual.model,
                        label: &vl,
                    }),
                }),
                &setup,
            )?
        }
        AblateMode::Multitask => run_ablation(
            AblationStudy::Multitask(MultitaskSetup {
                tasks: &loaded.tasks,
                validation: &loaded.heldout,
            }),
            &setup,
        )?,
    };
    println!("variants: {}", report.variants.join(", "));
    for c in &report.init {
        let fmt = |s: Option<usize>| s.map_or("never".to_string(), |s| s.to_string());
        println!(
            "seed {}: random final exact {:.1}% reached at step {} (random), {} (visual_only), {} (hybrid)",
            c.seed,
            100.0 * c.target,
            fmt(c.random),
            fmt(c.visual_only),
            fmt(c.hybrid)
        );
    }
    for f in &report.forgetting {
        println!(
            "seed {} {:<12} peak {:.1}% at {} final {:.1}% {}",
            f.seed,
            f.task,
            100.0 * f.peak,
            f.peak_step,
            100.0 * f.final_exact,
            if f.retained { "retained" } else { "FORGOTTEN" }
        );
    }
    Ok(())
}
