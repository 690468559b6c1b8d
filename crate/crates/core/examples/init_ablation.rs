//! Pretrains a text-side model on translation ciphers and a visual-side
//! model on captioning, then trains the image-grounded translation task
//! from random, visual-only and hybrid starting points.
//!
//! Sentences have a fixed length of three words. With lengths of three to
//! five, the image-grounded task trained alone from random weights stays
//! near 0% exact match for 20k steps, which leaves nothing to race against.
//!
//! cargo run --release --example init_ablation -- [seeds] [steps] [text-steps] [visual-steps] [out-dir]

use std::path::PathBuf;

use maskgen::tasks::synth::SynthSpec;
use maskgen::trainer::{
    run_ablation, AblationSetup, AblationStudy, InitStudy, TrainConfig, TrainRun,
};
use maskgen::transformer::{Donor, Model, ModelConfig};

fn schedule(steps: usize, validate_every: usize) -> TrainConfig {
    TrainConfig {
        total_steps: steps,
        warmup: (steps / 20).max(1),
        validate_every,
        ..TrainConfig::default()
    }
}

fn main() -> maskgen::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg =
        |i: usize, default: usize| args.get(i).map_or(default, |s| s.parse().expect("number"));
    let seeds = arg(0, 2) as u64;
    let steps = arg(1, 20_000);
    let text_steps = arg(2, 10_000);
    let visual_steps = arg(3, 5_000);
    let out = args.get(4).map(PathBuf::from);

    let corpus = SynthSpec::multitask_demo(500, 7)
        .with_lengths(3, 3)
        .generate()?;
    let vocab = corpus.vocabulary()?;
    let config = ModelConfig::toy(vocab.len(), 16);

    let (mt, mt_held) = corpus.split_with_reference(
        &vocab,
        &["mt_en_de", "mt_de_en", "mt_en_fr"],
        "mt_en_de",
        50,
    )?;
    let text = TrainRun::new(&schedule(text_steps, text_steps), &mt)
        .validation(&mt_held)
        .verbose(true)
        .run(Model::init_random(config.clone())?)?
        .model;

    let (ic, ic_held) = corpus.split_with_reference(&vocab, &["ic_en"], "ic_en", 50)?;
    let visual = TrainRun::new(&schedule(visual_steps, visual_steps), &ic)
        .validation(&ic_held)
        .verbose(true)
        .run(text.clone())?
        .model;

    let (mmt, mmt_held) = corpus.split(&vocab, &["mmt_en_de"], 50)?;
    let setup = AblationSetup {
        train: schedule(steps, (steps / 40).max(1)),
        model: config,
        seeds: (1..=seeds).collect(),
        out_dir: out.as_deref(),
        verbose: false,
    };
    let study = InitStudy {
        tasks: &mmt,
        validation: &mmt_held,
        text: Some(Donor {
            model: &text,
            label: "text",
        }),
        visual: Some(Donor {
            model: &visual,
            label: "visual",
        }),
    };
    let report = run_ablation(AblationStudy::Init(study), &setup)?;
    println!("seed  target  random  visual_only  hybrid");
    for c in &report.init {
        let fmt = |s: Option<usize>| s.map_or("-".to_string(), |s| s.to_string());
        println!(
            "{:>4}  {:>5.1}%  {:>6}  {:>11}  {:>6}",
            c.seed,
            100.0 * c.target,
            fmt(c.random),
            fmt(c.visual_only),
            fmt(c.hybrid)
        );
    }
    let faster = report.init.iter().filter(|c| c.hybrid_faster()).count();
    println!("hybrid faster on {faster} of {} seeds", report.init.len());
    Ok(())
}
