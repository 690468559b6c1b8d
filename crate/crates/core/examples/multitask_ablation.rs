//! Trains the reference task alone and together with every other task, and
//! checks each task's final score against its best earlier score.
//!
//! cargo run --release --example multitask_ablation -- [steps] [out-dir]

use std::path::PathBuf;

use maskgen::tasks::synth::SynthSpec;
use maskgen::trainer::{run_ablation, AblationSetup, AblationStudy, MultitaskSetup, TrainConfig};
use maskgen::transformer::ModelConfig;

fn main() -> maskgen::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().map_or(8000, |s| s.parse().expect("steps"));
    let out = args.get(1).map(PathBuf::from);

    let corpus = SynthSpec::multitask_demo(500, 7).generate()?;
    let vocab = corpus.vocabulary()?;
    let names: Vec<&str> = corpus
        .corpora
        .iter()
        .map(|(t, _)| t.name.as_str())
        .collect();
    let (tasks, heldout) = corpus.split(&vocab, &names, 50)?;
    let setup = AblationSetup {
        train: TrainConfig {
            total_steps: steps,
            warmup: (steps / 20).max(1),
            validate_every: (steps / 10).max(1),
            ..TrainConfig::default()
        },
        model: ModelConfig::toy(vocab.len(), 16),
        seeds: vec![1],
        out_dir: out.as_deref(),
        verbose: true,
    };
    let report = run_ablation(
        AblationStudy::Multitask(MultitaskSetup {
            tasks: &tasks,
            validation: &heldout,
        }),
        &setup,
    )?;
    for run in &report.runs {
        let series = run.exact_series(&report.reference);
        let last = series.last().map_or(0.0, |p| p.1);
        println!(
            "{:<12} {} final exact {:.1}%",
            run.variant,
            report.reference,
            100.0 * last
        );
    }
    for f in &report.forgetting {
        println!(
            "{:<10} peak {:5.1}% at step {:>5}, final {:5.1}%{}",
            f.task,
            100.0 * f.peak,
            f.peak_step,
            100.0 * f.final_exact,
            if f.retained { "" } else { "  (forgotten)" }
        );
    }
    Ok(())
}
