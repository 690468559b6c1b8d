//! Trains one model on five synthetic tasks (three ciphers, captioning and
//! image-grounded translation) and reports held-out exact match per task.
//!
//! cargo run --release --example multitask -- [steps] [lines-per-task]

use std::time::Instant;

use maskgen::tasks::synth::SynthSpec;
use maskgen::trainer::{TrainConfig, TrainRun};
use maskgen::transformer::{Model, ModelConfig};

fn main() -> maskgen::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(4000, |s| s.parse().expect("steps"));
    let lines: usize = args.next().map_or(500, |s| s.parse().expect("lines"));

    let corpus = SynthSpec::multitask_demo(lines, 7).generate()?;
    let vocab = corpus.vocabulary()?;
    let names: Vec<&str> = corpus
        .corpora
        .iter()
        .map(|(t, _)| t.name.as_str())
        .collect();
    let (tasks, heldout) = corpus.split(&vocab, &names, 50)?;
    println!("vocabulary: {} tokens, {} tasks", vocab.len(), tasks.len());

    let model = Model::init_random(ModelConfig::toy(vocab.len(), 16))?;
    let config = TrainConfig {
        total_steps: steps,
        warmup: (steps / 20).max(1),
        validate_every: (steps / 8).max(1),
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let out = TrainRun::new(&config, &tasks)
        .validation(&heldout)
        .verbose(true)
        .run(model)?;
    let secs = start.elapsed().as_secs_f64();
    println!(
        "{steps} steps in {secs:.1}s ({:.2} ms/step)",
        1e3 * secs / steps.max(1) as f64
    );
    for task in &heldout {
        let (_, last) = out.curve(&task.spec.name).pop().expect("validated");
        println!(
            "{:<10} exact {:5.1}%  BLEU {:5.1}",
            task.spec.name,
            100.0 * last.exact_match,
            last.bleu
        );
    }
    Ok(())
}
