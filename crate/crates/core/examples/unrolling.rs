//! Sequence unrolling: one target sentence becomes one masked-prediction
//! case per token, and the corpus-level counts behave like a data
//! augmentation factor equal to the mean target length.
//!
//! cargo run --release --example unrolling

use maskgen::tasks::synth::{CorpusStats, SynthSpec};
use maskgen::tasks::unroll;

fn main() -> maskgen::Result<()> {
    let corpus = SynthSpec::multitask_demo(200, 3).generate()?;
    let vocab = corpus.vocabulary()?;
    let tasks = corpus.tasks(&vocab)?;

    let mmt = tasks
        .iter()
        .find(|t| t.spec.name == "mmt_en_de")
        .expect("demo task");
    let sample = &mmt.samples[0];
    println!(
        "source: {}",
        vocab.decode(sample.source.as_deref().unwrap_or(&[]))?
    );
    println!("target: {}", vocab.decode(&sample.target)?);
    for ex in unroll(0, 0, sample)? {
        let mut shown: Vec<&str> = sample.target[..ex.step - 1]
            .iter()
            .map(|&t| vocab.token(t).unwrap_or("?"))
            .collect();
        shown.push("[MASK]");
        println!(
            "  step {}: {:<40} -> {}",
            ex.step,
            shown.join(" "),
            vocab.token(ex.gold).unwrap_or("?")
        );
    }

    println!(
        "\n{:<10} {:<4} {:<7} {:>6} {:>6} {:>6}",
        "name", "type", "task", "sents", "augm", "ratio"
    );
    for t in &tasks {
        let s = CorpusStats::of(t);
        println!(
            "{:<10} {:<4} {:<7} {:>6} {:>6} {:>6.2}",
            s.name, s.kind, s.task, s.sents, s.augm, s.ratio
        );
    }
    Ok(())
}
