//! Trains on the demo world, then decodes the image-grounded translation
//! held-out set with its own images and with images moved to other
//! sentences. A text-only configuration of the same model ignores images,
//! so its delta is exactly zero.
//!
//! cargo run --release --example congruence -- [steps]

use maskgen::inference::congruence_eval;
use maskgen::tasks::synth::SynthSpec;
use maskgen::tasks::Modality;
use maskgen::trainer::{TrainConfig, TrainRun};
use maskgen::transformer::{Model, ModelConfig};

fn main() -> maskgen::Result<()> {
    let steps: usize = std::env::args()
        .nth(1)
        .map_or(12_000, |s| s.parse().expect("steps"));
    let corpus = SynthSpec::multitask_demo(500, 7).generate()?;
    let vocab = corpus.vocabulary()?;
    let names: Vec<&str> = corpus
        .corpora
        .iter()
        .map(|(t, _)| t.name.as_str())
        .collect();
    let (tasks, heldout) = corpus.split(&vocab, &names, 50)?;
    let config = TrainConfig {
        total_steps: steps,
        warmup: (steps / 20).max(1),
        ..TrainConfig::default()
    };
    let model = TrainRun::new(&config, &tasks)
        .run(Model::init_random(ModelConfig::toy(vocab.len(), 16))?)?
        .model;

    let mmt = heldout
        .iter()
        .find(|t| t.spec.name == "mmt_en_de")
        .expect("demo task");
    for modality in [Modality::ImageTextToText, Modality::TextToText] {
        let report = congruence_eval(&model, mmt, modality, 1, None)?;
        println!("{}", report.summary());
    }
    Ok(())
}
