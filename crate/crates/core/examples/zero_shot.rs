//! Trains A→B, B→A and A→C ciphers and decodes the unseen B→C direction by
//! pairing B sources with the C specifier.
//!
//! cargo run --release --example zero_shot -- [steps] [shared-names]

use maskgen::inference::zero_shot_eval;
use maskgen::tasks::synth::SynthSpec;
use maskgen::trainer::{TrainConfig, TrainRun};
use maskgen::transformer::{Model, ModelConfig};

fn main() -> maskgen::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let steps: usize = args.first().map_or(20_000, |s| s.parse().expect("steps"));
    let shared: usize = args.get(1).map_or(8, |s| s.parse().expect("shared"));

    let corpus = SynthSpec::zero_shot_demo(500, shared, 5).generate()?;
    let vocab = corpus.vocabulary()?;
    let (train, held) = corpus.split(&vocab, &["mt_a_b", "mt_b_a", "mt_a_c"], 50)?;
    let (_, test) = corpus.split_with_reference(&vocab, &["mt_b_c"], "mt_b_c", 50)?;
    let config = ModelConfig::toy(vocab.len(), 4);

    let untrained = Model::init_random(config.clone())?;
    let schedule = TrainConfig {
        total_steps: steps,
        warmup: (steps / 20).max(1),
        validate_every: (steps / 4).max(1),
        ..TrainConfig::default()
    };
    let out = TrainRun::new(&schedule, &train)
        .validation(&held)
        .verbose(true)
        .run(untrained.clone())?;

    let trained = train.directions();
    let zero = zero_shot_eval(&out.model, &test[0], &trained, None)?;
    let baseline = zero_shot_eval(&untrained, &test[0], &trained, None)?;
    println!("trained:  {}", zero.summary());
    println!("untrained: {}", baseline.summary());
    println!("gain {:.2} BLEU", zero.scores.bleu - baseline.scores.bleu);
    Ok(())
}
