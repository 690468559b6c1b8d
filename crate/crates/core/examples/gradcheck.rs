//! Compares backpropagated gradients of the masked-LM loss with central
//! finite differences on a small two-layer model fed a multimodal input.
//!
//! cargo run --release --example gradcheck

use maskgen::tasks::synth::SynthSpec;
use maskgen::transformer::{Model, ModelConfig};

fn main() -> maskgen::Result<()> {
    let corpus = SynthSpec::multitask_demo(4, 1).generate()?;
    let vocab = corpus.vocabulary()?;
    let tasks = corpus.tasks(&vocab)?;
    let mmt = tasks
        .iter()
        .find(|t| t.spec.name == "mmt_en_de")
        .expect("demo task");

    let mut config = ModelConfig::toy(vocab.len(), 16);
    config.d_model = 16;
    config.d_ff = 32;
    config.init_std = 0.5;
    let model = Model::init_random(config)?;

    let sample = &mmt.samples[0];
    let case = maskgen::transformer::MaskedCase {
        cond: mmt.conditioning(sample),
        prefix: &sample.target[..2],
        gold: sample.target[2],
    };
    let cmp = model.grad_check(&[case], 1e-6)?;
    let report = cmp.report();
    println!("{} parameters checked", model.params.num_scalars());
    println!("max relative error  {:.3e}", report.max_rel_error);
    println!("max absolute error  {:.3e}", report.max_abs_error);
    for floor in [1e-6, 1e-4, 1e-2] {
        println!(
            "relative error with |g| floor {floor:.0e}: {:.3e}",
            cmp.max_rel_error_with_floor(floor)
        );
    }
    Ok(())
}
