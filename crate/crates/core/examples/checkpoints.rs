//! Saves a model, reloads it, and composes a new model from the text side of
//! one checkpoint and the visual side of another.
//!
//! cargo run --release --example checkpoints

use maskgen::transformer::{
    init_hybrid, load_checkpoint, save_checkpoint, to_bytes, CheckpointMeta, Donor, Model,
    ModelConfig, TransferSource,
};

fn main() -> maskgen::Result<()> {
    let dir = std::env::temp_dir().join("maskgen-checkpoints-example");
    std::fs::create_dir_all(&dir)?;
    let config = |seed| ModelConfig {
        seed,
        ..ModelConfig::toy(40, 8)
    };

    let text = Model::init_random(config(1))?;
    let visual = Model::init_random(config(2))?;
    let path = dir.join("text.bgen");
    save_checkpoint(&text, &CheckpointMeta::default(), &path)?;
    let loaded = load_checkpoint(&path)?;
    assert_eq!(
        to_bytes(&loaded.model, &loaded.meta)?,
        std::fs::read(&path)?
    );
    println!(
        "round trip of {} tensors is byte-identical",
        loaded.model.params.len()
    );

    let (hybrid, manifest) = init_hybrid(
        &config(3),
        Some(Donor {
            model: &loaded.model,
            label: "text.bgen",
        }),
        Some(Donor {
            model: &visual,
            label: "visual",
        }),
    )?;
    let mut counts = [0usize; 3];
    for (name, source) in &manifest {
        let slot = match source {
            TransferSource::Text(_) => 0,
            TransferSource::Visual(_) => 1,
            TransferSource::Random { .. } => 2,
        };
        counts[slot] += 1;
        if slot != 0 {
            println!("  {name:<32} {source:?}");
        }
    }
    println!(
        "text {} / visual {} / fresh {} of {} tensors",
        counts[0],
        counts[1],
        counts[2],
        hybrid.params.len()
    );
    Ok(())
}
