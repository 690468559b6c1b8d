//! Bidirectional post-norm transformer with a masked-LM head, its
//! parameters, checkpoint format and hybrid initialization.

mod checkpoint;
mod init;
mod model;
mod params;

pub use checkpoint::{
    from_bytes, load_checkpoint, save_checkpoint, to_bytes, Checkpoint, CheckpointMeta,
    FORMAT_VERSION, MAGIC,
};
pub use init::{init_for_mode, init_hybrid, Donor, InitMode, TransferManifest, TransferSource};
pub use model::{
    attention_only, encode, feed_forward, forward, mlm_head, self_attention, MaskedCase, Model,
};
pub use params::{
    group_of, names, Bound, BoundLayer, ModelConfig, ParamGroup, Parameters, LN_EPS, SEGMENTS,
};
