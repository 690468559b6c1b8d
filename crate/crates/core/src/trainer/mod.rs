//! AdamW with decoupled weight decay, the warmup/linear-decay schedule, the
//! training loop and the two ablation studies.

mod ablation;
mod optim;
mod schedule;
mod train;

pub use ablation::{
    run_ablation, AblationMode, AblationReport, AblationSetup, AblationStudy, ForgettingRow,
    InitComparison, InitStudy, MultitaskSetup, RunCurve,
};
pub use optim::{optimizer_step, AdamW, OptimizerState};
pub use schedule::lr_at;
pub use train::{train, LogRow, TrainConfig, TrainOutcome, TrainRun, ValidationRow};

#[cfg(test)]
mod tests;
