//! Optimization: learning-rate schedule, the two-phase step, checkpoints
//! and the seeded training loop.

mod checkpoint;
mod config;
mod gradcheck;
mod run;
mod step;

pub use checkpoint::{load_checkpoint, load_model, save_checkpoint, CheckpointManifest, CHECKPOINT_FORMAT};
pub use config::{lr_at, AblationFlags, TrainConfig};
pub use gradcheck::{grad_check_groups, GroupCheck};
pub use run::{batch_at, batch_seed, resume_training, run_training, TrainOutcome, DIAGNOSTIC_FILE, LOG_FILE};
pub use step::{train_step, StepRecord, TrainState};
