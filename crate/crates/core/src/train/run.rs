use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::checkpoint::save_checkpoint;
use super::config::TrainConfig;
use super::step::{train_step, StepRecord, TrainState};
use crate::data::{make_batch, Batch, Datasets};
use crate::error::{Error, Result};
use crate::seed::{self, stream};

pub const LOG_FILE: &str = "log.jsonl";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.json";

/// Seed of the batch drawn at `step`; independent of every other step.
pub fn batch_seed(seed: u64, step: usize) -> u64 {
    seed::derive(seed::derive(seed, stream::BATCH), step as u64)
}

pub fn batch_at(config: &TrainConfig, ds: &Datasets, step: usize) -> Result<Batch> {
    make_batch(
        &ds.emotion_train,
        &ds.personality_train,
        config.batch_emotion(),
        config.batch_videos(),
        config.k,
        batch_seed(config.seed, step),
    )
}

pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<StepRecord>,
}

/// Trains from scratch. With `out`, writes `log.jsonl`, periodic
/// checkpoints under `checkpoints/step_NNNNNN` and the final `checkpoint`.
pub fn run_training(config: &TrainConfig, ds: &Datasets, out: Option<&Path>) -> Result<TrainOutcome> {
    config.check_data(ds)?;
    resume_training(config, ds, TrainState::new(config)?, out)
}

/// Continues from `state.step` up to `config.total_steps`.
pub fn resume_training(
    config: &TrainConfig,
    ds: &Datasets,
    mut state: TrainState,
    out: Option<&Path>,
) -> Result<TrainOutcome> {
    config.check_data(ds)?;
    if state.step > config.total_steps {
        return Err(Error::config(
            "total_steps",
            format!("checkpoint is at step {}, beyond {}", state.step, config.total_steps),
        ));
    }
    let mut log_file = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(LOG_FILE);
            let f = if state.step == 0 {
                File::create(path)?
            } else {
                OpenOptions::new().create(true).append(true).open(path)?
            };
            Some(BufWriter::new(f))
        }
        None => None,
    };
    let mut log = Vec::with_capacity(config.total_steps - state.step);
    while state.step < config.total_steps {
        let batch = batch_at(config, ds, state.step)?;
        let record = match train_step(&mut state, &batch, config) {
            Ok(r) => r,
            Err(Error::NumericalAbort { step, message, diagnostic }) => {
                let diagnostic = match out {
                    Some(dir) => {
                        let p = dir.join(DIAGNOSTIC_FILE);
                        std::fs::write(&p, &diagnostic)?;
                        p.display().to_string()
                    }
                    None => diagnostic,
                };
                return Err(Error::NumericalAbort { step, message, diagnostic });
            }
            Err(e) => return Err(e),
        };
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, &record)?;
            f.write_all(b"\n")?;
        }
        log.push(record);
        if let Some(dir) = out {
            if config.checkpoint_every > 0 && state.step % config.checkpoint_every == 0 && state.step < config.total_steps {
                save_checkpoint(&dir.join("checkpoints").join(format!("step_{:06}", state.step)), &state, config)?;
            }
        }
    }
    if let Some(mut f) = log_file {
        f.flush()?;
    }
    if let Some(dir) = out {
        save_checkpoint(&dir.join("checkpoint"), &state, config)?;
    }
    Ok(TrainOutcome { state, log })
}
