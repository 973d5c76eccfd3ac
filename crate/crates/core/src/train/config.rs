use serde::{Deserialize, Serialize};

use crate::data::Datasets;
use crate::error::{Error, Result};
use crate::losses::{LossWeights, TermMask};
use crate::model::ArchitectureConfig;

/// Switches used by the ablation suites.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Drop the personality set: no videos, no personality or RAM loss.
    pub disable_personality: bool,
    /// Drop the emotion set and its loss.
    pub disable_emotion: bool,
    pub disable_ram: bool,
    /// No dataset classifier and no confusion loss.
    pub disable_coherence: bool,
    /// RAM learns from detached emotion scores.
    pub ram_stop_gradient: bool,
}

impl AblationFlags {
    pub fn mask(&self) -> TermMask {
        TermMask {
            personality: !self.disable_personality,
            emotion: !self.disable_emotion,
            coherence: !self.disable_coherence,
            ram: !self.disable_ram && !self.disable_personality,
            ram_stop_gradient: self.ram_stop_gradient,
        }
    }

    /// Sets a flag by its config name.
    pub fn set(&mut self, name: &str, on: bool) -> Result<()> {
        let slot = match name {
            "disable_personality" => &mut self.disable_personality,
            "disable_emotion" => &mut self.disable_emotion,
            "disable_ram" => &mut self.disable_ram,
            "disable_coherence" => &mut self.disable_coherence,
            "ram_stop_gradient" => &mut self.ram_stop_gradient,
            _ => return Err(Error::config(name, "unknown ablation flag")),
        };
        *slot = on;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchitectureConfig,
    pub lr0: f64,
    pub momentum: f64,
    pub total_steps: usize,
    /// Steps at which the learning rate is multiplied by `decay_factor`.
    /// `None` places them at 4/7 and 6/7 of `total_steps`.
    pub decay_steps: Option<Vec<usize>>,
    pub decay_factor: f64,
    pub n_emotion: usize,
    pub n_videos: usize,
    pub k: usize,
    pub weights: LossWeights,
    pub flags: AblationFlags,
    /// Seeds initialization and batch sampling.
    pub seed: u64,
    /// Write an intermediate checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchitectureConfig::micro(),
            lr0: 0.01,
            momentum: 0.9,
            total_steps: 4000,
            decay_steps: None,
            decay_factor: 0.1,
            n_emotion: 32,
            n_videos: 4,
            k: 10,
            weights: LossWeights::default(),
            flags: AblationFlags::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn milestones(&self) -> Vec<usize> {
        match &self.decay_steps {
            Some(d) => d.clone(),
            None => {
                let mut m: Vec<usize> = [4, 6].iter().map(|f| self.total_steps * f / 7).filter(|&s| s > 0).collect();
                m.dedup();
                m
            }
        }
    }

    /// Emotion frames per batch after ablation flags.
    pub fn batch_emotion(&self) -> usize {
        if self.flags.disable_emotion {
            0
        } else {
            self.n_emotion
        }
    }

    /// Videos per batch after ablation flags.
    pub fn batch_videos(&self) -> usize {
        if self.flags.disable_personality {
            0
        } else {
            self.n_videos
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.weights.validate()?;
        if self.total_steps == 0 {
            return Err(Error::config("total_steps", "must be at least 1"));
        }
        let m = self.milestones();
        if m.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("decay_steps", "must be strictly increasing"));
        }
        if m.last().is_some_and(|&s| s >= self.total_steps) {
            return Err(Error::config("decay_steps", "must lie below total_steps"));
        }
        if self.k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("lr0", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum", "must lie in [0, 1)"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::config("decay_factor", "must lie in (0, 1]"));
        }
        if self.flags.disable_personality && self.flags.disable_emotion {
            return Err(Error::config("disable_emotion", "at least one task must stay enabled"));
        }
        if self.batch_emotion() == 0 && self.batch_videos() == 0 {
            return Err(Error::config("n_emotion", "batch would be empty"));
        }
        Ok(())
    }

    /// Checks the configuration against the data it will train on.
    pub fn check_data(&self, ds: &Datasets) -> Result<()> {
        self.validate()?;
        if ds.image_size() != self.arch.input_size {
            return Err(Error::config(
                "input_size",
                format!("architecture expects {}, data has {}", self.arch.input_size, ds.image_size()),
            ));
        }
        if self.batch_videos() > 0 && self.k > ds.config.video.frames_per_video {
            return Err(Error::config(
                "k",
                format!("k = {} exceeds {} frames per video", self.k, ds.config.video.frames_per_video),
            ));
        }
        if self.batch_emotion() > ds.emotion_train.len() {
            return Err(Error::config("n_emotion", "larger than the emotion training set"));
        }
        if self.batch_videos() > ds.personality_train.len() {
            return Err(Error::config("n_videos", "larger than the personality training set"));
        }
        Ok(())
    }
}

/// Learning rate in effect at `step`.
pub fn lr_at(step: usize, config: &TrainConfig) -> f64 {
    let passed = config.milestones().iter().filter(|&&m| m <= step).count();
    config.lr0 * config.decay_factor.powi(passed as i32)
}
