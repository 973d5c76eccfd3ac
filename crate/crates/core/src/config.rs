//! Flat `key = value` configuration files.
//!
//! ```text
//! # comments and blank lines are ignored
//! data.image_size = 32
//! arch.preset = micro
//! train.total_steps = 2000
//! train.lambda4 = 0.1
//! ```
//!
//! Keys are grouped by prefix (`data.`, `arch.`, `train.`, `eval.`,
//! `suite.`). An unknown key is an error that names it.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ablation::{Suite, SuiteConfig};
use crate::data::DataConfig;
use crate::engine::SmoothL1Variant;
use crate::error::{Error, Result};
use crate::eval::{EvalOptions, EvalPath, ProbeOptions};
use crate::losses::Reduction;
use crate::model::{ArchitectureConfig, Consensus, FemActivation, Preset};
use crate::train::TrainConfig;

/// Everything a command can be configured with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub suite: Suite,
    pub suite_seeds: Vec<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            suite: Suite::Table4,
            suite_seeds: (0..5).collect(),
        }
    }
}

/// Splits `text` into key/value pairs. Repeated keys are an error.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config_msg(format!("line {}: expected `key = value`", n + 1)));
        };
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::config(key, "set more than once"));
        }
    }
    Ok(out)
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::config(key, format!("expected a boolean, got `{v}`"))),
    }
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| num(key, s))
        .collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_pairs(&parse_pairs(&text)?)
    }

    /// Applies `pairs` over the defaults. `arch.preset` is applied first so
    /// the other `arch.` keys refine it.
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(p) = pairs.get("arch.preset") {
            c.set("arch.preset", p)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| *k != "arch.preset") {
            c.set(k, v)?;
        }
        c.data.validate()?;
        c.train.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let d = &mut self.data;
        let t = &mut self.train;
        match key {
            "data.seed" => d.seed = num(key, v)?,
            "data.image_size" => d.render.image_size = num(key, v)?,
            "data.background" => d.render.background = num(key, v)?,
            "data.blob_amplitude" => d.render.blob_amplitude = num(key, v)?,
            "data.blob_sigma" => d.render.blob_sigma = num(key, v)?,
            "data.position_span" => d.render.position_span = num(key, v)?,
            "data.pixel_noise" => d.render.pixel_noise = num(key, v)?,
            "data.emotion_brightness" => d.emotion_shift.brightness = num(key, v)?,
            "data.emotion_ring_amplitude" => d.emotion_shift.ring_amplitude = num(key, v)?,
            "data.emotion_ring_period" => d.emotion_shift.ring_period = num(key, v)?,
            "data.personality_brightness" => d.personality_shift.brightness = num(key, v)?,
            "data.personality_ring_amplitude" => d.personality_shift.ring_amplitude = num(key, v)?,
            "data.personality_ring_period" => d.personality_shift.ring_period = num(key, v)?,
            "data.planted_noise" => d.planted.noise_sigma = num(key, v)?,
            "data.frames_per_video" => d.video.frames_per_video = num(key, v)?,
            "data.k" => d.video.k = num(key, v)?,
            "data.frame_jitter" => d.video.frame_jitter = num(key, v)?,
            "data.latent_range" => d.video.latent_range = num(key, v)?,
            "data.n_emotion_train" => d.n_emotion_train = num(key, v)?,
            "data.n_emotion_eval" => d.n_emotion_eval = num(key, v)?,
            "data.n_videos_train" => d.n_videos_train = num(key, v)?,
            "data.n_videos_eval" => d.n_videos_eval = num(key, v)?,

            "arch.preset" => {
                t.arch = match v {
                    "full" => ArchitectureConfig::full(),
                    "micro" => ArchitectureConfig::micro(),
                    "custom" => ArchitectureConfig {
                        preset: Preset::Custom,
                        ..ArchitectureConfig::micro()
                    },
                    _ => return Err(Error::config(key, format!("unknown preset `{v}`"))),
                }
            }
            "arch.input_size" => t.arch.input_size = num(key, v)?,
            "arch.widths" => t.arch.widths = list(key, v)?,
            "arch.residual_units" => t.arch.residual_units = list(key, v)?,
            "arch.feature_dim" => t.arch.feature_dim = num(key, v)?,
            "arch.ram_hidden" => t.arch.ram_hidden = num(key, v)?,
            "arch.activation" => {
                t.arch.activation = match v {
                    "prelu" => FemActivation::Prelu,
                    "relu" => FemActivation::Relu,
                    _ => return Err(Error::config(key, format!("unknown activation `{v}`"))),
                }
            }
            "arch.consensus" => {
                t.arch.consensus = match v {
                    "average" => Consensus::Average,
                    "max" => Consensus::Max,
                    _ => return Err(Error::config(key, format!("unknown consensus `{v}`"))),
                }
            }
            "arch.consensus_post_squash" => t.arch.consensus_post_squash = flag(key, v)?,

            "train.lr0" => t.lr0 = num(key, v)?,
            "train.momentum" => t.momentum = num(key, v)?,
            "train.total_steps" => t.total_steps = num(key, v)?,
            "train.decay_steps" => t.decay_steps = Some(list(key, v)?),
            "train.decay_factor" => t.decay_factor = num(key, v)?,
            "train.n_emotion" => t.n_emotion = num(key, v)?,
            "train.n_videos" => t.n_videos = num(key, v)?,
            "train.k" => t.k = num(key, v)?,
            "train.seed" => t.seed = num(key, v)?,
            "train.checkpoint_every" => t.checkpoint_every = num(key, v)?,
            "train.lambda1" => t.weights.lambda1 = num(key, v)?,
            "train.lambda2" => t.weights.lambda2 = num(key, v)?,
            "train.lambda3" => t.weights.lambda3 = num(key, v)?,
            "train.lambda4" => t.weights.lambda4 = num(key, v)?,
            "train.lambda5" => t.weights.lambda5 = num(key, v)?,
            "train.margin" => t.weights.margin = num(key, v)?,
            "train.smooth_l1" => {
                t.weights.variant = match v {
                    "continuous" => SmoothL1Variant::Continuous,
                    "fixed_offset" => SmoothL1Variant::FixedOffset,
                    _ => return Err(Error::config(key, format!("unknown variant `{v}`"))),
                }
            }
            "train.reduction" => {
                t.weights.reduction = match v {
                    "mean" => Reduction::Mean,
                    "sum" => Reduction::Sum,
                    _ => return Err(Error::config(key, format!("unknown reduction `{v}`"))),
                }
            }
            "train.disable_personality"
            | "train.disable_emotion"
            | "train.disable_ram"
            | "train.disable_coherence"
            | "train.ram_stop_gradient" => t.flags.set(&key["train.".len()..], flag(key, v)?)?,

            "eval.paths" => self.eval.paths = EvalPath::parse_list(v)?,
            "eval.k" => self.eval.k = num(key, v)?,
            "eval.w_pam" => self.eval.w_pam = num(key, v)?,
            "eval.w_ram" => self.eval.w_ram = num(key, v)?,
            "eval.seed" => self.eval.seed = num(key, v)?,
            "eval.probe" => self.eval.probe = flag(key, v)?.then(ProbeOptions::default),

            "suite.name" => self.suite = v.parse()?,
            "suite.seeds" => self.suite_seeds = list(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn suite_config(&self) -> SuiteConfig {
        let mut s = SuiteConfig::new(self.suite, self.train.clone(), self.suite_seeds.clone());
        s.eval = EvalOptions {
            probe: self.eval.probe.or(Some(ProbeOptions::default())),
            ..self.eval.clone()
        };
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_applies_keys() {
        let text = "# demo\narch.widths = 4, 8\narch.residual_units = 1,1\narch.preset = custom\n\ntrain.lambda4 = 0.5 # inline\ndata.k = 5\neval.paths = pam,fused\n";
        let c = RunConfig::from_pairs(&parse_pairs(text).unwrap()).unwrap();
        assert_eq!(c.train.arch.preset, Preset::Custom);
        assert_eq!(c.train.arch.widths, vec![4, 8]);
        assert_eq!(c.train.weights.lambda4, 0.5);
        assert_eq!(c.data.video.k, 5);
        assert_eq!(c.eval.paths, vec![EvalPath::Pam, EvalPath::Fused]);
    }

    #[test]
    fn unknown_and_bad_keys_are_named() {
        for text in ["train.lamda4 = 1", "train.total_steps = many", "arch.consensus = median"] {
            let err = RunConfig::from_pairs(&parse_pairs(text).unwrap()).unwrap_err();
            let key = text.split('=').next().unwrap().trim();
            assert!(matches!(&err, Error::Config { key: Some(k), .. } if k == key), "{err}");
            assert_eq!(err.exit_code(), 2);
        }
        assert!(matches!(parse_pairs("a = 1\na = 2"), Err(Error::Config { key: Some(k), .. }) if k == "a"));
        assert!(parse_pairs("no equals sign").is_err());
    }

    #[test]
    fn validation_runs_after_parsing() {
        let err = RunConfig::from_pairs(&parse_pairs("train.momentum = 1.5").unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config { key: Some(k), .. } if k == "momentum"));
    }
}
