use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// The 20-layer backbone: four stride-2 blocks of width 64..512 with
    /// 1, 2, 4 and 1 residual units, a 512-d embedding.
    Full,
    /// Desk-scale variant: widths 8..64, 1, 1, 2, 1 residual units, 64-d
    /// embedding on 32x32 inputs.
    Micro,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FemActivation {
    /// Learnable per-channel slope, initialized at 0.25.
    Prelu,
    Relu,
}

/// How per-frame predictions of one video are pooled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consensus {
    #[default]
    Average,
    Max,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub preset: Preset,
    /// Square input side length.
    pub input_size: usize,
    /// Output channels of each stride-2 block.
    pub widths: Vec<usize>,
    /// Residual units following each block's downsampling convolution.
    pub residual_units: Vec<usize>,
    pub feature_dim: usize,
    pub ram_hidden: usize,
    pub activation: FemActivation,
    pub consensus: Consensus,
    /// Pool squashed per-frame scores instead of raw logits.
    pub consensus_post_squash: bool,
}

impl ArchitectureConfig {
    pub fn full() -> Self {
        ArchitectureConfig {
            preset: Preset::Full,
            input_size: 112,
            widths: vec![64, 128, 256, 512],
            residual_units: vec![1, 2, 4, 1],
            feature_dim: 512,
            ram_hidden: 128,
            activation: FemActivation::Prelu,
            consensus: Consensus::Average,
            consensus_post_squash: false,
        }
    }

    pub fn micro() -> Self {
        ArchitectureConfig {
            preset: Preset::Micro,
            input_size: 32,
            widths: vec![8, 16, 32, 64],
            residual_units: vec![1, 1, 2, 1],
            feature_dim: 64,
            ..Self::full()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() {
            return Err(Error::config("widths", "need at least one block"));
        }
        if self.widths.len() != self.residual_units.len() {
            return Err(Error::config(
                "residual_units",
                format!("{} entries for {} blocks", self.residual_units.len(), self.widths.len()),
            ));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("widths", "widths must be positive"));
        }
        if self.input_size < 3 {
            return Err(Error::config("input_size", "must be at least 3"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim", "must be positive"));
        }
        if self.ram_hidden == 0 {
            return Err(Error::config("ram_hidden", "must be positive"));
        }
        Ok(())
    }

    /// Spatial side after every stride-2 block.
    pub fn final_spatial(&self) -> usize {
        self.widths.iter().fold(self.input_size, |s, _| s.div_ceil(2))
    }

    /// Input width of the embedding layer.
    pub fn flat_dim(&self) -> usize {
        let s = self.final_spatial();
        self.widths.last().copied().unwrap_or(0) * s * s
    }
}
