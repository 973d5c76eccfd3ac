//! The joint network: a shared convolutional backbone feeding personality,
//! emotion, relationship and dataset-classifier heads.

mod config;
mod forward;
mod params;

pub use config::{ArchitectureConfig, Consensus, FemActivation, Preset};
pub use forward::{
    consensus_variant, discriminator_forward, discriminator_logits, eam_forward, fem_forward,
    forward_batch, fuse_pam_ram, pam_forward, ram_forward, traits_from_logits,
    BatchOutputs, Model, VideoPrediction,
};
pub use params::{
    Backbone, ConvBlock, Dense, ModelParams, ModelVars, ParamGroup, Params, RelationHead,
    ResidualUnit,
};
