//! Two synthetic, heterogeneous training sets.
//!
//! Frames are grayscale images of a Gaussian blob whose position encodes
//! `(arousal, valence)`. The emotion set carries per-frame labels and a
//! brightness/ring nuisance; the personality set carries video-level trait
//! labels produced by a [`PlantedRelationship`] of each video's latent
//! emotion.

mod generate;
pub mod io;
mod planted;
mod render;
mod sampling;

pub use generate::{
    gen_emotion_set, gen_personality_set, DataConfig, DatasetTag, Datasets, SyntheticSample,
    SyntheticVideo, VideoParams,
};
pub use io::{load_datasets, manifest_hash, save_datasets, DatasetManifest};
pub use planted::{PlantedRelationship, TRAIT_NAMES};
pub use render::{render_frame, RenderParams, ShiftParams};
pub use sampling::{make_batch, segments, sparse_indices, sparse_sample, Batch};
