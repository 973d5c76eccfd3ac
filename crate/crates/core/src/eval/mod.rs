//! Metrics, held-out evaluation, the dataset probe and feature projection.

mod metrics;
mod probe;
mod projection;
mod report;

pub use metrics::{mean_accuracy, mse, r_squared};
pub use probe::{linear_probe, ProbeOptions, ProbeResult};
pub use projection::{pca_2d, symmetric_eigen, write_projection_csv};
pub use report::{
    evaluate_model, personality_metrics, probe_discriminator, probe_frames, sample_eval_videos,
    EmotionMetrics, EvalOptions, EvalPath, EvalReport, PersonalityMetrics,
};

use std::path::Path;

use crate::data::DatasetTag;
use crate::engine::Tensor;
use crate::error::Result;
use crate::model::Model;

/// Projects the FEM features of `frames` to 2-D and writes `x,y,tag` CSV.
pub fn export_projection(model: &Model, frames: &Tensor, tags: &[DatasetTag], path: &Path) -> Result<Vec<[f64; 2]>> {
    let features = model.features(frames)?;
    let points = pca_2d(&features)?;
    write_projection_csv(path, &points, tags)?;
    Ok(points)
}
