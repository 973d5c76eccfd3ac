use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::metrics::{mean_accuracy, mse, r_squared};
use super::probe::{linear_probe, ProbeOptions};
use crate::data::{segments, sparse_indices, DatasetTag, Datasets, SyntheticSample, TRAIT_NAMES};
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::model::{fuse_pam_ram, ArchitectureConfig, Model};
use crate::seed::{self, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    /// FEM, PAM and consensus.
    Pam,
    /// FEM, EAM and RAM.
    Ram,
    /// Weighted average of the two personality paths.
    Fused,
    /// Per-frame FEM and EAM.
    Emotion,
}

impl FromStr for EvalPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "pam" => Ok(EvalPath::Pam),
            "ram" => Ok(EvalPath::Ram),
            "fused" => Ok(EvalPath::Fused),
            "emotion" => Ok(EvalPath::Emotion),
            other => Err(Error::config("paths", format!("unknown path `{other}`"))),
        }
    }
}

impl EvalPath {
    pub const ALL: [EvalPath; 4] = [EvalPath::Pam, EvalPath::Ram, EvalPath::Fused, EvalPath::Emotion];

    /// Parses a comma-separated list such as `pam,ram`.
    pub fn parse_list(s: &str) -> Result<Vec<EvalPath>> {
        let mut out: Vec<EvalPath> = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let p: EvalPath = part.parse()?;
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub paths: Vec<EvalPath>,
    /// Frames sampled per video, one per segment.
    pub k: usize,
    pub w_pam: f64,
    pub w_ram: f64,
    /// Seeds frame sampling and the probe split.
    pub seed: u64,
    /// Run the dataset probe on held-out frames.
    pub probe: Option<ProbeOptions>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            paths: EvalPath::ALL.to_vec(),
            k: 10,
            w_pam: 6.0,
            w_ram: 1.0,
            seed: 0,
            probe: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersonalityMetrics {
    pub mse_per_trait: Vec<f64>,
    /// Mean over traits.
    pub mse: f64,
    pub accuracy_per_trait: Vec<f64>,
    pub accuracy: f64,
    /// `None` where the trait's labels are constant.
    pub r2_per_trait: Vec<Option<f64>>,
    /// Mean over traits; `None` if any trait is undefined.
    pub r2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmotionMetrics {
    pub mse_arousal: f64,
    pub mse_valence: f64,
    /// Mean over both dimensions.
    pub mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub arch: ArchitectureConfig,
    pub options: EvalOptions,
    pub n_videos: usize,
    pub n_frames: usize,
    pub pam: Option<PersonalityMetrics>,
    pub ram: Option<PersonalityMetrics>,
    pub fused: Option<PersonalityMetrics>,
    pub emotion: Option<EmotionMetrics>,
    pub probe_accuracy: Option<f64>,
}

/// Per-trait metrics over videos; `labels` and `preds` are `[V,5]`.
pub fn personality_metrics(labels: &Tensor, preds: &Tensor) -> Result<PersonalityMetrics> {
    if labels.shape() != preds.shape() || labels.ndim() != 2 {
        return Err(Error::dim("personality_metrics", format!("{:?} vs {:?}", labels.shape(), preds.shape())));
    }
    let col = |t: &Tensor, j: usize| (0..t.rows()).map(|i| t.row(i)[j]).collect::<Vec<_>>();
    let d = labels.row_len();
    let (mut m, mut a, mut r) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..d {
        let (y, p) = (col(labels, j), col(preds, j));
        m.push(mse(&y, &p)?);
        a.push(mean_accuracy(&y, &p)?);
        r.push(match r_squared(&y, &p) {
            Ok(v) => Some(v),
            Err(Error::Undefined(_) | Error::Contract(_)) => None,
            Err(e) => return Err(e),
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let r2 = r.iter().copied().collect::<Option<Vec<f64>>>().map(|v| mean(&v));
    Ok(PersonalityMetrics {
        mse: mean(&m),
        accuracy: mean(&a),
        mse_per_trait: m,
        accuracy_per_trait: a,
        r2_per_trait: r,
        r2,
    })
}

/// Frames `[V*k,1,S,S]` and trait labels `[V,5]` of the held-out videos,
/// one frame drawn per segment.
pub fn sample_eval_videos(ds: &Datasets, k: usize, seed_value: u64) -> Result<(Tensor, Tensor)> {
    let videos = &ds.personality_eval;
    if videos.is_empty() {
        return Err(Error::config("paths", "no held-out videos"));
    }
    let mut rng = seed::rng(seed_value, stream::EVAL_SAMPLING);
    let mut frames: Vec<&Tensor> = Vec::with_capacity(videos.len() * k);
    for v in videos {
        let segs = segments(v.frames.len(), k).map_err(|e| Error::config("k", e.to_string()))?;
        for i in sparse_indices(&segs, &mut rng) {
            frames.push(&v.frames[i].image);
        }
    }
    let labels = videos.iter().flat_map(|v| v.traits).collect();
    Ok((Tensor::stack(&frames)?, Tensor::new(vec![videos.len(), 5], labels)?))
}

fn emotion_tensors(samples: &[SyntheticSample]) -> Result<(Tensor, Tensor)> {
    let images: Vec<&Tensor> = samples.iter().map(|s| &s.image).collect();
    let labels = samples.iter().flat_map(|s| [s.arousal, s.valence]).collect();
    Ok((Tensor::stack(&images)?, Tensor::new(vec![samples.len(), 2], labels)?))
}

/// Scores `model` on the held-out splits of `ds`.
pub fn evaluate_model(model: &Model, ds: &Datasets, opts: &EvalOptions) -> Result<EvalReport> {
    if opts.paths.is_empty() && opts.probe.is_none() {
        return Err(Error::config("paths", "nothing to evaluate"));
    }
    if !(opts.w_pam > 0.0 && opts.w_ram > 0.0) {
        return Err(Error::config("fusion_weights", "must be positive"));
    }
    let mut report = EvalReport {
        arch: model.arch.clone(),
        options: opts.clone(),
        n_videos: 0,
        n_frames: 0,
        pam: None,
        ram: None,
        fused: None,
        emotion: None,
        probe_accuracy: None,
    };
    let wants = |p| opts.paths.contains(&p);
    if wants(EvalPath::Pam) || wants(EvalPath::Ram) || wants(EvalPath::Fused) {
        let (frames, labels) = sample_eval_videos(ds, opts.k, opts.seed)?;
        let (pam, ram) = model.personality_batch(&frames, opts.k)?;
        report.n_videos = labels.rows();
        if wants(EvalPath::Pam) {
            report.pam = Some(personality_metrics(&labels, &pam)?);
        }
        if wants(EvalPath::Ram) {
            report.ram = Some(personality_metrics(&labels, &ram)?);
        }
        if wants(EvalPath::Fused) {
            let fused = (0..pam.rows())
                .map(|i| fuse_pam_ram(pam.row(i), ram.row(i), opts.w_pam, opts.w_ram))
                .collect::<Result<Vec<_>>>()?;
            let fused = Tensor::new(pam.shape().to_vec(), fused.concat())?;
            report.fused = Some(personality_metrics(&labels, &fused)?);
        }
    }
    if wants(EvalPath::Emotion) {
        if ds.emotion_eval.is_empty() {
            return Err(Error::config("paths", "no held-out emotion frames"));
        }
        let (images, labels) = emotion_tensors(&ds.emotion_eval)?;
        let pred = model.emotion(&images)?;
        let col = |t: &Tensor, j: usize| (0..t.rows()).map(|i| t.row(i)[j]).collect::<Vec<_>>();
        let mse_arousal = mse(&col(&labels, 0), &col(&pred, 0))?;
        let mse_valence = mse(&col(&labels, 1), &col(&pred, 1))?;
        report.n_frames = labels.rows();
        report.emotion = Some(EmotionMetrics {
            mse_arousal,
            mse_valence,
            mse: (mse_arousal + mse_valence) / 2.0,
        });
    }
    if let Some(p) = &opts.probe {
        report.probe_accuracy = Some(probe_discriminator(model, ds, p)?.0);
    }
    Ok(report)
}

/// Balanced held-out frames from both datasets with their tags.
pub fn probe_frames(ds: &Datasets, seed_value: u64) -> Result<(Tensor, Vec<DatasetTag>)> {
    let mut rng = seed::rng(seed_value, stream::PROBE);
    let mut emotion: Vec<&Tensor> = ds.emotion_eval.iter().map(|s| &s.image).collect();
    let mut personality: Vec<&Tensor> = ds
        .personality_eval
        .iter()
        .flat_map(|v| v.frames.iter().map(|f| &f.image))
        .collect();
    let n = emotion.len().min(personality.len());
    if n == 0 {
        return Err(Error::Contract("probe needs frames from both datasets".into()));
    }
    emotion.shuffle(&mut rng);
    personality.shuffle(&mut rng);
    let mut frames = emotion[..n].to_vec();
    frames.extend_from_slice(&personality[..n]);
    let mut tags = vec![DatasetTag::Emotion; n];
    tags.resize(2 * n, DatasetTag::Personality);
    Ok((Tensor::stack(&frames)?, tags))
}

/// Held-out accuracy of a fresh linear classifier predicting the dataset
/// from frozen FEM features. The model's own classifier is not used.
pub fn probe_discriminator(model: &Model, ds: &Datasets, opts: &ProbeOptions) -> Result<(f64, usize)> {
    let (frames, tags) = probe_frames(ds, opts.seed)?;
    let features = model.features(&frames)?;
    let labels: Vec<usize> = tags.iter().map(|t| t.index()).collect();
    let r = linear_probe(&features, &labels, opts)?;
    Ok((r.accuracy, r.n_train + r.n_test))
}

impl EvalReport {
    /// Plain-text table of every metric in the report.
    pub fn table(&self) -> String {
        let mut s = String::new();
        for (name, m) in [("pam", &self.pam), ("ram", &self.ram), ("fused", &self.fused)] {
            let Some(m) = m else { continue };
            let _ = writeln!(s, "{name} ({} videos)", self.n_videos);
            let _ = writeln!(s, "  {:<18} {:>10} {:>10} {:>10}", "trait", "mse", "accuracy", "r2");
            for (j, t) in TRAIT_NAMES.iter().enumerate() {
                let r2 = m.r2_per_trait[j].map_or("undefined".to_string(), |v| format!("{v:.6}"));
                let _ = writeln!(
                    s,
                    "  {:<18} {:>10.6} {:>10.6} {:>10}",
                    t, m.mse_per_trait[j], m.accuracy_per_trait[j], r2
                );
            }
            let r2 = m.r2.map_or("undefined".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(s, "  {:<18} {:>10.6} {:>10.6} {:>10}", "mean", m.mse, m.accuracy, r2);
        }
        if let Some(e) = &self.emotion {
            let _ = writeln!(s, "emotion ({} frames)", self.n_frames);
            let _ = writeln!(s, "  {:<18} {:>10.6}", "mse arousal", e.mse_arousal);
            let _ = writeln!(s, "  {:<18} {:>10.6}", "mse valence", e.mse_valence);
            let _ = writeln!(s, "  {:<18} {:>10.6}", "mse", e.mse);
        }
        if let Some(p) = self.probe_accuracy {
            let _ = writeln!(s, "probe accuracy {p:.6}");
        }
        s
    }
}
