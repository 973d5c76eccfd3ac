use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::planted::PlantedRelationship;
use super::render::{render_frame, RenderParams, ShiftParams};
use super::sampling::segments;
use crate::engine::Tensor;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Which training set a frame comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetTag {
    Emotion,
    Personality,
}

impl DatasetTag {
    /// Class index used by the dataset classifier.
    pub fn index(self) -> usize {
        match self {
            DatasetTag::Emotion => 0,
            DatasetTag::Personality => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetTag::Emotion => "emotion",
            DatasetTag::Personality => "personality",
        }
    }
}

/// One rendered frame with its emotion coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    /// `[1,S,S]` grayscale in `[0,1]`.
    pub image: Tensor,
    pub arousal: f64,
    pub valence: f64,
    pub tag: DatasetTag,
}

/// A clip with one latent emotion and video-level trait labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticVideo {
    pub frames: Vec<SyntheticSample>,
    pub traits: [f64; 5],
    /// `(arousal, valence)` the frames were jittered around.
    pub latent: (f64, f64),
    /// `K` contiguous, near-equal index ranges covering the frames.
    pub segments: Vec<Range<usize>>,
}

/// Parameters of [`gen_personality_set`] beyond the count and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoParams {
    pub frames_per_video: usize,
    pub k: usize,
    /// Per-frame standard deviation of the emotion jitter around the latent.
    pub frame_jitter: f64,
    pub latent_range: f64,
}

fn uniform_label<R: Rng + ?Sized>(range: f64, rng: &mut R) -> f64 {
    if range == 0.0 {
        0.0
    } else {
        rng.random_range(-range..=range)
    }
}

/// Frame-level emotion set: labels uniform on `[-range, range]^2`.
pub fn gen_emotion_set(
    n: usize,
    seed: u64,
    latent_range: f64,
    shift: &ShiftParams,
    render: &RenderParams,
) -> Vec<SyntheticSample> {
    let mut rng = seed::rng(seed, 0);
    (0..n)
        .map(|_| {
            let arousal = uniform_label(latent_range, &mut rng);
            let valence = uniform_label(latent_range, &mut rng);
            SyntheticSample {
                image: render_frame(arousal, valence, shift, render, &mut rng),
                arousal,
                valence,
                tag: DatasetTag::Emotion,
            }
        })
        .collect()
}

/// Video-level personality set whose traits follow the planted map of each
/// video's latent emotion.
pub fn gen_personality_set(
    n_videos: usize,
    seed: u64,
    video: &VideoParams,
    rel: &PlantedRelationship,
    shift: &ShiftParams,
    render: &RenderParams,
) -> Result<Vec<SyntheticVideo>> {
    if video.k == 0 || video.frames_per_video < video.k {
        return Err(Error::config(
            "frames_per_video",
            format!(
                "{} frames cannot hold {} segments",
                video.frames_per_video, video.k
            ),
        ));
    }
    let mut rng = seed::rng(seed, 0);
    let jitter = (video.frame_jitter > 0.0)
        .then(|| Normal::new(0.0, video.frame_jitter).expect("finite jitter"));
    let segs = segments(video.frames_per_video, video.k)?;
    Ok((0..n_videos)
        .map(|_| {
            let a = uniform_label(video.latent_range, &mut rng);
            let v = uniform_label(video.latent_range, &mut rng);
            let traits = rel.sample(a, v, &mut rng);
            let frames = (0..video.frames_per_video)
                .map(|_| {
                    let (fa, fv) = match &jitter {
                        Some(j) => (
                            (a + j.sample(&mut rng)).clamp(-1.0, 1.0),
                            (v + j.sample(&mut rng)).clamp(-1.0, 1.0),
                        ),
                        None => (a, v),
                    };
                    SyntheticSample {
                        image: render_frame(fa, fv, shift, render, &mut rng),
                        arousal: fa,
                        valence: fv,
                        tag: DatasetTag::Personality,
                    }
                })
                .collect();
            SyntheticVideo {
                frames,
                traits,
                latent: (a, v),
                segments: segs.clone(),
            }
        })
        .collect())
}

/// Everything needed to regenerate a dataset directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub seed: u64,
    pub render: RenderParams,
    pub emotion_shift: ShiftParams,
    pub personality_shift: ShiftParams,
    pub planted: PlantedRelationship,
    pub video: VideoParams,
    pub n_emotion_train: usize,
    pub n_emotion_eval: usize,
    pub n_videos_train: usize,
    pub n_videos_eval: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            seed: 0,
            render: RenderParams::default(),
            emotion_shift: ShiftParams::emotion_default(),
            personality_shift: ShiftParams::personality_default(),
            planted: PlantedRelationship::default(),
            video: VideoParams {
                frames_per_video: 20,
                k: 10,
                frame_jitter: 0.1,
                latent_range: 0.8,
            },
            n_emotion_train: 2000,
            n_emotion_eval: 400,
            n_videos_train: 200,
            n_videos_eval: 50,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.render.image_size),
            ("k", self.video.k),
            ("n_emotion_train", self.n_emotion_train),
            ("n_emotion_eval", self.n_emotion_eval),
            ("n_videos_train", self.n_videos_train),
            ("n_videos_eval", self.n_videos_eval),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if self.render.image_size < 3 {
            return Err(Error::config("image_size", "must be at least 3"));
        }
        if self.video.frames_per_video < self.video.k {
            return Err(Error::config(
                "frames_per_video",
                format!(
                    "{} frames per video is fewer than k = {}",
                    self.video.frames_per_video, self.video.k
                ),
            ));
        }
        if !(0.0..=1.0).contains(&self.video.latent_range) {
            return Err(Error::config("latent_range", "must lie in [0, 1]"));
        }
        let nonneg = [
            ("frame_jitter", self.video.frame_jitter),
            ("noise_sigma", self.planted.noise_sigma),
            ("pixel_noise", self.render.pixel_noise),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(key, "must be finite and non-negative"));
            }
        }
        for (key, s) in [
            ("emotion.ring_period", &self.emotion_shift),
            ("personality.ring_period", &self.personality_shift),
        ] {
            if !(s.ring_period > 0.0) {
                return Err(Error::config(key, "must be positive"));
            }
        }
        Ok(())
    }
}

/// Train and held-out splits of both datasets.
#[derive(Clone, Debug)]
pub struct Datasets {
    pub config: DataConfig,
    pub emotion_train: Vec<SyntheticSample>,
    pub emotion_eval: Vec<SyntheticSample>,
    pub personality_train: Vec<SyntheticVideo>,
    pub personality_eval: Vec<SyntheticVideo>,
}

impl Datasets {
    /// Generates all four splits. Each split uses its own derived seed, so
    /// train and held-out data never share random draws.
    pub fn generate(config: &DataConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let emotion = |n, s| gen_emotion_set(n, seed::derive(c.seed, s), c.video.latent_range, &c.emotion_shift, &c.render);
        let personality = |n, s| {
            gen_personality_set(n, seed::derive(c.seed, s), &c.video, &c.planted, &c.personality_shift, &c.render)
        };
        Ok(Datasets {
            config: config.clone(),
            emotion_train: emotion(c.n_emotion_train, stream::EMOTION_TRAIN),
            emotion_eval: emotion(c.n_emotion_eval, stream::EMOTION_EVAL),
            personality_train: personality(c.n_videos_train, stream::PERSONALITY_TRAIN)?,
            personality_eval: personality(c.n_videos_eval, stream::PERSONALITY_EVAL)?,
        })
    }

    pub fn image_size(&self) -> usize {
        self.config.render.image_size
    }
}
