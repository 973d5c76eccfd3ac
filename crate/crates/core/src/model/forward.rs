use super::config::{ArchitectureConfig, Consensus};
use super::params::{Dense, ModelParams, ModelVars};
use crate::data::Batch;
use crate::engine::{activate, residual_unit, sigmoid, Activation, Graph, Tensor, Var};
use crate::error::{Error, Result};

fn act(slope: Option<Var>) -> Activation {
    slope.map_or(Activation::Relu, Activation::Prelu)
}

fn dense(g: &mut Graph, x: Var, d: &Dense<Var>) -> Result<Var> {
    g.linear(x, d.weight, d.bias)
}

/// Backbone: `[N,1,S,S]` frames to `[N,feature_dim]` embeddings.
pub fn fem_forward(g: &mut Graph, images: Var, p: &ModelVars, arch: &ArchitectureConfig) -> Result<Var> {
    let s = g.value(images).shape();
    let size = arch.input_size;
    if s.len() != 4 || s[1] != 1 || s[2] != size || s[3] != size {
        return Err(Error::dim(
            "fem_forward",
            format!("expected [N,1,{size},{size}] frames, got {s:?}"),
        ));
    }
    let mut x = images;
    for block in &p.fem.blocks {
        x = g.conv2d(x, block.down, 2)?;
        x = activate(g, x, act(block.down_slope))?;
        for u in &block.units {
            x = residual_unit(g, x, (u.conv_a, act(u.slope_a)), (u.conv_b, act(u.slope_b)))?;
        }
    }
    let x = g.flatten(x)?;
    dense(g, x, &p.fem.embed)
}

fn pool(g: &mut Graph, x: Var, k: usize, consensus: Consensus) -> Result<Var> {
    if k == 0 {
        return Err(Error::Contract("consensus over zero frames".into()));
    }
    match consensus {
        Consensus::Average => g.group_mean(x, k),
        Consensus::Max => g.group_max(x, k),
    }
}

/// Personality branch for consecutive groups of `k` frames, one group per
/// video. Returns `(traits [V,5], per_frame_logits [V*k,5])`.
pub fn pam_forward(
    g: &mut Graph,
    features: Var,
    k: usize,
    p: &ModelVars,
    arch: &ArchitectureConfig,
) -> Result<(Var, Var)> {
    if g.value(features).shape().first() == Some(&0) || k == 0 {
        return Err(Error::Contract("personality branch needs at least one frame".into()));
    }
    let logits = dense(g, features, &p.pam)?;
    let traits = if arch.consensus_post_squash {
        let scores = g.sigmoid(logits)?;
        pool(g, scores, k, arch.consensus)?
    } else {
        let pooled = pool(g, logits, k, arch.consensus)?;
        g.sigmoid(pooled)?
    };
    Ok((traits, logits))
}

/// Emotion branch: `(arousal, valence)` in `(-1,1)` per frame.
pub fn eam_forward(g: &mut Graph, features: Var, p: &ModelVars) -> Result<Var> {
    let z = dense(g, features, &p.eam)?;
    g.tanh(z)
}

/// Relationship branch: pooled per-frame emotion scores of each group of
/// `k` frames to five traits.
pub fn ram_forward(g: &mut Graph, emotions: Var, k: usize, p: &ModelVars, consensus: Consensus) -> Result<Var> {
    let pooled = pool(g, emotions, k, consensus)?;
    let h = dense(g, pooled, &p.ram.hidden)?;
    let h = g.relu(h)?;
    let out = dense(g, h, &p.ram.out)?;
    g.sigmoid(out)
}

pub fn discriminator_logits(g: &mut Graph, features: Var, p: &ModelVars) -> Result<Var> {
    dense(g, features, &p.discriminator)
}

/// Per-frame dataset distribution, columns ordered emotion, personality.
pub fn discriminator_forward(g: &mut Graph, features: Var, p: &ModelVars) -> Result<Var> {
    let z = discriminator_logits(g, features, p)?;
    g.softmax(z)
}

/// Pools rows of `[K,D]` logits into one `D`-vector.
pub fn consensus_variant(logits: &Tensor, variant: Consensus) -> Result<Vec<f64>> {
    if logits.ndim() != 2 || logits.rows() == 0 {
        return Err(Error::Contract("consensus needs a non-empty [K,D] tensor".into()));
    }
    let d = logits.row_len();
    let k = logits.rows();
    Ok((0..d)
        .map(|j| {
            let col = (0..k).map(|i| logits.row(i)[j]);
            match variant {
                Consensus::Average => col.sum::<f64>() / k as f64,
                Consensus::Max => col.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect())
}

/// Weighted average of the personality and relationship predictions.
pub fn fuse_pam_ram(pam: &[f64], ram: &[f64], w_pam: f64, w_ram: f64) -> Result<Vec<f64>> {
    if !(w_pam > 0.0 && w_ram > 0.0) {
        return Err(Error::Contract(format!(
            "fusion weights must be positive, got {w_pam} and {w_ram}"
        )));
    }
    if pam.len() != ram.len() {
        return Err(Error::dim("fuse_pam_ram", format!("{} vs {} traits", pam.len(), ram.len())));
    }
    let total = w_pam + w_ram;
    Ok(pam.iter().zip(ram).map(|(p, r)| (w_pam * p + w_ram * r) / total).collect())
}

/// Every head evaluated on one mixed batch.
#[derive(Clone, Copy, Debug)]
pub struct BatchOutputs {
    /// `[N,feature_dim]`, emotion frames first.
    pub features: Var,
    /// EAM outputs of the emotion frames, `[n_emotion,2]`.
    pub emotion: Option<Var>,
    /// EAM outputs of the personality frames, `[n_videos*k,2]`.
    pub video_emotion: Option<Var>,
    pub pam_traits: Option<Var>,
}

pub fn forward_batch(
    g: &mut Graph,
    p: &ModelVars,
    arch: &ArchitectureConfig,
    batch: &Batch,
) -> Result<BatchOutputs> {
    let images = g.constant(batch.images.clone());
    let features = fem_forward(g, images, p, arch)?;
    let n = batch.len();
    let emotion = if batch.n_emotion > 0 {
        let f = g.slice_rows(features, 0, batch.n_emotion)?;
        Some(eam_forward(g, f, p)?)
    } else {
        None
    };
    let (video_emotion, pam_traits) = if batch.n_videos > 0 {
        let f = g.slice_rows(features, batch.n_emotion, n)?;
        let (traits, _) = pam_forward(g, f, batch.k, p, arch)?;
        (Some(eam_forward(g, f, p)?), Some(traits))
    } else {
        (None, None)
    };
    Ok(BatchOutputs {
        features,
        emotion,
        video_emotion,
        pam_traits,
    })
}

/// Personality predictions for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoPrediction {
    pub pam: Vec<f64>,
    pub ram: Vec<f64>,
}

/// Parameters plus architecture, for inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: ArchitectureConfig,
    pub params: ModelParams,
}

/// Frames per forward pass during inference, bounding im2col memory.
const CHUNK: usize = 256;

impl Model {
    pub fn new(arch: ArchitectureConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = ModelParams::init(&arch, seed);
        Ok(Model { arch, params })
    }

    fn chunked(&self, images: &Tensor, f: impl Fn(&mut Graph, &ModelVars, Var) -> Result<Var>) -> Result<Tensor> {
        let n = images.rows();
        let mut parts = Vec::new();
        for start in (0..n).step_by(CHUNK) {
            let mut g = Graph::new();
            let vars = self.params.bind(&mut g, &[]);
            let x = g.constant(images.slice_rows(start, (start + CHUNK).min(n))?);
            let feats = fem_forward(&mut g, x, &vars, &self.arch)?;
            let out = f(&mut g, &vars, feats)?;
            parts.push(g.value(out).clone());
        }
        let refs: Vec<&Tensor> = parts.iter().collect();
        Tensor::concat_rows(&refs)
    }

    /// Frozen FEM embeddings, `[N,feature_dim]`.
    pub fn features(&self, images: &Tensor) -> Result<Tensor> {
        self.chunked(images, |_, _, f| Ok(f))
    }

    /// `(arousal, valence)` per frame.
    pub fn emotion(&self, images: &Tensor) -> Result<Tensor> {
        self.chunked(images, |g, p, f| eam_forward(g, f, p))
    }

    /// Dataset-classifier probabilities per frame.
    pub fn discriminator(&self, images: &Tensor) -> Result<Tensor> {
        self.chunked(images, |g, p, f| discriminator_forward(g, f, p))
    }

    /// PAM and RAM traits from the `[K,1,S,S]` frames of one video.
    pub fn personality(&self, frames: &Tensor) -> Result<VideoPrediction> {
        let k = frames.rows();
        if k == 0 {
            return Err(Error::Contract("video without frames".into()));
        }
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, &[]);
        let x = g.constant(frames.clone());
        let feats = fem_forward(&mut g, x, &vars, &self.arch)?;
        let (pam, _) = pam_forward(&mut g, feats, k, &vars, &self.arch)?;
        let e = eam_forward(&mut g, feats, &vars)?;
        let ram = ram_forward(&mut g, e, k, &vars, self.arch.consensus)?;
        Ok(VideoPrediction {
            pam: g.value(pam).data().to_vec(),
            ram: g.value(ram).data().to_vec(),
        })
    }

    /// PAM and RAM traits for `V` videos whose `k` frames each are stored
    /// consecutively in `frames [V*k,1,S,S]`. Returns two `[V,5]` tensors.
    pub fn personality_batch(&self, frames: &Tensor, k: usize) -> Result<(Tensor, Tensor)> {
        if k == 0 || frames.rows() % k != 0 {
            return Err(Error::Contract(format!("{} frames do not form groups of {k}", frames.rows())));
        }
        let per_chunk = (CHUNK / k).max(1) * k;
        let (mut pams, mut rams) = (Vec::new(), Vec::new());
        for start in (0..frames.rows()).step_by(per_chunk) {
            let mut g = Graph::new();
            let vars = self.params.bind(&mut g, &[]);
            let x = g.constant(frames.slice_rows(start, (start + per_chunk).min(frames.rows()))?);
            let feats = fem_forward(&mut g, x, &vars, &self.arch)?;
            let (pam, _) = pam_forward(&mut g, feats, k, &vars, &self.arch)?;
            let e = eam_forward(&mut g, feats, &vars)?;
            let ram = ram_forward(&mut g, e, k, &vars, self.arch.consensus)?;
            pams.push(g.value(pam).clone());
            rams.push(g.value(ram).clone());
        }
        let cat = |v: &[Tensor]| Tensor::concat_rows(&v.iter().collect::<Vec<_>>());
        Ok((cat(&pams)?, cat(&rams)?))
    }

    /// RAM traits from explicit per-frame emotion scores.
    pub fn ram_from_emotions(&self, emotions: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, &[]);
        let e = g.constant(emotions.clone());
        let r = ram_forward(&mut g, e, emotions.rows(), &vars, self.arch.consensus)?;
        Ok(g.value(r).data().to_vec())
    }
}

/// Squashes pooled logits, the scalar counterpart of [`pam_forward`].
pub fn traits_from_logits(logits: &Tensor, consensus: Consensus) -> Result<Vec<f64>> {
    Ok(consensus_variant(logits, consensus)?.into_iter().map(sigmoid).collect())
}
