//! Objective terms and their weighted total.

use serde::{Deserialize, Serialize};

use crate::data::{Batch, DatasetTag};
use crate::engine::{Graph, SmoothL1Variant, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{forward_batch, ram_forward, ArchitectureConfig, BatchOutputs, Dense, ModelVars};

/// How per-sample losses are combined within a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Average over samples (videos or frames); label dimensions are summed.
    #[default]
    Mean,
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Personality branch.
    pub lambda1: f64,
    /// Emotion branch.
    pub lambda2: f64,
    /// Dataset classifier.
    pub lambda3: f64,
    /// Adversarial confusion.
    pub lambda4: f64,
    /// Relationship branch.
    pub lambda5: f64,
    pub margin: f64,
    pub variant: SmoothL1Variant,
    pub reduction: Reduction,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 0.1,
            lambda4: 0.1,
            lambda5: 0.1,
            margin: 0.05,
            variant: SmoothL1Variant::Continuous,
            reduction: Reduction::Mean,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
            ("lambda4", self.lambda4),
            ("lambda5", self.lambda5),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::config("margin", format!("must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// Scalar smooth-l1 of one residual.
pub fn smooth_l1(x: f64, margin: f64, variant: SmoothL1Variant) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::Contract(format!("smooth-l1 margin must be positive, got {margin}")));
    }
    Ok(variant.value(x, margin))
}

fn reduce(g: &mut Graph, per_sample_total: Var, samples: usize, reduction: Reduction) -> Result<Var> {
    match reduction {
        Reduction::Sum => Ok(per_sample_total),
        Reduction::Mean => g.scale(per_sample_total, 1.0 / samples as f64),
    }
}

/// Smooth-l1 regression loss of `pred [n,d]` against `target [n,d]`,
/// summed over label dimensions.
pub fn regression_loss(g: &mut Graph, pred: Var, target: &Tensor, w: &LossWeights) -> Result<Var> {
    let ps = g.value(pred).shape().to_vec();
    if ps.first() == Some(&0) || ps.is_empty() {
        return Err(Error::Contract("loss over an empty batch".into()));
    }
    if ps != target.shape() {
        return Err(Error::dim(
            "regression_loss",
            format!("prediction {ps:?} vs target {:?}", target.shape()),
        ));
    }
    let t = g.constant(target.clone());
    let diff = g.sub(pred, t)?;
    let per = g.smooth_l1(diff, w.margin, w.variant)?;
    let total = g.sum(per)?;
    reduce(g, total, ps[0], w.reduction)
}

/// Video-level personality loss on consensus predictions `[V,5]`.
pub fn personality_loss(g: &mut Graph, traits: Var, labels: &Tensor, w: &LossWeights) -> Result<Var> {
    regression_loss(g, traits, labels, w)
}

/// Frame-level emotion loss on `[N,2]` predictions.
pub fn emotion_loss(g: &mut Graph, emotion: Var, labels: &Tensor, w: &LossWeights) -> Result<Var> {
    regression_loss(g, emotion, labels, w)
}

fn one_hot(tags: &[DatasetTag]) -> Tensor {
    let mut data = vec![0.0; tags.len() * 2];
    for (i, t) in tags.iter().enumerate() {
        data[i * 2 + t.index()] = 1.0;
    }
    Tensor::new(vec![tags.len(), 2], data).expect("two classes per tag")
}

fn check_rows(g: &Graph, features: Var, n: usize) -> Result<()> {
    let s = g.value(features).shape();
    if s.len() != 2 || s[0] != n || n == 0 {
        return Err(Error::dim("dataset_classifier", format!("features {s:?} for {n} tags")));
    }
    Ok(())
}

/// Negative log-likelihood of each frame's dataset tag. Features are
/// detached, so only the classifier receives a gradient.
pub fn discriminator_loss(
    g: &mut Graph,
    features: Var,
    tags: &[DatasetTag],
    disc: &Dense<Var>,
    reduction: Reduction,
) -> Result<Var> {
    check_rows(g, features, tags.len())?;
    let f = g.detach(features);
    let z = g.linear(f, disc.weight, disc.bias)?;
    let logp = g.log_softmax(z)?;
    let mask = g.constant(one_hot(tags));
    let picked = g.mul(logp, mask)?;
    let total = g.sum(picked)?;
    let nll = g.scale(total, -1.0)?;
    reduce(g, nll, tags.len(), reduction)
}

/// Cross-entropy between the uniform distribution and the classifier
/// output, per frame. The classifier enters as constants.
pub fn adversarial_confusion_loss(
    g: &mut Graph,
    features: Var,
    disc: &Dense<Tensor>,
    reduction: Reduction,
) -> Result<Var> {
    let n = g.value(features).shape().first().copied().unwrap_or(0);
    check_rows(g, features, n)?;
    let w = g.constant(disc.weight.clone());
    let b = g.constant(disc.bias.clone());
    let z = g.linear(features, w, b)?;
    let logp = g.log_softmax(z)?;
    let total = g.sum(logp)?;
    let ce = g.scale(total, -0.5)?;
    reduce(g, ce, n, reduction)
}

/// Relationship-branch loss on the EAM outputs `[V*k,2]` of the
/// personality frames. With `stop_gradient` only the RAM head learns.
#[allow(clippy::too_many_arguments)]
pub fn ram_loss(
    g: &mut Graph,
    video_emotion: Var,
    k: usize,
    p: &ModelVars,
    arch: &ArchitectureConfig,
    labels: &Tensor,
    w: &LossWeights,
    stop_gradient: bool,
) -> Result<Var> {
    let e = if stop_gradient { g.detach(video_emotion) } else { video_emotion };
    let traits = ram_forward(g, e, k, p, arch.consensus)?;
    regression_loss(g, traits, labels, w)
}

/// Unweighted values of the five terms; absent terms are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub personality: f64,
    pub emotion: f64,
    pub discriminator: f64,
    pub adversarial: f64,
    pub ram: f64,
}

impl LossTerms {
    pub fn weighted(&self, w: &LossWeights) -> f64 {
        w.lambda1 * self.personality
            + w.lambda2 * self.emotion
            + w.lambda3 * self.discriminator
            + w.lambda4 * self.adversarial
            + w.lambda5 * self.ram
    }

    pub fn is_finite(&self) -> bool {
        [self.personality, self.emotion, self.discriminator, self.adversarial, self.ram]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Which terms participate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMask {
    pub personality: bool,
    pub emotion: bool,
    pub coherence: bool,
    pub ram: bool,
    pub ram_stop_gradient: bool,
}

impl Default for TermMask {
    fn default() -> Self {
        TermMask {
            personality: true,
            emotion: true,
            coherence: true,
            ram: true,
            ram_stop_gradient: false,
        }
    }
}

/// Graph nodes of the individual terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct TermVars {
    pub personality: Option<Var>,
    pub emotion: Option<Var>,
    pub discriminator: Option<Var>,
    pub adversarial: Option<Var>,
    pub ram: Option<Var>,
}

impl TermVars {
    pub fn values(&self, g: &Graph) -> LossTerms {
        let v = |x: Option<Var>| x.map_or(0.0, |x| g.value(x).item());
        LossTerms {
            personality: v(self.personality),
            emotion: v(self.emotion),
            discriminator: v(self.discriminator),
            adversarial: v(self.adversarial),
            ram: v(self.ram),
        }
    }
}

/// Adds `sum(lambda_i * term_i)` over the present terms; zero if none.
pub fn weighted_sum(g: &mut Graph, terms: &[(f64, Option<Var>)]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for &(lambda, term) in terms {
        if let Some(t) = term {
            let s = g.scale(t, lambda)?;
            acc = Some(match acc {
                Some(a) => g.add(a, s)?,
                None => s,
            });
        }
    }
    Ok(match acc {
        Some(a) => a,
        None => g.constant(Tensor::scalar(0.0)),
    })
}

/// The task terms (personality, emotion, RAM) on an already evaluated
/// batch.
pub fn task_terms(
    g: &mut Graph,
    p: &ModelVars,
    arch: &ArchitectureConfig,
    batch: &Batch,
    out: &BatchOutputs,
    w: &LossWeights,
    mask: &TermMask,
) -> Result<TermVars> {
    let mut t = TermVars::default();
    if mask.personality {
        if let (Some(pred), Some(labels)) = (out.pam_traits, &batch.traits) {
            t.personality = Some(personality_loss(g, pred, labels, w)?);
        }
    }
    if mask.emotion {
        if let (Some(pred), Some(labels)) = (out.emotion, &batch.emotion_labels) {
            t.emotion = Some(emotion_loss(g, pred, labels, w)?);
        }
    }
    if mask.ram {
        if let (Some(e), Some(labels)) = (out.video_emotion, &batch.traits) {
            t.ram = Some(ram_loss(g, e, batch.k, p, arch, labels, w, mask.ram_stop_gradient)?);
        }
    }
    Ok(t)
}

/// Whether the batch mixes both datasets, the precondition for the
/// coherence terms.
pub fn coherence_applies(batch: &Batch, mask: &TermMask) -> bool {
    mask.coherence && batch.n_emotion > 0 && batch.n_videos > 0
}

/// The weighted total and its nodes.
pub struct TotalLoss {
    pub total: Var,
    pub terms: TermVars,
    pub outputs: BatchOutputs,
}

/// All five terms at the current parameters. The dataset classifier sees
/// detached features and the adversarial term sees the classifier as
/// constants, so each parameter group receives the gradient of the
/// objective it is trained on.
pub fn total_loss(
    g: &mut Graph,
    p: &ModelVars,
    arch: &ArchitectureConfig,
    batch: &Batch,
    w: &LossWeights,
    mask: &TermMask,
) -> Result<TotalLoss> {
    let out = forward_batch(g, p, arch, batch)?;
    let mut terms = task_terms(g, p, arch, batch, &out, w, mask)?;
    if coherence_applies(batch, mask) {
        let tags = batch.tags();
        terms.discriminator = Some(discriminator_loss(g, out.features, &tags, &p.discriminator, w.reduction)?);
        let disc = Dense {
            weight: g.value(p.discriminator.weight).clone(),
            bias: g.value(p.discriminator.bias).clone(),
        };
        terms.adversarial = Some(adversarial_confusion_loss(g, out.features, &disc, w.reduction)?);
    }
    let total = weighted_sum(
        g,
        &[
            (w.lambda1, terms.personality),
            (w.lambda2, terms.emotion),
            (w.lambda3, terms.discriminator),
            (w.lambda4, terms.adversarial),
            (w.lambda5, terms.ram),
        ],
    )?;
    Ok(TotalLoss {
        total,
        terms,
        outputs: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Model, ParamGroup, Preset};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LN2: f64 = std::f64::consts::LN_2;

    fn sum_weights() -> LossWeights {
        LossWeights {
            reduction: Reduction::Sum,
            ..LossWeights::default()
        }
    }

    fn tiny_arch() -> ArchitectureConfig {
        ArchitectureConfig {
            preset: Preset::Custom,
            input_size: 8,
            widths: vec![2, 3],
            residual_units: vec![1, 0],
            feature_dim: 6,
            ram_hidden: 4,
            ..ArchitectureConfig::micro()
        }
    }

    fn tiny_batch(seed: u64) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Batch {
            images: Tensor::uniform(&[3 + 2 * 2, 1, 8, 8], 0.0, 1.0, &mut rng),
            n_emotion: 3,
            n_videos: 2,
            k: 2,
            emotion_labels: Some(Tensor::uniform(&[3, 2], -0.8, 0.8, &mut rng)),
            traits: Some(Tensor::uniform(&[2, 5], 0.1, 0.9, &mut rng)),
        }
    }

    fn disc(w: [[f64; 2]; 1], b: [f64; 2]) -> Dense<Tensor> {
        Dense {
            weight: Tensor::new(vec![1, 2], w.concat()).unwrap(),
            bias: Tensor::new(vec![2], b.to_vec()).unwrap(),
        }
    }

    /// Classifier logits equal to the bias when the one feature is zero.
    fn classifier_loss(bias: [f64; 2], tags: &[DatasetTag]) -> f64 {
        let mut g = Graph::new();
        let d = disc([[0.0, 0.0]], bias);
        let dv = Dense {
            weight: g.param(d.weight),
            bias: g.param(d.bias),
        };
        let f = g.constant(Tensor::zeros(&[tags.len(), 1]));
        let l = discriminator_loss(&mut g, f, tags, &dv, Reduction::Sum).unwrap();
        g.value(l).item()
    }

    fn confusion(bias: [f64; 2], n: usize) -> f64 {
        let mut g = Graph::new();
        let f = g.constant(Tensor::zeros(&[n, 1]));
        let l = adversarial_confusion_loss(&mut g, f, &disc([[0.0, 0.0]], bias), Reduction::Sum).unwrap();
        g.value(l).item()
    }

    #[test]
    fn defaults() {
        let w = LossWeights::default();
        assert_eq!((w.lambda1, w.lambda2), (1.0, 1.0));
        assert_eq!((w.lambda3, w.lambda4, w.lambda5), (0.1, 0.1, 0.1));
        assert_eq!(w.margin, 0.05);
        assert_eq!(w.variant, SmoothL1Variant::Continuous);
    }

    #[test]
    fn smooth_l1_examples() {
        use SmoothL1Variant::*;
        assert_eq!(smooth_l1(0.0, 0.05, Continuous).unwrap(), 0.0);
        assert_eq!(smooth_l1(0.0, 0.05, FixedOffset).unwrap(), 0.0);
        let inside = 0.05f64 * 0.05 / (2.0 * 0.05);
        assert!((smooth_l1(0.05, 0.05, Continuous).unwrap() - 0.025).abs() < 1e-12);
        assert!((inside - (0.05 - 0.025)).abs() < 1e-12);
        assert!((smooth_l1(0.06, 0.05, FixedOffset).unwrap() - (-0.44)).abs() < 1e-12);
        assert!(matches!(smooth_l1(1.0, 0.0, Continuous), Err(Error::Contract(_))));
        assert!(matches!(smooth_l1(1.0, -1.0, FixedOffset), Err(Error::Contract(_))));
    }

    #[test]
    fn continuous_variant_is_continuous_at_the_knee() {
        let m = 0.05;
        let v = SmoothL1Variant::Continuous;
        for s in [1.0, -1.0] {
            let below = smooth_l1(s * m * (1.0 - 1e-15), m, v).unwrap();
            let at = smooth_l1(s * m, m, v).unwrap();
            assert!((below - at).abs() < 1e-12);
            assert!((at - (m - m / 2.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn regression_examples() {
        let w = sum_weights();
        let mut g = Graph::new();
        let labels = Tensor::new(vec![1, 5], vec![0.5, 0.4, 0.3, 0.2, 0.1]).unwrap();
        let exact = g.constant(labels.clone());
        let l = personality_loss(&mut g, exact, &labels, &w).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let off = g.constant(Tensor::new(vec![1, 5], vec![0.52, 0.4, 0.3, 0.2, 0.1]).unwrap());
        let l = personality_loss(&mut g, off, &labels, &w).unwrap();
        assert!((g.value(l).item() - 0.004).abs() < 1e-12);
        let e_labels = Tensor::new(vec![1, 2], vec![0.3, -0.2]).unwrap();
        let e = g.constant(Tensor::new(vec![1, 2], vec![0.4, -0.2]).unwrap());
        let l = emotion_loss(&mut g, e, &e_labels, &w).unwrap();
        assert!((g.value(l).item() - 0.075).abs() < 1e-12);
        let empty = Tensor::zeros(&[1, 5]).slice_rows(0, 0);
        assert!(empty.is_err() || {
            let v = g.constant(empty.unwrap());
            personality_loss(&mut g, v, &labels, &w).is_err()
        });
    }

    #[test]
    fn mean_reduction_divides_by_samples() {
        let mut g = Graph::new();
        let labels = Tensor::zeros(&[4, 2]);
        let p = g.constant(Tensor::full(&[4, 2], 0.1));
        let s = emotion_loss(&mut g, p, &labels, &sum_weights()).unwrap();
        let m = emotion_loss(&mut g, p, &labels, &LossWeights::default()).unwrap();
        assert!((g.value(s).item() / 4.0 - g.value(m).item()).abs() < 1e-15);
    }

    #[test]
    fn classifier_examples() {
        let tags = [DatasetTag::Emotion, DatasetTag::Personality, DatasetTag::Emotion, DatasetTag::Personality];
        assert!((classifier_loss([0.0, 0.0], &tags) - 4.0 * LN2).abs() < 1e-12);
        assert!(classifier_loss([800.0, -800.0], &[DatasetTag::Emotion]).abs() < 1e-12);
        let logit = (1.0f64 / 9.0).ln();
        let wrong = classifier_loss([logit, 0.0], &[DatasetTag::Emotion]);
        assert!((wrong - (-(0.1f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn confusion_examples() {
        assert!((confusion([0.0, 0.0], 1) - LN2).abs() < 1e-12);
        assert!((confusion([0.0, 0.0], 3) - 3.0 * LN2).abs() < 1e-12);
        let l = 9.0f64.ln();
        let expected = -0.5 * (0.9f64.ln() + 0.1f64.ln());
        assert!((confusion([l, 0.0], 1) - expected).abs() < 1e-12);
        assert!((confusion([0.0, l], 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn classifier_loss_only_reaches_the_classifier() {
        let m = Model::new(tiny_arch(), 3).unwrap();
        let mut g = Graph::new();
        let vars = m.params.bind(&mut g, &ParamGroup::ALL);
        let t = total_loss(&mut g, &vars, &m.arch, &tiny_batch(4), &LossWeights::default(), &TermMask::default()).unwrap();
        g.backward(t.terms.discriminator.unwrap()).unwrap();
        for (name, grp, v) in vars.leaves() {
            let s: f64 = g.grad(*v).unwrap().iter().map(|a| a.abs()).sum();
            if grp == ParamGroup::Discriminator {
                assert!(s > 0.0, "{name}");
            } else {
                assert_eq!(s, 0.0, "{name}");
            }
        }
    }

    #[test]
    fn confusion_loss_never_reaches_the_classifier() {
        let m = Model::new(tiny_arch(), 3).unwrap();
        let mut g = Graph::new();
        let vars = m.params.bind(&mut g, &ParamGroup::ALL);
        let t = total_loss(&mut g, &vars, &m.arch, &tiny_batch(4), &LossWeights::default(), &TermMask::default()).unwrap();
        g.backward(t.terms.adversarial.unwrap()).unwrap();
        for (name, grp, v) in vars.leaves() {
            let s: f64 = g.grad(*v).unwrap().iter().map(|a| a.abs()).sum();
            if grp == ParamGroup::Discriminator {
                assert_eq!(s, 0.0, "{name}");
            }
            if name.starts_with("fem.embed") {
                assert!(s > 0.0);
            }
        }
    }

    #[test]
    fn stopped_ram_gradient_leaves_backbone_untouched() {
        let m = Model::new(tiny_arch(), 3).unwrap();
        for (stop, expect_zero) in [(true, true), (false, false)] {
            let mut g = Graph::new();
            let vars = m.params.bind(&mut g, &ParamGroup::ALL);
            let mask = TermMask {
                ram_stop_gradient: stop,
                ..TermMask::default()
            };
            let t = total_loss(&mut g, &vars, &m.arch, &tiny_batch(4), &LossWeights::default(), &mask).unwrap();
            g.backward(t.terms.ram.unwrap()).unwrap();
            let fem: f64 = vars
                .leaves()
                .into_iter()
                .filter(|(_, grp, _)| matches!(grp, ParamGroup::Fem | ParamGroup::Eam))
                .map(|(_, _, v)| g.grad(*v).unwrap().iter().map(|a| a.abs()).sum::<f64>())
                .sum();
            assert_eq!(fem == 0.0, expect_zero);
            assert!(g.grad(vars.ram.out.weight).unwrap().iter().any(|v| *v != 0.0));
        }
    }

    fn total_with(w: &LossWeights, seed: u64) -> (f64, LossTerms) {
        let m = Model::new(tiny_arch(), 3).unwrap();
        let mut g = Graph::new();
        let vars = m.params.bind(&mut g, &ParamGroup::ALL);
        let t = total_loss(&mut g, &vars, &m.arch, &tiny_batch(seed), w, &TermMask::default()).unwrap();
        (g.value(t.total).item(), t.terms.values(&g))
    }

    #[test]
    fn total_examples() {
        assert_eq!(total_with(&LossWeights::zero(), 1).0, 0.0);
        let two = LossWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            ..LossWeights::zero()
        };
        let (total, terms) = total_with(&two, 1);
        assert_eq!(total, terms.personality + terms.emotion);
    }

    /// Rebuilds each term on its own graph from the public pieces.
    #[test]
    fn total_matches_independent_terms() {
        let w = LossWeights::default();
        let (total, _) = total_with(&w, 9);
        let m = Model::new(tiny_arch(), 3).unwrap();
        let batch = tiny_batch(9);
        let term = |f: &dyn Fn(&mut Graph, &ModelVars, &BatchOutputs) -> Var| {
            let mut g = Graph::new();
            let vars = m.params.bind(&mut g, &[]);
            let out = forward_batch(&mut g, &vars, &m.arch, &batch).unwrap();
            let v = f(&mut g, &vars, &out);
            g.value(v).item()
        };
        let lp = term(&|g, _, o| personality_loss(g, o.pam_traits.unwrap(), batch.traits.as_ref().unwrap(), &w).unwrap());
        let le = term(&|g, _, o| emotion_loss(g, o.emotion.unwrap(), batch.emotion_labels.as_ref().unwrap(), &w).unwrap());
        let ld = term(&|g, p, o| discriminator_loss(g, o.features, &batch.tags(), &p.discriminator, w.reduction).unwrap());
        let la = term(&|g, _, o| adversarial_confusion_loss(g, o.features, &m.params.discriminator, w.reduction).unwrap());
        let lr = term(&|g, p, o| {
            ram_loss(g, o.video_emotion.unwrap(), batch.k, p, &m.arch, batch.traits.as_ref().unwrap(), &w, false).unwrap()
        });
        let hand = w.lambda1 * lp + w.lambda2 * le + w.lambda3 * ld + w.lambda4 * la + w.lambda5 * lr;
        assert!((total - hand).abs() < 1e-12, "{total} vs {hand}");
    }

    #[test]
    fn batch_losses_add_over_samples() {
        let w = sum_weights();
        let m = Model::new(tiny_arch(), 3).unwrap();
        let batch = tiny_batch(2);
        let mut g = Graph::new();
        let vars = m.params.bind(&mut g, &[]);
        let out = forward_batch(&mut g, &vars, &m.arch, &batch).unwrap();
        let traits = batch.traits.as_ref().unwrap();
        let whole = personality_loss(&mut g, out.pam_traits.unwrap(), traits, &w).unwrap();
        let whole_ram = ram_loss(&mut g, out.video_emotion.unwrap(), 2, &vars, &m.arch, traits, &w, false).unwrap();
        let (mut parts, mut ram_parts) = (0.0, 0.0);
        for v in 0..2 {
            let p = g.slice_rows(out.pam_traits.unwrap(), v, v + 1).unwrap();
            let l = personality_loss(&mut g, p, &traits.slice_rows(v, v + 1).unwrap(), &w).unwrap();
            parts += g.value(l).item();
            let e = g.slice_rows(out.video_emotion.unwrap(), 2 * v, 2 * v + 2).unwrap();
            let l = ram_loss(&mut g, e, 2, &vars, &m.arch, &traits.slice_rows(v, v + 1).unwrap(), &w, false).unwrap();
            ram_parts += g.value(l).item();
        }
        assert!((g.value(whole).item() - parts).abs() < 1e-12);
        assert!((g.value(whole_ram).item() - ram_parts).abs() < 1e-12);
        let labels = batch.emotion_labels.as_ref().unwrap();
        let whole = emotion_loss(&mut g, out.emotion.unwrap(), labels, &w).unwrap();
        let mut parts = 0.0;
        for i in 0..3 {
            let p = g.slice_rows(out.emotion.unwrap(), i, i + 1).unwrap();
            let l = emotion_loss(&mut g, p, &labels.slice_rows(i, i + 1).unwrap(), &w).unwrap();
            parts += g.value(l).item();
        }
        assert!((g.value(whole).item() - parts).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn continuous_smooth_l1_is_nonnegative_with_clamped_slope(x in -3.0f64..3.0, m in 0.01f64..1.0) {
            let v = SmoothL1Variant::Continuous;
            prop_assert!(smooth_l1(x, m, v).unwrap() >= 0.0);
            let h = 1e-7;
            let fd = (v.value(x + h, m) - v.value(x - h, m)) / (2.0 * h);
            prop_assert!((fd - v.derivative(x, m)).abs() < 1e-5);
            prop_assert!(v.derivative(x, m).abs() <= 1.0);
            if x.abs() >= m {
                prop_assert_eq!(v.derivative(x, m), x.signum());
            }
        }

        #[test]
        fn confusion_is_at_least_ln2(a in -20.0f64..20.0, b in -20.0f64..20.0) {
            let l = confusion([a, b], 1);
            prop_assert!(l >= LN2 - 1e-15);
            if (a - b).abs() > 1e-6 {
                prop_assert!(l > LN2);
            }
        }

        #[test]
        fn total_is_linear_in_the_weights(ls in prop::array::uniform5(0.0f64..2.0)) {
            let w = LossWeights {
                lambda1: ls[0],
                lambda2: ls[1],
                lambda3: ls[2],
                lambda4: ls[3],
                lambda5: ls[4],
                ..LossWeights::default()
            };
            let (total, terms) = total_with(&w, 5);
            prop_assert!((total - terms.weighted(&w)).abs() < 1e-12);
        }
    }
}
