use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{lr_at, TrainConfig};
use crate::data::Batch;
use crate::engine::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_confusion_loss, coherence_applies, discriminator_loss, task_terms, weighted_sum,
    LossTerms,
};
use crate::model::{forward_batch, ModelParams, ModelVars, ParamGroup};

/// Parameters, momentum buffers and the index of the next step.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    /// One velocity tensor per parameter, same layout as `params`.
    pub momentum: ModelParams,
    pub step: usize,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.arch.validate()?;
        let params = ModelParams::init(&config.arch, config.seed);
        let momentum = params.map(|_, _, t| Tensor::zeros(t.shape()));
        Ok(TrainState {
            params,
            momentum,
            step: 0,
        })
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub terms: LossTerms,
    /// Weighted sum of the five terms.
    pub total: f64,
    /// Gradient norm per group, from the update that trains the group.
    pub grad_norm: BTreeMap<String, f64>,
}

fn abort(step: usize, message: impl Into<String>, detail: impl Serialize) -> Error {
    Error::NumericalAbort {
        step,
        message: message.into(),
        diagnostic: serde_json::to_string(&detail).unwrap_or_default(),
    }
}

/// SGD with momentum on the leaves of `groups`, reading gradients from `g`:
/// `v = mu * v - lr * grad`, `w += v`. Returns gradient norms per group.
fn apply_update(
    g: &Graph,
    vars: &ModelVars,
    state: &mut TrainState,
    groups: &[ParamGroup],
    lr: f64,
    mu: f64,
) -> Result<BTreeMap<String, f64>> {
    let var_leaves = vars.leaves();
    let mut norms: BTreeMap<String, f64> = BTreeMap::new();
    let params = state.params.leaves_mut();
    let velocity = state.momentum.leaves_mut();
    for (((name, group, var), (_, _, w)), (_, _, v)) in var_leaves.into_iter().zip(params).zip(velocity) {
        if !groups.contains(&group) {
            continue;
        }
        let grad = g
            .grad(*var)
            .ok_or_else(|| Error::Contract(format!("{name} was bound without a gradient")))?;
        if grad.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        *norms.entry(group.as_str().to_string()).or_default() += grad.iter().map(|x| x * x).sum::<f64>();
        for ((wi, vi), gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(grad) {
            *vi = mu * *vi - lr * gi;
            *wi += *vi;
        }
    }
    norms.values_mut().for_each(|n| *n = n.sqrt());
    Ok(norms)
}

const MAIN_GROUPS: [ParamGroup; 4] = [ParamGroup::Fem, ParamGroup::Pam, ParamGroup::Eam, ParamGroup::Ram];

/// One optimization step in two sub-updates: the dataset classifier on
/// `lambda3 * L_D`, then every other group on the remaining terms with the
/// freshly updated classifier held constant.
pub fn train_step(state: &mut TrainState, batch: &Batch, config: &TrainConfig) -> Result<StepRecord> {
    train_step_observed(state, batch, config, |_| {})
}

/// [`train_step`] that shows the parameters between the two sub-updates.
pub(crate) fn train_step_observed(
    state: &mut TrainState,
    batch: &Batch,
    config: &TrainConfig,
    mut between: impl FnMut(&ModelParams),
) -> Result<StepRecord> {
    let step = state.step;
    let wrap = |e: Error| match e {
        Error::NonFinite(what) => abort(step, format!("non-finite {what}"), ()),
        other => other,
    };
    let lr = lr_at(step, config);
    let w = &config.weights;
    let mask = config.flags.mask();
    let mut g = Graph::new();
    let vars = state.params.bind(&mut g, &ParamGroup::ALL);
    let out = forward_batch(&mut g, &vars, &config.arch, batch).map_err(wrap)?;
    let mut terms = task_terms(&mut g, &vars, &config.arch, batch, &out, w, &mask).map_err(wrap)?;
    let mut grad_norm = BTreeMap::new();

    if coherence_applies(batch, &mask) {
        let ld = discriminator_loss(&mut g, out.features, &batch.tags(), &vars.discriminator, w.reduction)
            .map_err(wrap)?;
        let scaled = g.scale(ld, w.lambda3).map_err(wrap)?;
        g.backward(scaled).map_err(wrap)?;
        grad_norm.extend(
            apply_update(&g, &vars, state, &[ParamGroup::Discriminator], lr, config.momentum).map_err(wrap)?,
        );
        terms.discriminator = Some(ld);
        between(&state.params);
        let adv = adversarial_confusion_loss(&mut g, out.features, &state.params.discriminator, w.reduction)
            .map_err(wrap)?;
        terms.adversarial = Some(adv);
    }

    let main = weighted_sum(
        &mut g,
        &[
            (w.lambda1, terms.personality),
            (w.lambda2, terms.emotion),
            (w.lambda4, terms.adversarial),
            (w.lambda5, terms.ram),
        ],
    )
    .map_err(wrap)?;
    let values = terms.values(&g);
    let record = StepRecord {
        step,
        lr,
        terms: values,
        total: values.weighted(w),
        grad_norm: BTreeMap::new(),
    };
    if !values.is_finite() {
        return Err(abort(step, "non-finite loss", &record));
    }
    g.backward(main).map_err(|e| match e {
        Error::NonFinite(_) => abort(step, "non-finite gradient", &record),
        other => other,
    })?;
    grad_norm.extend(apply_update(&g, &vars, state, &MAIN_GROUPS, lr, config.momentum).map_err(wrap)?);
    state.step += 1;
    Ok(StepRecord { grad_norm, ..record })
}

