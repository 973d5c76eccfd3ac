use serde::Serialize;

use crate::data::Batch;
use crate::engine::{check_gradients, GradCheckOptions, GradCheckReport, Graph, Var};
use crate::error::{Error, Result};
use crate::losses::{total_loss, weighted_sum, LossWeights, TermMask};
use crate::model::{ArchitectureConfig, ModelParams, ParamGroup};

/// Finite-difference result for one parameter group.
#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub group: ParamGroup,
    pub report: GradCheckReport,
}

impl GroupCheck {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// Checks each group against the objective it is trained on: the
/// dataset classifier against `lambda3 * L_D`, every other group against
/// the main loss with the classifier held constant. The batch must mix
/// both datasets so every group has a gradient.
pub fn grad_check_groups(
    params: &ModelParams,
    arch: &ArchitectureConfig,
    batch: &Batch,
    w: &LossWeights,
    opts: &GradCheckOptions,
) -> Result<Vec<GroupCheck>> {
    if batch.n_emotion == 0 || batch.n_videos == 0 {
        return Err(Error::Contract("gradient check needs both datasets in the batch".into()));
    }
    let mask = TermMask::default();
    ParamGroup::ALL
        .iter()
        .map(|&group| {
            let inputs: Vec<_> = params
                .leaves()
                .into_iter()
                .filter(|(_, g, _)| *g == group)
                .map(|(name, _, t)| (name, t.clone()))
                .collect();
            let objective = |g: &mut Graph, vars: &[Var]| -> Result<Var> {
                let mut next = vars.iter();
                let p = params.map(|_, gr, t| match gr == group {
                    true => *next.next().expect("one var per leaf"),
                    false => g.constant(t.clone()),
                });
                let l = total_loss(g, &p, arch, batch, w, &mask)?;
                let t = l.terms;
                match group {
                    ParamGroup::Discriminator => weighted_sum(g, &[(w.lambda3, t.discriminator)]),
                    _ => weighted_sum(
                        g,
                        &[
                            (w.lambda1, t.personality),
                            (w.lambda2, t.emotion),
                            (w.lambda4, t.adversarial),
                            (w.lambda5, t.ram),
                        ],
                    ),
                }
            };
            Ok(GroupCheck {
                group,
                report: check_gradients(&inputs, objective, opts)?,
            })
        })
        .collect()
}
