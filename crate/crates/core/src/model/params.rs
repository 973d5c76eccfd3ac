use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{ArchitectureConfig, FemActivation};
use crate::engine::{Graph, Tensor, Var};
use crate::seed::{self, stream};

/// Disjoint parameter groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Fem,
    Pam,
    Eam,
    Ram,
    Discriminator,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 5] = [
        ParamGroup::Fem,
        ParamGroup::Pam,
        ParamGroup::Eam,
        ParamGroup::Ram,
        ParamGroup::Discriminator,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroup::Fem => "fem",
            ParamGroup::Pam => "pam",
            ParamGroup::Eam => "eam",
            ParamGroup::Ram => "ram",
            ParamGroup::Discriminator => "discriminator",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    /// `[in, out]`.
    pub weight: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResidualUnit<T> {
    pub conv_a: T,
    pub slope_a: Option<T>,
    pub conv_b: T,
    pub slope_b: Option<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    /// Stride-2 downsampling kernel.
    pub down: T,
    pub down_slope: Option<T>,
    pub units: Vec<ResidualUnit<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Backbone<T> {
    pub blocks: Vec<ConvBlock<T>>,
    pub embed: Dense<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelationHead<T> {
    pub hidden: Dense<T>,
    pub out: Dense<T>,
}

/// All network parameters. The backbone is stored once and read by both
/// the personality and the emotion branch.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub fem: Backbone<T>,
    pub pam: Dense<T>,
    pub eam: Dense<T>,
    pub ram: RelationHead<T>,
    pub discriminator: Dense<T>,
}

pub type ModelParams = Params<Tensor>;
pub type ModelVars = Params<Var>;

fn dense_leaves<'a, T>(out: &mut Vec<(String, ParamGroup, &'a T)>, p: &str, g: ParamGroup, d: &'a Dense<T>) {
    out.push((format!("{p}.weight"), g, &d.weight));
    out.push((format!("{p}.bias"), g, &d.bias));
}

fn dense_leaves_mut<'a, T>(out: &mut Vec<(String, ParamGroup, &'a mut T)>, p: &str, g: ParamGroup, d: &'a mut Dense<T>) {
    out.push((format!("{p}.weight"), g, &mut d.weight));
    out.push((format!("{p}.bias"), g, &mut d.bias));
}

impl<T> Params<T> {
    /// Every leaf with its canonical name and group, in a fixed order.
    pub fn leaves(&self) -> Vec<(String, ParamGroup, &T)> {
        let mut out = Vec::new();
        let fem = ParamGroup::Fem;
        for (b, block) in self.fem.blocks.iter().enumerate() {
            out.push((format!("fem.block{b}.down"), fem, &block.down));
            if let Some(s) = &block.down_slope {
                out.push((format!("fem.block{b}.down_slope"), fem, s));
            }
            for (u, unit) in block.units.iter().enumerate() {
                let p = format!("fem.block{b}.unit{u}");
                out.push((format!("{p}.conv_a"), fem, &unit.conv_a));
                if let Some(s) = &unit.slope_a {
                    out.push((format!("{p}.slope_a"), fem, s));
                }
                out.push((format!("{p}.conv_b"), fem, &unit.conv_b));
                if let Some(s) = &unit.slope_b {
                    out.push((format!("{p}.slope_b"), fem, s));
                }
            }
        }
        dense_leaves(&mut out, "fem.embed", fem, &self.fem.embed);
        dense_leaves(&mut out, "pam", ParamGroup::Pam, &self.pam);
        dense_leaves(&mut out, "eam", ParamGroup::Eam, &self.eam);
        dense_leaves(&mut out, "ram.hidden", ParamGroup::Ram, &self.ram.hidden);
        dense_leaves(&mut out, "ram.out", ParamGroup::Ram, &self.ram.out);
        dense_leaves(&mut out, "discriminator", ParamGroup::Discriminator, &self.discriminator);
        out
    }

    /// Same order as [`Params::leaves`].
    pub fn leaves_mut(&mut self) -> Vec<(String, ParamGroup, &mut T)> {
        let mut out = Vec::new();
        let fem = ParamGroup::Fem;
        for (b, block) in self.fem.blocks.iter_mut().enumerate() {
            out.push((format!("fem.block{b}.down"), fem, &mut block.down));
            if let Some(s) = &mut block.down_slope {
                out.push((format!("fem.block{b}.down_slope"), fem, s));
            }
            for (u, unit) in block.units.iter_mut().enumerate() {
                let p = format!("fem.block{b}.unit{u}");
                out.push((format!("{p}.conv_a"), fem, &mut unit.conv_a));
                if let Some(s) = &mut unit.slope_a {
                    out.push((format!("{p}.slope_a"), fem, s));
                }
                out.push((format!("{p}.conv_b"), fem, &mut unit.conv_b));
                if let Some(s) = &mut unit.slope_b {
                    out.push((format!("{p}.slope_b"), fem, s));
                }
            }
        }
        dense_leaves_mut(&mut out, "fem.embed", fem, &mut self.fem.embed);
        dense_leaves_mut(&mut out, "pam", ParamGroup::Pam, &mut self.pam);
        dense_leaves_mut(&mut out, "eam", ParamGroup::Eam, &mut self.eam);
        dense_leaves_mut(&mut out, "ram.hidden", ParamGroup::Ram, &mut self.ram.hidden);
        dense_leaves_mut(&mut out, "ram.out", ParamGroup::Ram, &mut self.ram.out);
        dense_leaves_mut(&mut out, "discriminator", ParamGroup::Discriminator, &mut self.discriminator);
        out
    }

    /// Rebuilds the structure with leaves transformed by `f`, visiting them in
    /// canonical order.
    pub fn map<U>(&self, mut f: impl FnMut(&str, ParamGroup, &T) -> U) -> Params<U> {
        let mut fem = |name: String, t: &T| f(&name, ParamGroup::Fem, t);
        let dense = |p: &str, g: ParamGroup, d: &Dense<T>, f: &mut dyn FnMut(&str, ParamGroup, &T) -> U| Dense {
            weight: f(&format!("{p}.weight"), g, &d.weight),
            bias: f(&format!("{p}.bias"), g, &d.bias),
        };
        let blocks = self
            .fem
            .blocks
            .iter()
            .enumerate()
            .map(|(b, block)| ConvBlock {
                down: fem(format!("fem.block{b}.down"), &block.down),
                down_slope: block.down_slope.as_ref().map(|s| fem(format!("fem.block{b}.down_slope"), s)),
                units: block
                    .units
                    .iter()
                    .enumerate()
                    .map(|(u, unit)| {
                        let p = format!("fem.block{b}.unit{u}");
                        ResidualUnit {
                            conv_a: fem(format!("{p}.conv_a"), &unit.conv_a),
                            slope_a: unit.slope_a.as_ref().map(|s| fem(format!("{p}.slope_a"), s)),
                            conv_b: fem(format!("{p}.conv_b"), &unit.conv_b),
                            slope_b: unit.slope_b.as_ref().map(|s| fem(format!("{p}.slope_b"), s)),
                        }
                    })
                    .collect(),
            })
            .collect();
        let embed = dense("fem.embed", ParamGroup::Fem, &self.fem.embed, &mut f);
        Params {
            fem: Backbone { blocks, embed },
            pam: dense("pam", ParamGroup::Pam, &self.pam, &mut f),
            eam: dense("eam", ParamGroup::Eam, &self.eam, &mut f),
            ram: RelationHead {
                hidden: dense("ram.hidden", ParamGroup::Ram, &self.ram.hidden, &mut f),
                out: dense("ram.out", ParamGroup::Ram, &self.ram.out, &mut f),
            },
            discriminator: dense("discriminator", ParamGroup::Discriminator, &self.discriminator, &mut f),
        }
    }
}

impl<T> Params<T> {
    /// Backbone and head read by the personality branch.
    pub fn personality_path(&self) -> (&Backbone<T>, &Dense<T>) {
        (&self.fem, &self.pam)
    }

    /// Backbone and head read by the emotion branch.
    pub fn emotion_path(&self) -> (&Backbone<T>, &Dense<T>) {
        (&self.fem, &self.eam)
    }
}

impl ModelParams {
    /// He-style fan-in initialization for kernels and weights, zero biases,
    /// PReLU slopes at 0.25.
    pub fn init(arch: &ArchitectureConfig, seed: u64) -> Self {
        let mut rng = seed::rng(seed, stream::INIT);
        Self::init_with(arch, &mut rng)
    }

    pub fn init_with<R: Rng + ?Sized>(arch: &ArchitectureConfig, rng: &mut R) -> Self {
        let prelu = arch.activation == FemActivation::Prelu;
        let slope = |c: usize| prelu.then(|| Tensor::full(&[c], 0.25));
        let kernel = |f: usize, c: usize, rng: &mut R| {
            Tensor::normal(&[f, c, 3, 3], (2.0 / (c * 9) as f64).sqrt(), rng)
        };
        let mut channels = 1;
        let mut blocks = Vec::new();
        for (&w, &n_units) in arch.widths.iter().zip(&arch.residual_units) {
            let down = kernel(w, channels, rng);
            let units = (0..n_units)
                .map(|_| ResidualUnit {
                    conv_a: kernel(w, w, rng),
                    slope_a: slope(w),
                    conv_b: kernel(w, w, rng),
                    slope_b: slope(w),
                })
                .collect();
            blocks.push(ConvBlock {
                down,
                down_slope: slope(w),
                units,
            });
            channels = w;
        }
        let dense = |i: usize, o: usize, rng: &mut R| Dense {
            weight: Tensor::normal(&[i, o], (2.0 / i as f64).sqrt(), rng),
            bias: Tensor::zeros(&[o]),
        };
        let d = arch.feature_dim;
        Params {
            fem: Backbone {
                blocks,
                embed: dense(arch.flat_dim(), d, rng),
            },
            pam: dense(d, 5, rng),
            eam: dense(d, 2, rng),
            ram: RelationHead {
                hidden: dense(2, arch.ram_hidden, rng),
                out: dense(arch.ram_hidden, 5, rng),
            },
            discriminator: dense(d, 2, rng),
        }
    }

    /// Adds every tensor to `g`: groups listed in `trainable` become
    /// trainable leaves, the rest constants.
    pub fn bind(&self, g: &mut Graph, trainable: &[ParamGroup]) -> ModelVars {
        self.map(|_, group, t| {
            if trainable.contains(&group) {
                g.param(t.clone())
            } else {
                g.constant(t.clone())
            }
        })
    }

    pub fn num_values(&self) -> usize {
        self.leaves().iter().map(|(_, _, t)| t.numel()).sum()
    }

    /// Euclidean norm of the stored gradients of one group.
    pub fn grad_norm(&self, group: ParamGroup) -> f64 {
        self.leaves()
            .iter()
            .filter(|(_, g, _)| *g == group)
            .filter_map(|(_, _, t)| t.grad())
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}
