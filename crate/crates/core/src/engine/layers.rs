//! Composite layers built from graph primitives.

use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Nonlinearity applied inside the convolutional backbone.
#[derive(Clone, Copy, Debug)]
pub enum Activation {
    Relu,
    /// PReLU with the given per-channel slope tensor.
    Prelu(Var),
}

pub fn activate(g: &mut Graph, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Relu => g.relu(x),
        Activation::Prelu(slope) => g.prelu(x, slope),
    }
}

/// Pre-activation residual unit: `x + conv_b(act_b(conv_a(act_a(x))))`.
///
/// Both convolutions are stride 1 and must preserve the channel count.
pub fn residual_unit(
    g: &mut Graph,
    x: Var,
    (conv_a, act_a): (Var, Activation),
    (conv_b, act_b): (Var, Activation),
) -> Result<Var> {
    let channels = g.value(x).shape().get(1).copied().unwrap_or(0);
    for w in [conv_a, conv_b] {
        let ws = g.value(w).shape();
        if ws.len() != 4 || ws[0] != channels || ws[1] != channels {
            return Err(Error::dim(
                "residual_unit",
                format!("kernel {ws:?} does not preserve {channels} channels"),
            ));
        }
    }
    let h = activate(g, x, act_a)?;
    let h = g.conv2d(h, conv_a, 1)?;
    let h = activate(g, h, act_b)?;
    let h = g.conv2d(h, conv_b, 1)?;
    g.add(x, h)
}
