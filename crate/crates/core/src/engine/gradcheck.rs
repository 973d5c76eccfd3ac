//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::graph::{BackwardFault, Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Coordinates sampled per input tensor (all of them when smaller).
    pub max_coords: usize,
    pub rel_tol: f64,
    /// Absolute slack used when both derivatives are close to zero.
    pub abs_tol: f64,
    pub seed: u64,
    /// Corrupted backward rule for the analytic pass (negative controls).
    pub fault: Option<BackwardFault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-4,
            max_coords: 64,
            rel_tol: 1e-4,
            abs_tol: 1e-8,
            seed: 0,
            fault: None,
        }
    }
}

/// Result for one input tensor.
#[derive(Clone, Debug, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub coords_checked: usize,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, abs_tol / rel_tol)`.
    pub max_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn max_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_error).fold(0.0, f64::max)
    }
}

/// Compares reverse-mode gradients of `f` with central differences.
///
/// `f` receives a fresh graph and one trainable leaf per input, and must
/// return a scalar.
pub fn check_gradients<F>(
    inputs: &[(String, Tensor)],
    f: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss).item())
    };

    let mut g = Graph::with_fault(opts.fault);
    let vars: Vec<Var> = inputs.iter().map(|(_, t)| g.param(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|v| g.grad(*v).map(<[f64]>::to_vec))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Contract("input leaf lost its gradient".into()))?;
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut values: Vec<Tensor> = inputs.iter().map(|(_, t)| t.clone()).collect();
    let floor = opts.abs_tol / opts.rel_tol;
    let mut tensors = Vec::with_capacity(inputs.len());
    for (ti, (name, tensor)) in inputs.iter().enumerate() {
        let n = tensor.numel();
        let coords: Vec<usize> = if n <= opts.max_coords {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, opts.max_coords).into_vec();
            c.sort_unstable();
            c
        };
        let mut max_error: f64 = 0.0;
        for &c in &coords {
            let orig = values[ti].data()[c];
            values[ti].data_mut()[c] = orig + opts.step;
            let plus = eval(&values)?;
            values[ti].data_mut()[c] = orig - opts.step;
            let minus = eval(&values)?;
            values[ti].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[ti][c];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            max_error = max_error.max(err);
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            coords_checked: coords.len(),
            max_error,
            passed: max_error <= opts.rel_tol,
        });
    }
    Ok(GradCheckReport { tensors })
}
