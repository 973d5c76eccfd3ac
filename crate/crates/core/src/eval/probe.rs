use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::seed;

/// Optimizer settings of the linear probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOptions {
    pub iterations: usize,
    pub step: f64,
    /// L2 penalty on the weights.
    pub ridge: f64,
    /// Fraction of samples used to fit; the rest are scored.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            iterations: 400,
            step: 0.5,
            ridge: 1e-3,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    /// Held-out accuracy.
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
}

/// Fits a fresh logistic regression on standardized `features [N,D]` to
/// binary `labels` and scores it on a held-out split.
pub fn linear_probe(features: &Tensor, labels: &[usize], opts: &ProbeOptions) -> Result<ProbeResult> {
    let n = features.rows();
    if features.ndim() != 2 || labels.len() != n {
        return Err(Error::dim("linear_probe", format!("{:?} features for {} labels", features.shape(), labels.len())));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Contract("probe labels must be 0 or 1".into()));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::Contract("probe set contains a single class".into()));
    }
    let d = features.row_len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(opts.seed, seed::stream::PROBE));
    let n_train = ((n as f64 * opts.train_fraction).round() as usize).clamp(1, n - 1);
    let (train, test) = order.split_at(n_train);

    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for &i in train {
        mean.iter_mut().zip(features.row(i)).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n_train as f64);
    for &i in train {
        sd.iter_mut()
            .zip(features.row(i).iter().zip(&mean))
            .for_each(|(s, (x, m))| *s += (x - m).powi(2));
    }
    sd.iter_mut().for_each(|s| *s = (*s / n_train as f64).sqrt().max(1e-12));
    let standardize = |i: usize| -> Vec<f64> {
        features.row(i).iter().zip(&mean).zip(&sd).map(|((x, m), s)| (x - m) / s).collect()
    };
    let xs: Vec<Vec<f64>> = train.iter().map(|&i| standardize(i)).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..opts.iterations {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, &i) in xs.iter().zip(train) {
            let z: f64 = x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            let r = sigmoid(z) - labels[i] as f64;
            gw.iter_mut().zip(x).for_each(|(g, a)| *g += r * a);
            gb += r;
        }
        let inv = 1.0 / n_train as f64;
        for (wj, gj) in w.iter_mut().zip(&gw) {
            *wj -= opts.step * (gj * inv + opts.ridge * *wj);
        }
        b -= opts.step * gb * inv;
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let z: f64 = standardize(i).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            (z > 0.0) as usize == labels[i]
        })
        .count();
    Ok(ProbeResult {
        accuracy: correct as f64 / test.len() as f64,
        n_train,
        n_test: test.len(),
    })
}
