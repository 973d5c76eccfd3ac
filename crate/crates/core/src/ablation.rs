//! Ablation suites: named variants of one base configuration, trained on
//! shared data with paired seeds and compared on held-out metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Datasets;
use crate::error::{Error, Result};
use crate::eval::{evaluate_model, EvalOptions, EvalReport, ProbeOptions};
use crate::model::{Consensus, Model};
use crate::train::{run_training, AblationFlags, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Single-task baselines against joint training with and without RAM.
    Table4,
    /// Joint training with and without the coherence terms.
    Table5,
    /// Average against max consensus.
    Consensus,
    /// Frames per video of 5, 10 and 20.
    KSweep,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table4" => Ok(Suite::Table4),
            "table5" => Ok(Suite::Table5),
            "consensus" => Ok(Suite::Consensus),
            "k_sweep" => Ok(Suite::KSweep),
            other => Err(Error::config("suite", format!("unknown suite `{other}`"))),
        }
    }
}

/// A named modification of the base configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub flags: AblationFlags,
    pub consensus: Consensus,
    /// Overrides the base `k`; the step count is rescaled so every variant
    /// sees the same number of personality frames.
    pub k: Option<usize>,
}

impl Variant {
    fn new(name: &str, flags: AblationFlags) -> Self {
        Variant {
            name: name.into(),
            flags,
            consensus: Consensus::Average,
            k: None,
        }
    }

    /// The configuration this variant trains with.
    pub fn apply(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let mut c = base.clone();
        c.flags = self.flags;
        c.arch.consensus = self.consensus;
        c.seed = seed;
        if let Some(k) = self.k {
            c.total_steps = (base.total_steps * base.k).div_ceil(k).max(1);
            c.k = k;
            if let Some(d) = &base.decay_steps {
                c.decay_steps = Some(d.iter().map(|s| s * base.k / k).collect());
            }
        }
        c
    }
}

pub fn suite_variants(suite: Suite) -> Vec<Variant> {
    let off = AblationFlags::default();
    match suite {
        Suite::Table4 => vec![
            Variant::new(
                "emotion_only",
                AblationFlags {
                    disable_personality: true,
                    disable_ram: true,
                    ..off
                },
            ),
            Variant::new(
                "personality_only",
                AblationFlags {
                    disable_emotion: true,
                    disable_ram: true,
                    ..off
                },
            ),
            Variant::new(
                "joint_no_ram",
                AblationFlags {
                    disable_ram: true,
                    ..off
                },
            ),
            Variant::new("joint", off),
        ],
        Suite::Table5 => vec![
            Variant::new(
                "no_coherence",
                AblationFlags {
                    disable_coherence: true,
                    ..off
                },
            ),
            Variant::new("coherence", off),
        ],
        Suite::Consensus => vec![
            Variant {
                consensus: Consensus::Max,
                ..Variant::new("max", off)
            },
            Variant::new("average", off),
        ],
        Suite::KSweep => [5, 10, 20]
            .into_iter()
            .map(|k| Variant {
                k: Some(k),
                ..Variant::new(&format!("k{k}"), off)
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub seeds: Vec<u64>,
    pub base: TrainConfig,
    pub eval: EvalOptions,
}

impl SuiteConfig {
    pub fn new(suite: Suite, base: TrainConfig, seeds: Vec<u64>) -> Self {
        SuiteConfig {
            suite,
            seeds,
            eval: EvalOptions {
                k: base.k,
                probe: Some(ProbeOptions::default()),
                ..EvalOptions::default()
            },
            base,
        }
    }
}

/// One trained member of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub variant: String,
    pub seed: u64,
    pub steps: usize,
    pub k: usize,
    /// Held-out metrics by name; empty when the run failed.
    pub metrics: BTreeMap<String, f64>,
    pub error: Option<String>,
}

/// Mean over seeds of `variant - reference` for one metric, using only
/// seeds where both runs succeeded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedDiff {
    pub metric: String,
    pub variant: String,
    pub reference: String,
    pub mean_diff: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub config: SuiteConfig,
    pub rows: Vec<RunRow>,
    pub diffs: Vec<PairedDiff>,
}

/// Manifest written next to each member run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemberManifest {
    pub variant: Variant,
    pub seed: u64,
    pub data_seed: u64,
    pub train: TrainConfig,
    pub eval: EvalOptions,
}

pub fn report_metrics(r: &EvalReport) -> BTreeMap<String, f64> {
    let mut m = BTreeMap::new();
    for (name, p) in [("pam", &r.pam), ("ram", &r.ram), ("fused", &r.fused)] {
        if let Some(p) = p {
            m.insert(format!("{name}_mse"), p.mse);
            m.insert(format!("{name}_accuracy"), p.accuracy);
            if let Some(r2) = p.r2 {
                m.insert(format!("{name}_r2"), r2);
            }
            for (j, v) in p.r2_per_trait.iter().enumerate() {
                if let Some(v) = v {
                    m.insert(format!("{name}_r2_t{j}"), *v);
                }
            }
        }
    }
    if let Some(e) = &r.emotion {
        m.insert("emotion_mse".into(), e.mse);
    }
    if let Some(p) = r.probe_accuracy {
        m.insert("probe_accuracy".into(), p);
    }
    m
}

/// Trains and evaluates one member.
pub fn run_member(config: &TrainConfig, eval: &EvalOptions, ds: &Datasets) -> Result<(Model, EvalReport)> {
    let outcome = run_training(config, ds, None)?;
    let model = Model {
        arch: config.arch.clone(),
        params: outcome.state.params,
    };
    let opts = EvalOptions {
        k: config.k,
        ..eval.clone()
    };
    let report = evaluate_model(&model, ds, &opts)?;
    Ok((model, report))
}

fn paired(rows: &[RunRow], variants: &[Variant]) -> Vec<PairedDiff> {
    let Some(reference) = variants.first() else {
        return Vec::new();
    };
    let find = |v: &str, s: u64| rows.iter().find(|r| r.variant == v && r.seed == s && r.error.is_none());
    let mut out = Vec::new();
    let metrics: Vec<String> = rows
        .iter()
        .flat_map(|r| r.metrics.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    for v in &variants[1..] {
        for metric in &metrics {
            let per_seed: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == v.name && r.error.is_none())
                .filter_map(|r| {
                    let base = find(&reference.name, r.seed)?;
                    Some(r.metrics.get(metric)? - base.metrics.get(metric)?)
                })
                .collect();
            if per_seed.is_empty() {
                continue;
            }
            out.push(PairedDiff {
                metric: metric.clone(),
                variant: v.name.clone(),
                reference: reference.name.clone(),
                mean_diff: per_seed.iter().sum::<f64>() / per_seed.len() as f64,
                per_seed,
            });
        }
    }
    out
}

/// Runs every (variant, seed) pair. With `out`, writes one manifest per
/// member plus `results.csv` and `results.json`. Members that fail at run
/// time are kept as rows with an error; see [`SuiteResult::ensure_complete`].
pub fn run_suite(cfg: &SuiteConfig, ds: &Datasets, out: Option<&Path>) -> Result<SuiteResult> {
    if cfg.seeds.is_empty() {
        return Err(Error::config("seeds", "suite needs at least one seed"));
    }
    let variants = suite_variants(cfg.suite);
    let mut rows = Vec::new();
    for v in &variants {
        for &seed in &cfg.seeds {
            let train = v.apply(&cfg.base, seed);
            if let Some(dir) = out {
                let member = dir.join(format!("{}_seed{seed}", v.name));
                std::fs::create_dir_all(&member)?;
                let manifest = MemberManifest {
                    variant: v.clone(),
                    seed,
                    data_seed: ds.config.seed,
                    train: train.clone(),
                    eval: cfg.eval.clone(),
                };
                std::fs::write(member.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
            }
            let (metrics, error) = match run_member(&train, &cfg.eval, ds) {
                Ok((_, report)) => (report_metrics(&report), None),
                Err(e @ (Error::Config { .. } | Error::ArchitectureMismatch(_))) => return Err(e),
                Err(e) => (BTreeMap::new(), Some(e.to_string())),
            };
            rows.push(RunRow {
                variant: v.name.clone(),
                seed,
                steps: train.total_steps,
                k: train.k,
                metrics,
                error,
            });
        }
    }
    let result = SuiteResult {
        config: cfg.clone(),
        diffs: paired(&rows, &variants),
        rows,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&result)?)?;
        std::fs::write(dir.join("results.csv"), result.csv())?;
    }
    Ok(result)
}

impl SuiteResult {
    /// [`Error::SuitePartial`] naming `written` if any member failed.
    pub fn ensure_complete(&self, written: &str) -> Result<()> {
        let failed = self.rows.iter().filter(|r| r.error.is_some()).count();
        if failed > 0 {
            return Err(Error::SuitePartial {
                failed,
                partial: written.to_string(),
            });
        }
        Ok(())
    }

    /// Mean of `metric` over the successful seeds of `variant`.
    pub fn mean(&self, variant: &str, metric: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.variant == variant)
            .filter_map(|r| r.metrics.get(metric).copied())
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn value(&self, variant: &str, seed: u64, metric: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && r.seed == seed)
            .and_then(|r| r.metrics.get(metric).copied())
    }

    /// One row per (variant, seed), then one row per paired difference.
    pub fn csv(&self) -> String {
        let metrics: Vec<String> = self
            .rows
            .iter()
            .flat_map(|r| r.metrics.keys().cloned())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut s = format!("kind,variant,seed,steps,k,{},error\n", metrics.join(","));
        for r in &self.rows {
            let vals: Vec<String> = metrics
                .iter()
                .map(|m| r.metrics.get(m).map_or(String::new(), |v| v.to_string()))
                .collect();
            let _ = writeln!(
                s,
                "run,{},{},{},{},{},{}",
                r.variant,
                r.seed,
                r.steps,
                r.k,
                vals.join(","),
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";")
            );
        }
        for d in &self.diffs {
            let vals: Vec<String> = metrics
                .iter()
                .map(|m| if *m == d.metric { d.mean_diff.to_string() } else { String::new() })
                .collect();
            let _ = writeln!(s, "paired_diff,{}-{},,,,{},", d.variant, d.reference, vals.join(","));
        }
        s
    }

    /// Human-readable comparison of variant means.
    pub fn table(&self, metrics: &[&str]) -> String {
        let mut s = format!("{:<18}", "variant");
        for m in metrics {
            let _ = write!(s, " {m:>15}");
        }
        s.push('\n');
        let mut seen = Vec::new();
        for r in &self.rows {
            if seen.contains(&r.variant) {
                continue;
            }
            seen.push(r.variant.clone());
            let _ = write!(s, "{:<18}", r.variant);
            for m in metrics {
                match self.mean(&r.variant, m) {
                    Some(v) => {
                        let _ = write!(s, " {v:>15.6}");
                    }
                    None => {
                        let _ = write!(s, " {:>15}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_have_expected_members() {
        assert_eq!(suite_variants(Suite::Table4).len(), 4);
        assert_eq!(suite_variants(Suite::Table5).len(), 2);
        let c = suite_variants(Suite::Consensus);
        assert_eq!(c[0].consensus, Consensus::Max);
        let base = TrainConfig {
            total_steps: 100,
            k: 10,
            ..TrainConfig::default()
        };
        let steps: Vec<usize> = suite_variants(Suite::KSweep)
            .iter()
            .map(|v| v.apply(&base, 0).total_steps)
            .collect();
        assert_eq!(steps, vec![200, 100, 50]);
        assert!("table6".parse::<Suite>().is_err());
    }

    #[test]
    fn coherence_pair_differs_only_in_flags() {
        let base = TrainConfig::default();
        let v = suite_variants(Suite::Table5);
        let (a, b) = (v[0].apply(&base, 3), v[1].apply(&base, 3));
        assert_ne!(a.flags, b.flags);
        assert_eq!(TrainConfig { flags: b.flags, ..a }, b);
    }
}
