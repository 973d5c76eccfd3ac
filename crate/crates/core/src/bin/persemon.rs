use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use persemon::ablation::run_suite;
use persemon::binio::write_archive;
use persemon::config::{parse_pairs, RunConfig};
use persemon::data::{load_datasets, make_batch, manifest_hash, save_datasets, Datasets};
use persemon::engine::{BackwardFault, GradCheckOptions};
use persemon::eval::{evaluate_model, export_projection, probe_frames, EvalPath};
use persemon::model::{ModelParams, Preset};
use persemon::train::{grad_check_groups, load_checkpoint, load_model, resume_training, run_training};
use persemon::{Error, Result};

const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Parser)]
#[command(name = "persemon", version, about = "Joint personality and emotion network on synthetic data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Serialize)]
struct Common {
    /// Overrides the seed of whatever the command randomizes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Generate the emotion and personality datasets.
    GenData,
    /// Train a model.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Ablation flag to switch on, e.g. `disable_coherence`.
        #[arg(long = "ablate", value_name = "FLAG")]
        ablate: Vec<String>,
        /// Continue from a checkpoint directory.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the held-out splits.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated subset of pam,ram,fused,emotion.
        #[arg(long)]
        paths: Option<String>,
        /// Also run the dataset probe.
        #[arg(long)]
        probe: bool,
    },
    /// Run an ablation suite.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        /// table4, table5, consensus or k_sweep; overrides `suite.name`.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Finite-difference check of every parameter group.
    GradCheck {
        #[arg(long, default_value_t = 16)]
        coords: usize,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Write FEM features and their 2-D projection for held-out frames.
    ExportFeatures {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Fault {
    TanhDerivative,
    ConvWeightGrad,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::GradCheck { .. } => "grad-check",
            Command::ExportFeatures { .. } => "export-features",
        }
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'static str,
    arguments: &'a Command,
    common: &'a Common,
    version: &'static str,
    git_describe: String,
    config: Option<RunConfig>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    dataset_hashes: BTreeMap<String, String>,
    started_unix: u64,
    wall_clock_secs: f64,
    exit_code: i32,
    error: Option<String>,
}

/// What a command reports back for the manifest.
#[derive(Default)]
struct Record {
    config: Option<RunConfig>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    dataset_hashes: BTreeMap<String, String>,
}

impl Record {
    fn data(&mut self, dir: &Path) -> Result<Datasets> {
        self.inputs.insert("data".into(), dir.display().to_string());
        self.dataset_hashes.insert(dir.display().to_string(), manifest_hash(dir)?);
        Ok(load_datasets(dir)?.0)
    }

    fn wrote(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut pairs = match &common.config {
        Some(path) => parse_pairs(&std::fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    for s in &common.sets {
        let Some((k, v)) = s.split_once('=') else {
            return Err(Error::Config {
                key: Some(s.clone()),
                message: "expected KEY=VALUE".into(),
            });
        };
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    RunConfig::from_pairs(&pairs)
}

fn out_dir(common: &Common) -> Result<&Path> {
    let out = common.out.as_deref().ok_or_else(|| Error::Config {
        key: Some("out".into()),
        message: "--out is required".into(),
    })?;
    std::fs::create_dir_all(out)?;
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T, rec: &mut Record) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    rec.wrote(path);
    Ok(())
}

fn run(cli: &Cli, out: &Path, rec: &mut Record) -> Result<()> {
    let common = &cli.common;
    let mut cfg = load_config(common)?;
    match &cli.command {
        Command::GenData => {
            if let Some(s) = common.seed {
                cfg.data.seed = s;
            }
            rec.config = Some(cfg.clone());
            let ds = Datasets::generate(&cfg.data)?;
            save_datasets(&ds, out)?;
            rec.wrote(out);
            rec.dataset_hashes.insert(out.display().to_string(), manifest_hash(out)?);
            println!(
                "wrote {} emotion and {} personality training samples to {}",
                ds.emotion_train.len(),
                ds.personality_train.len(),
                out.display()
            );
        }
        Command::Train { data, ablate, resume } => {
            if let Some(s) = common.seed {
                cfg.train.seed = s;
            }
            for flag in ablate {
                cfg.train.flags.set(flag, true)?;
            }
            rec.config = Some(cfg.clone());
            let ds = rec.data(data)?;
            let outcome = match resume {
                Some(dir) => {
                    rec.inputs.insert("resume".into(), dir.display().to_string());
                    let (state, _) = load_checkpoint(dir, Some(&cfg.train.arch))?;
                    resume_training(&cfg.train, &ds, state, Some(out))?
                }
                None => run_training(&cfg.train, &ds, Some(out))?,
            };
            rec.wrote(out);
            if let (Some(first), Some(last)) = (outcome.log.first(), outcome.log.last()) {
                println!(
                    "steps {}..{} total loss {:.6} -> {:.6}",
                    first.step, last.step, first.total, last.total
                );
            }
        }
        Command::Eval {
            checkpoint,
            data,
            paths,
            probe,
        } => {
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            if let Some(p) = paths {
                cfg.eval.paths = EvalPath::parse_list(p)?;
            }
            if *probe && cfg.eval.probe.is_none() {
                cfg.eval.probe = Some(Default::default());
            }
            rec.config = Some(cfg.clone());
            rec.inputs.insert("checkpoint".into(), checkpoint.display().to_string());
            let model = load_model(checkpoint, None)?;
            let ds = rec.data(data)?;
            let report = evaluate_model(&model, &ds, &cfg.eval)?;
            print!("{}", report.table());
            write_json(&out.join("eval.json"), &report, rec)?;
        }
        Command::Ablate { data, suite } => {
            if let Some(name) = suite {
                cfg.suite = name.parse()?;
            }
            if let Some(s) = common.seed {
                let n = cfg.suite_seeds.len() as u64;
                cfg.suite_seeds = (s..s + n).collect();
            }
            rec.config = Some(cfg.clone());
            let ds = rec.data(data)?;
            let suite_cfg = cfg.suite_config();
            let result = run_suite(&suite_cfg, &ds, Some(out))?;
            rec.wrote(&out.join("results.json"));
            rec.wrote(&out.join("results.csv"));
            print!(
                "{}",
                result.table(&["emotion_mse", "pam_mse", "ram_mse", "fused_mse", "probe_accuracy"])
            );
            result.ensure_complete(&out.join("results.json").display().to_string())?;
        }
        Command::GradCheck { coords, inject_fault } => {
            if cfg.train.arch.preset != Preset::Micro {
                return Err(Error::Config {
                    key: Some("arch.preset".into()),
                    message: "gradient checking runs on the micro preset only".into(),
                });
            }
            let seed = common.seed.unwrap_or(cfg.train.seed);
            cfg.train.seed = seed;
            rec.config = Some(cfg.clone());
            let arch = &cfg.train.arch;
            let mut data = cfg.data.clone();
            data.seed = seed;
            data.render.image_size = arch.input_size;
            data.n_emotion_train = 2;
            data.n_videos_train = 2;
            data.n_emotion_eval = 1;
            data.n_videos_eval = 1;
            data.video.k = 2;
            data.video.frames_per_video = data.video.frames_per_video.max(2);
            let ds = Datasets::generate(&data)?;
            let batch = make_batch(&ds.emotion_train, &ds.personality_train, 2, 2, 2, seed)?;
            let params = ModelParams::init(arch, seed);
            let opts = GradCheckOptions {
                step: 1e-5,
                max_coords: *coords,
                rel_tol: 1e-3,
                abs_tol: 1e-7,
                seed,
                fault: inject_fault.map(|f| match f {
                    Fault::TanhDerivative => BackwardFault::TanhDerivative,
                    Fault::ConvWeightGrad => BackwardFault::ConvWeightGrad,
                }),
            };
            let checks = grad_check_groups(&params, arch, &batch, &cfg.train.weights, &opts)?;
            let mut failed = Vec::new();
            for c in &checks {
                let status = if c.passed() { "pass" } else { "FAIL" };
                println!(
                    "{:<14} {:>4} tensors  max rel err {:.3e}  {status}",
                    c.group.as_str(),
                    c.report.tensors.len(),
                    c.report.max_error()
                );
                if !c.passed() {
                    failed.push(c.group.as_str());
                }
            }
            write_json(&out.join("grad_check.json"), &checks, rec)?;
            if !failed.is_empty() {
                return Err(Error::Contract(format!("gradient check failed for {}", failed.join(", "))));
            }
        }
        Command::ExportFeatures { checkpoint, data } => {
            if let Some(s) = common.seed {
                cfg.eval.seed = s;
            }
            rec.config = Some(cfg.clone());
            rec.inputs.insert("checkpoint".into(), checkpoint.display().to_string());
            let model = load_model(checkpoint, None)?;
            let ds = rec.data(data)?;
            let (frames, tags) = probe_frames(&ds, cfg.eval.seed)?;
            let features = model.features(&frames)?;
            let tag_tensor = persemon::engine::Tensor::new(
                vec![tags.len()],
                tags.iter().map(|t| t.index() as f64).collect(),
            )?;
            let archive = out.join("features.bin");
            write_archive(&archive, &[("features", &features), ("tags", &tag_tensor)])?;
            rec.wrote(&archive);
            let csv = out.join("projection.csv");
            export_projection(&model, &frames, &tags, &csv)?;
            rec.wrote(&csv);
            println!("exported {} feature rows to {}", features.rows(), out.display());
        }
    }
    Ok(())
}

/// `git describe` of the working tree the binary runs from, when available.
fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut rec = Record::default();
    let result = out_dir(&cli.common).and_then(|out| run(&cli, out, &mut rec).map(|()| out));
    let code = match &result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    if let Some(out) = cli.common.out.as_deref().filter(|o| o.is_dir()) {
        let manifest = RunManifest {
            command: cli.command.name(),
            arguments: &cli.command,
            common: &cli.common,
            version: env!("CARGO_PKG_VERSION"),
            git_describe: git_describe(),
            config: rec.config,
            inputs: rec.inputs,
            outputs: rec.outputs,
            dataset_hashes: rec.dataset_hashes,
            started_unix,
            wall_clock_secs: started.elapsed().as_secs_f64(),
            exit_code: code,
            error: result.as_ref().err().map(ToString::to_string),
        };
        match serde_json::to_string_pretty(&manifest) {
            Ok(json) => {
                if let Err(e) = std::fs::write(out.join(RUN_MANIFEST), json) {
                    eprintln!("error: cannot write run manifest: {e}");
                }
            }
            Err(e) => eprintln!("error: cannot serialize run manifest: {e}"),
        }
    }
    ExitCode::from(code as u8)
}
