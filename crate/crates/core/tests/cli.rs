use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn persemon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_persemon"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TINY: &str = "\
data.image_size = 16
data.n_emotion_train = 40
data.n_emotion_eval = 20
data.n_videos_train = 10
data.n_videos_eval = 6
data.frames_per_video = 10
arch.preset = custom
arch.input_size = 16
arch.widths = 4, 8
arch.residual_units = 1, 0
arch.feature_dim = 8
arch.ram_hidden = 8
train.total_steps = 30
train.n_emotion = 8
train.n_videos = 2
train.k = 5
eval.k = 5
";

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
        let f = Fixture { dir };
        let o = persemon(&["gen-data", "--config", &f.cfg(), "--out", &f.path("data")]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn cfg(&self) -> String {
        self.path("tiny.cfg")
    }

    fn train(&self, out: &str, extra: &[&str]) -> Output {
        let (cfg, data, out) = (self.cfg(), self.path("data"), self.path(out));
        let mut args = vec!["train", "--config", &cfg, "--data", &data, "--out", &out];
        args.extend_from_slice(extra);
        persemon(&args)
    }
}

#[test]
fn gen_data_is_idempotent_per_seed() {
    let f = Fixture::new();
    let o = persemon(&["gen-data", "--config", &f.cfg(), "--out", &f.path("again")]);
    assert!(o.status.success());
    let a = json(&f.dir.path().join("data/manifest.json"));
    let b = json(&f.dir.path().join("again/manifest.json"));
    assert_eq!(a, b);
    let m = json(&f.dir.path().join("again/run_manifest.json"));
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["exit_code"], 0);
    assert!(m["dataset_hashes"].as_object().unwrap().len() == 1);
}

#[test]
fn invalid_keys_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "train.lamda4 = 0.1\n").unwrap();
    let out = dir.path().join("out").display().to_string();
    let o = persemon(&["gen-data", "--config", cfg.to_str().unwrap(), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.lamda4"));
    let o = persemon(&["gen-data", "--set", "data.frames_per_video=4", "--set", "data.k=10", "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!Path::new(&out).join("manifest.json").exists());
}

#[test]
fn train_eval_export_and_resume() {
    let f = Fixture::new();
    let o = f.train("run", &["--ablate", "disable_coherence"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&f.dir.path().join("run/run_manifest.json"));
    assert_eq!(m["config"]["train"]["flags"]["disable_coherence"], true);
    let log = std::fs::read_to_string(f.dir.path().join("run/log.jsonl")).unwrap();
    let totals: Vec<f64> = log
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["total"].as_f64().unwrap())
        .collect();
    assert_eq!(totals.len(), 30);
    assert!(totals[29] < totals[0]);

    let ckpt = f.path("run/checkpoint");
    let o = f.train("resumed", &["--resume", &ckpt, "--set", "train.total_steps=40"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = std::fs::read_to_string(f.dir.path().join("resumed/log.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 30);
    assert_eq!(log.lines().count(), 10);

    let data = f.path("data");
    let o = persemon(&["eval", "--config", &f.cfg(), "--checkpoint", &ckpt, "--data", &data, "--out", &f.path("eval")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = json(&f.dir.path().join("eval/eval.json"));
    let table = String::from_utf8_lossy(&o.stdout);
    let pam_mse = report["pam"]["mse"].as_f64().unwrap();
    assert!(table.contains(&format!("{pam_mse:.6}")), "{table}");
    for key in ["pam", "ram", "fused", "emotion"] {
        assert!(!report[key].is_null(), "{key}");
    }

    let o = persemon(&[
        "eval", "--config", &f.cfg(), "--checkpoint", &ckpt, "--data", &data, "--paths", "emotion", "--out", &f.path("eval2"),
    ]);
    assert!(o.status.success());
    let report = json(&f.dir.path().join("eval2/eval.json"));
    assert!(report["pam"].is_null() && report["fused"].is_null());
    assert!(!report["emotion"].is_null());

    let o = persemon(&["export-features", "--checkpoint", &ckpt, "--data", &data, "--out", &f.path("feat")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(f.dir.path().join("feat/projection.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("x,y,tag"));
    assert!(csv.contains(",emotion") && csv.contains(",personality"));
}

#[test]
fn eval_rejects_mismatched_architecture() {
    let f = Fixture::new();
    assert!(f.train("run", &["--set", "train.total_steps=2"]).status.success());
    let o = f.train("other", &["--resume", &f.path("run/checkpoint"), "--set", "arch.feature_dim=9"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("architecture mismatch"));
}

#[test]
fn numerical_abort_exits_three_with_diagnostic() {
    let f = Fixture::new();
    let o = f.train("boom", &["--set", "train.lr0=1e200"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("diagnostic"));
    assert!(f.dir.path().join("boom/diagnostic.json").exists());
    let m = json(&f.dir.path().join("boom/run_manifest.json"));
    assert_eq!(m["exit_code"], 3);
}

#[test]
fn ablation_suites_write_rows_and_manifests() {
    let f = Fixture::new();
    let data = f.path("data");
    let o = persemon(&[
        "ablate", "--config", &f.cfg(), "--data", &data, "--suite", "table4", "--set", "suite.seeds=0,1", "--set",
        "train.total_steps=4", "--out", &f.path("t4"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let res = json(&f.dir.path().join("t4/results.json"));
    assert_eq!(res["rows"].as_array().unwrap().len(), 4 * 2);
    let csv = std::fs::read_to_string(f.dir.path().join("t4/results.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("run,")).count(), 8);
    assert!(csv.lines().any(|l| l.starts_with("paired_diff,")));

    let o = persemon(&[
        "ablate", "--config", &f.cfg(), "--data", &data, "--suite", "table5", "--set", "suite.seeds=3", "--set",
        "train.total_steps=4", "--out", &f.path("t5"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let on = json(&f.dir.path().join("t5/coherence_seed3/manifest.json"));
    let mut off = json(&f.dir.path().join("t5/no_coherence_seed3/manifest.json"));
    assert_eq!(on["data_seed"], off["data_seed"]);
    assert_ne!(on["train"]["flags"], off["train"]["flags"]);
    off["train"]["flags"] = on["train"]["flags"].clone();
    assert_eq!(on["train"], off["train"]);

    let o = persemon(&[
        "ablate", "--config", &f.cfg(), "--data", &data, "--suite", "k_sweep", "--set", "suite.seeds=0", "--set",
        "train.total_steps=4", "--set", "data.frames_per_video=20", "--out", &f.path("ks"),
    ]);
    // data on disk has 10 frames per video, so k = 20 cannot be sampled
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let data20 = f.path("data20");
    assert!(persemon(&["gen-data", "--config", &f.cfg(), "--set", "data.frames_per_video=20", "--out", &data20])
        .status
        .success());
    let o = persemon(&[
        "ablate", "--config", &f.cfg(), "--data", &data20, "--suite", "k_sweep", "--set", "suite.seeds=0", "--set",
        "train.total_steps=4", "--out", &f.path("ks"),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let steps: Vec<u64> = ["k5", "k10", "k20"]
        .iter()
        .map(|v| json(&f.dir.path().join(format!("ks/{v}_seed0/manifest.json")))["train"]["total_steps"].as_u64().unwrap())
        .collect();
    assert!(steps.windows(2).all(|w| w[0] >= w[1]), "{steps:?}");
}

#[test]
fn partial_suite_failure_exits_four() {
    let f = Fixture::new();
    let o = persemon(&[
        "ablate", "--config", &f.cfg(), "--data", &f.path("data"), "--suite", "table5", "--set", "suite.seeds=0", "--set",
        "train.lr0=1e200", "--set", "train.total_steps=3", "--out", &f.path("bad"),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let res = json(&f.dir.path().join("bad/results.json"));
    assert!(res["rows"].as_array().unwrap().iter().all(|r| !r["error"].is_null()));
}

#[test]
fn grad_check_reports_all_groups() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc");
    let o = persemon(&["grad-check", "--seed", "1", "--out", out.to_str().unwrap(), "--coords", "6"]);
    assert!(o.status.success(), "{}{}", stderr(&o), String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    for g in ["fem", "pam", "eam", "ram", "discriminator"] {
        assert!(stdout.lines().any(|l| l.starts_with(g) && l.ends_with("pass")), "{g}: {stdout}");
    }

    let o = persemon(&[
        "grad-check", "--seed", "1", "--out", out.to_str().unwrap(), "--coords", "6", "--inject-fault", "conv-weight-grad",
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).lines().any(|l| l.starts_with("fem") && l.ends_with("FAIL")));

    let o = persemon(&["grad-check", "--set", "arch.preset=full", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            persemon::config::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
