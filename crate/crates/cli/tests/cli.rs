//! End-to-end behaviour of the `clef` binary.

use std::path::Path;
use std::process::{Command, Output};

use clef_core::experiment::{build_model, Variant};
use clef_core::synthbench::read_dataset;
use clef_core::{Checkpoint, EvalReport, ExperimentConfig};
use tempfile::TempDir;

const SMALL: &str = "n_train = 300\nn_val = 60\nn_test = 200\n[train]\nepochs = 2\n";

fn clef(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clef"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = clef(dir, args);
    assert!(
        out.status.success(),
        "clef {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn workspace(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), config).unwrap();
    dir
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn config(dir: &Path) -> ExperimentConfig {
    toml::from_str(&std::fs::read_to_string(dir.join("cfg.toml")).unwrap()).unwrap()
}

#[test]
fn generate_writes_three_deterministic_splits() {
    let w = workspace(SMALL);
    let d = w.path();
    ok(d, &["generate", "--config", "cfg.toml", "--out", "a"]);
    ok(d, &["generate", "--config", "cfg.toml", "--out", "b"]);
    ok(
        d,
        &[
            "generate", "--config", "cfg.toml", "--out", "c", "--seed", "5",
        ],
    );
    for name in ["train.jsonl", "val.jsonl", "test.jsonl"] {
        assert_eq!(
            read(d.join("a").join(name)),
            read(d.join("b").join(name)),
            "{name}"
        );
        assert_ne!(
            read(d.join("a").join(name)),
            read(d.join("c").join(name)),
            "{name}"
        );
        let (ha, sa) = read_dataset(&d.join("a").join(name)).unwrap();
        let (hc, sc) = read_dataset(&d.join("c").join(name)).unwrap();
        assert_eq!(
            (ha.split, ha.count, sa.len()),
            (hc.split, hc.count, sc.len())
        );
        assert_eq!((ha.seed, hc.seed), (0, 5));
    }
}

#[test]
fn generated_train_split_realizes_the_configured_bias() {
    let w = workspace("n_train = 6000\nn_val = 0\nn_test = 10\n");
    let d = w.path();
    let stdout = ok(d, &["generate", "--config", "cfg.toml", "--out", "data"]);
    let (header, samples) = read_dataset(&d.join("data/train.jsonl")).unwrap();
    // Moment estimate from raw counts: a fraction beta follows the preferred
    // label, the rest is uniform over the admissible set (which contains it).
    let spec = &header.spec;
    let (mut num, mut den) = (0.0, 0.0);
    for (t, prior) in spec.prior_map.iter().enumerate() {
        let of_t: Vec<_> = samples.iter().filter(|s| s.context_type == t).collect();
        let hits = of_t
            .iter()
            .filter(|s| s.labels[0] == prior.preferred)
            .count();
        let rate = hits as f64 / of_t.len() as f64;
        let chance = 1.0 / prior.admissible.len() as f64;
        num += of_t.len() as f64 * (rate - chance) / (1.0 - chance);
        den += of_t.len() as f64;
    }
    let estimate = num / den;
    assert!(
        (estimate - spec.beta).abs() <= 0.02,
        "estimated beta {estimate}"
    );
    assert!(
        stdout.contains(&format!("estimated_beta={estimate:.4}")),
        "{stdout}"
    );
}

#[test]
fn train_modes_share_data_and_reruns_are_identical() {
    let w = workspace(SMALL);
    let d = w.path();
    ok(d, &["generate", "--config", "cfg.toml", "--out", "data"]);
    for mode in ["vanilla", "clef"] {
        ok(
            d,
            &[
                "train", "--config", "cfg.toml", "--data", "data", "--mode", mode, "--out", "run",
            ],
        );
    }
    ok(
        d,
        &[
            "train", "--config", "cfg.toml", "--data", "data", "--mode", "clef", "--out", "again",
        ],
    );
    let log = |p: &str| -> serde_json::Value { serde_json::from_slice(&read(d.join(p))).unwrap() };
    assert_eq!(
        log("run/vanilla.log.json")["train_dataset_hash"],
        log("run/clef.log.json")["train_dataset_hash"]
    );
    assert!(d.join("run/vanilla.ckpt.json").is_file() && d.join("run/clef.ckpt.json").is_file());
    for f in [
        "clef.log.json",
        "clef.ckpt.json",
        "clef.best.ckpt.json",
        "clef.train.run.json",
    ] {
        assert_eq!(
            read(d.join("run").join(f)),
            read(d.join("again").join(f)),
            "{f}"
        );
    }
}

#[test]
fn zero_epochs_leave_the_initialization() {
    let w = workspace(SMALL);
    let d = w.path();
    ok(d, &["generate", "--config", "cfg.toml", "--out", "data"]);
    ok(
        d,
        &[
            "train", "--config", "cfg.toml", "--data", "data", "--mode", "no_kl", "--epochs", "0",
            "--out", "run",
        ],
    );
    let ckpt = Checkpoint::load(&d.join("run/no_kl.ckpt.json")).unwrap();
    let (_, train) = read_dataset(&d.join("data/train.jsonl")).unwrap();
    let init = build_model(&config(d), Variant::NoKl, &train).unwrap();
    assert_eq!(ckpt.model, init);
}

#[test]
fn eval_report_follows_the_report_schema() {
    let w = workspace(SMALL);
    let d = w.path();
    ok(d, &["generate", "--config", "cfg.toml", "--out", "data"]);
    ok(
        d,
        &[
            "train", "--config", "cfg.toml", "--data", "data", "--mode", "vanilla", "--out", "run",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--checkpoint",
            "run/vanilla.ckpt.json",
            "--data",
            "data/test.jsonl",
        ],
    );
    let text = read(d.join("run/vanilla.ensemble_only.report.json"));
    let value: serde_json::Value = serde_json::from_slice(&text).unwrap();
    let mut keys: Vec<&str> = value
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        [
            "accuracy",
            "config_hash",
            "dataset_hash",
            "map",
            "mode",
            "num_samples",
            "per_class_accuracy",
            "per_class_ap",
            "scorer",
            "seed"
        ]
    );
    let report: EvalReport = serde_json::from_slice(&text).unwrap();
    assert_eq!(report.per_class_ap.len(), 6);
    assert_eq!(report.num_samples, 200);
    assert!((0.0..=1.0).contains(&report.accuracy));
}

#[test]
fn eval_rejects_a_checkpoint_with_another_class_count() {
    let w = workspace(SMALL);
    let d = w.path();
    std::fs::write(
        d.join("k4.toml"),
        format!("{SMALL}[bias]\nnum_classes = 4\n"),
    )
    .unwrap();
    ok(d, &["generate", "--config", "cfg.toml", "--out", "data"]);
    ok(d, &["generate", "--config", "k4.toml", "--out", "data4"]);
    ok(
        d,
        &[
            "train", "--config", "cfg.toml", "--data", "data", "--mode", "clef", "--epochs", "0",
            "--out", "run",
        ],
    );
    let out = clef(
        d,
        &[
            "eval",
            "--checkpoint",
            "run/clef.ckpt.json",
            "--data",
            "data4/test.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("classes"));
}

#[test]
fn one_cell_ablation_equals_train_then_eval() {
    let w = workspace(&format!("ablations = [\"no_mask\"]\n{SMALL}"));
    let d = w.path();
    ok(
        d,
        &[
            "ablate", "--config", "cfg.toml", "--seed", "3", "--out", "grid",
        ],
    );
    ok(
        d,
        &[
            "generate", "--config", "cfg.toml", "--seed", "3", "--out", "data",
        ],
    );
    ok(
        d,
        &[
            "train", "--config", "cfg.toml", "--data", "data", "--mode", "no_mask", "--seed", "3",
            "--out", "run",
        ],
    );
    ok(
        d,
        &[
            "eval",
            "--checkpoint",
            "run/no_mask.ckpt.json",
            "--data",
            "data/test.jsonl",
            "--scorer",
            "factual",
        ],
    );
    for f in [
        "no_mask.ckpt.json",
        "no_mask.best.ckpt.json",
        "no_mask.log.json",
        "no_mask.factual.report.json",
    ] {
        assert_eq!(
            read(d.join("grid").join(f)),
            read(d.join("run").join(f)),
            "{f}"
        );
    }
}

#[test]
fn report_aggregates_seeds_and_lists_missing_artifacts() {
    let w = workspace(&format!("ablations = [\"vanilla\", \"clef\"]\n{SMALL}"));
    let d = w.path();
    ok(
        d,
        &[
            "ablate", "--config", "cfg.toml", "--seed", "0", "--out", "runs/s0",
        ],
    );
    ok(
        d,
        &[
            "ablate", "--config", "cfg.toml", "--seed", "1", "--out", "runs/s1",
        ],
    );
    std::fs::remove_file(d.join("runs/s1/clef.best.ckpt.json")).unwrap();
    let stdout = ok(d, &["report", "runs"]);
    assert!(stdout.contains("s1/clef.best.ckpt.json: missing"));

    let report = |seed: u32| -> EvalReport {
        serde_json::from_slice(&read(d.join(format!("runs/s{seed}/clef.tie.report.json")))).unwrap()
    };
    let (a, b) = (report(0).accuracy, report(1).accuracy);
    let csv = std::fs::read_to_string(d.join("runs/summary.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(
        header,
        [
            "mode",
            "scorer",
            "runs",
            "seeds",
            "accuracy_mean",
            "accuracy_range",
            "map_mean",
            "map_range",
            "config_hashes"
        ]
    );
    let row: Vec<&str> = csv
        .lines()
        .find(|l| l.starts_with("clef,tie,"))
        .unwrap()
        .split(',')
        .collect();
    assert_eq!(row[2], "2");
    assert_eq!(row[3], "0;1");
    let mean: f64 = row[4].parse().unwrap();
    let range: f64 = row[5].parse().unwrap();
    assert!((mean - (a + b) / 2.0).abs() < 1e-12);
    assert!((range - (a - b).abs()).abs() < 1e-12);
    let md = std::fs::read_to_string(d.join("runs/summary.md")).unwrap();
    assert!(md.contains("| s0 | ablate |") && md.contains("| s1 | ablate |"));
    assert!(
        !md.contains(d.to_str().unwrap()),
        "summary leaks an absolute path"
    );
}

#[test]
fn report_on_an_empty_directory_says_so() {
    let w = workspace(SMALL);
    let d = w.path();
    std::fs::create_dir(d.join("empty")).unwrap();
    let stdout = ok(d, &["report", "empty"]);
    assert!(stdout.contains("no runs found"));
    assert!(std::fs::read_to_string(d.join("empty/summary.md"))
        .unwrap()
        .contains("no runs found"));
}

#[test]
fn exit_codes_separate_failure_kinds() {
    let w = workspace(SMALL);
    let d = w.path();
    std::fs::write(d.join("bad.toml"), "[bias]\nbeta = 2.0\n").unwrap();
    std::fs::write(d.join("typo.toml"), "n_train = \"many\"\n").unwrap();
    std::fs::write(
        d.join("diverge.toml"),
        "n_train = 100\nn_val = 0\nn_test = 20\nablations = [\"clef\"]\n[train.optimizer]\nkind = \"sgd\"\nlr = 1e300\n",
    )
    .unwrap();
    assert_eq!(
        clef(d, &["generate", "--config", "bad.toml"]).status.code(),
        Some(2)
    );
    assert_eq!(
        clef(d, &["generate", "--config", "typo.toml"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        clef(d, &["generate", "--config", "absent.toml"])
            .status
            .code(),
        Some(3)
    );
    assert_eq!(
        clef(
            d,
            &["eval", "--checkpoint", "none.json", "--data", "none.jsonl"]
        )
        .status
        .code(),
        Some(3)
    );
    let div = clef(d, &["ablate", "--config", "diverge.toml", "--out", "dv"]);
    assert_eq!(div.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&div.stderr).contains("diverged"));
}
