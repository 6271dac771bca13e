use std::path::Path;

use anyhow::{Context, Result};
use clef_core::experiment::{
    build_model, evaluate_model, generate_splits, run_grid, SplitData, Variant,
};
use clef_core::synthbench::{dataset_hash, dataset_to_string, read_dataset, summarize};
use clef_core::train::EpochRecord;
use clef_core::{
    fit, Checkpoint, ClefError, ClefModel, EvalReport, ExperimentConfig, LabelRegime, Scorer,
    TaskKind, TestVariant, TrainData,
};
use serde::Serialize;

use crate::artifacts::{OutDir, RunManifest};
use crate::config;
use crate::Common;

/// Training log as written to `{variant}.log.json`.
#[derive(Serialize)]
struct TrainingLog<'a> {
    config_hash: &'a str,
    seed: u64,
    variant: &'a str,
    train_dataset_hash: &'a str,
    best_epoch: usize,
    epochs: &'a [EpochRecord],
}

struct Trained<'a> {
    variant: Variant,
    config_hash: &'a str,
    seed: u64,
    train_hash: &'a str,
    model: &'a ClefModel,
    best: &'a ClefModel,
    best_epoch: usize,
    log: &'a [EpochRecord],
}

fn write_trained(out: &mut OutDir, t: &Trained) -> Result<()> {
    let name = t.variant.name();
    out.write(
        &format!("{name}.ckpt.json"),
        &Checkpoint::new(t.model.clone(), t.config_hash, t.seed).to_json()?,
    )?;
    out.write(
        &format!("{name}.best.ckpt.json"),
        &Checkpoint::new(t.best.clone(), t.config_hash, t.seed).to_json()?,
    )?;
    out.write_json(
        &format!("{name}.log.json"),
        &TrainingLog {
            config_hash: t.config_hash,
            seed: t.seed,
            variant: name,
            train_dataset_hash: t.train_hash,
            best_epoch: t.best_epoch,
            epochs: t.log,
        },
    )
}

fn report_name(report: &EvalReport) -> String {
    format!("{}.{}.report.json", report.mode, report.scorer)
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = config::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

pub fn generate(common: &Common, test_split: Option<TestVariant>) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(t) = test_split {
        cfg.test_split = t;
    }
    let hash = cfg.data_hash()?;
    eprintln!(
        "generating splits (data hash {hash}, seed {})",
        cfg.bias.seed
    );
    let splits = generate_splits(&cfg)?;
    let mut out = OutDir::create(&cfg.out_dir)?;
    let mut files: Vec<(&str, &SplitData)> = vec![("train.jsonl", &splits.train)];
    if let Some(val) = &splits.val {
        files.push(("val.jsonl", val));
    }
    files.push(("test.jsonl", &splits.test));
    for (name, split) in &files {
        out.write(name, &dataset_to_string(&split.header, &split.samples)?)?;
    }
    out.write("config.toml", &config::to_toml(&cfg, &hash, cfg.bias.seed)?)?;
    out.finish(
        "generate",
        RunManifest {
            command: "generate".into(),
            config_hash: hash,
            seed: cfg.bias.seed,
            dataset_hash: Some(splits.test.hash()?),
            bayes_accuracy: None,
            artifacts: Vec::new(),
        },
    )?;
    for (name, split) in &files {
        println!("{name}");
        print!("{}", summarize(&cfg.bias, &split.samples).render());
    }
    Ok(())
}

fn read_split(path: &Path) -> Result<SplitData> {
    let (header, samples) =
        read_dataset(path).with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(SplitData { header, samples })
}

pub fn train(common: &Common, data: &Path, variant: Variant, epochs: Option<usize>) -> Result<()> {
    let mut cfg = config::load(common.config.as_deref())?;
    let train = read_split(&data.join("train.jsonl"))?;
    let val_path = data.join("val.jsonl");
    let val = val_path
        .exists()
        .then(|| read_split(&val_path))
        .transpose()?;
    let test_path = data.join("test.jsonl");
    let test = test_path
        .exists()
        .then(|| read_split(&test_path))
        .transpose()?;

    // The data defines the benchmark; the config supplies model and training.
    cfg.bias = train.header.spec.clone();
    cfg.n_train = train.samples.len();
    cfg.n_val = val.as_ref().map_or(0, |v| v.samples.len());
    if let Some(test) = &test {
        cfg.n_test = test.samples.len();
        cfg.test_split = match test.header.regime {
            LabelRegime::Decorrelated => TestVariant::Decorrelated,
            LabelRegime::AntiCorrelated => TestVariant::AntiCorrelated,
            LabelRegime::Biased => cfg.test_split,
        };
    }
    cfg.train.task = if cfg.bias.multi_label {
        TaskKind::MultiLabel
    } else {
        TaskKind::MultiClass
    };
    cfg.ablations = vec![variant];
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;

    let config_hash = cfg.config_hash()?;
    let seed = cfg.train.seed;
    let t = cfg.train_config(variant);
    eprintln!(
        "training {} for {} epochs (config {config_hash}, seed {seed})",
        variant.name(),
        t.epochs
    );
    let model = build_model(&cfg, variant, &train.samples)?;
    let train_data = TrainData::from_samples(&train.samples, &model, t.task)?;
    let val_data = val
        .as_ref()
        .map(|v| TrainData::from_samples(&v.samples, &model, t.task))
        .transpose()?;
    let outcome = fit(model, &train_data, val_data.as_ref(), &t)?;
    if let Some(last) = outcome.log.last() {
        eprintln!("final epoch loss {:.6}", last.total);
    }

    let train_hash = train.hash()?;
    let mut out = OutDir::create(&cfg.out_dir)?;
    write_trained(
        &mut out,
        &Trained {
            variant,
            config_hash: &config_hash,
            seed,
            train_hash: &train_hash,
            model: &outcome.model,
            best: &outcome.best,
            best_epoch: outcome.best_epoch,
            log: &outcome.log,
        },
    )?;
    out.write(
        &format!("{}.config.toml", variant.name()),
        &config::to_toml(&cfg, &config_hash, seed)?,
    )?;
    out.finish(
        &format!("{}.train", variant.name()),
        RunManifest {
            command: "train".into(),
            config_hash,
            seed,
            dataset_hash: Some(train_hash),
            bayes_accuracy: None,
            artifacts: Vec::new(),
        },
    )
}

pub fn eval(
    checkpoint: &Path,
    data: &Path,
    scorer: Option<Scorer>,
    out: Option<&Path>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let split = read_split(data)?;
    let model = &ckpt.model;
    let spec = &split.header.spec;
    if spec.num_classes != model.num_classes() {
        return Err(ClefError::Validation(format!(
            "checkpoint predicts {} classes but the dataset has {}",
            model.num_classes(),
            spec.num_classes
        ))
        .into());
    }
    if spec.d_s != model.config.subject_dim || spec.d_c != model.config.context_dim {
        return Err(ClefError::Validation(format!(
            "checkpoint expects signal widths {}+{} but the dataset has {}+{}",
            model.config.subject_dim, model.config.context_dim, spec.d_s, spec.d_c
        ))
        .into());
    }
    let variant = Variant::of_model(model);
    let scorer = scorer.unwrap_or(variant.default_scorer());
    let metrics = evaluate_model(model, &split.samples, scorer)?;
    let report = EvalReport::new(
        variant.name(),
        scorer.name(),
        split.samples.len(),
        metrics,
        dataset_hash(&split.header, &split.samples)?,
        ckpt.config_hash.clone(),
        ckpt.seed,
    );
    println!(
        "{} / {}: accuracy {:.4}, mAP {:.4} on {} samples",
        report.mode, report.scorer, report.accuracy, report.map, report.num_samples
    );

    let dir = match out {
        Some(dir) => dir.to_path_buf(),
        None => checkpoint
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };
    let mut out = OutDir::create(&dir)?;
    let name = report_name(&report);
    out.write_json(&name, &report)?;
    out.finish(
        &format!("{}.{}.eval", report.mode, report.scorer),
        RunManifest {
            command: "eval".into(),
            config_hash: report.config_hash.clone(),
            seed: report.seed,
            dataset_hash: Some(report.dataset_hash.clone()),
            bayes_accuracy: None,
            artifacts: Vec::new(),
        },
    )
}

pub fn ablate(
    common: &Common,
    epochs: Option<usize>,
    test_split: Option<TestVariant>,
) -> Result<()> {
    let mut cfg = resolve(common)?;
    if let Some(e) = epochs {
        cfg.train.epochs = e;
    }
    if let Some(t) = test_split {
        cfg.test_split = t;
    }
    cfg.validate()?;
    let config_hash = cfg.config_hash()?;
    let seed = cfg.train.seed;
    let splits = generate_splits(&cfg)?;
    eprintln!(
        "running {} grid cells (config {config_hash}, seed {seed})",
        cfg.ablations.len()
    );
    let grid = run_grid(&cfg, &splits)?;
    eprintln!("grid finished");

    let train_hash = splits.train.hash()?;
    let mut out = OutDir::create(&cfg.out_dir)?;
    for cell in &grid.cells {
        write_trained(
            &mut out,
            &Trained {
                variant: cell.variant,
                config_hash: &config_hash,
                seed,
                train_hash: &train_hash,
                model: &cell.model,
                best: &cell.best,
                best_epoch: cell.best_epoch,
                log: &cell.log,
            },
        )?;
        for report in &cell.reports {
            out.write_json(&report_name(report), report)?;
        }
    }
    if let Some(table) = &grid.comparison {
        out.write("comparison.txt", &table.to_text())?;
        out.write("comparison.csv", &table.to_csv())?;
        out.write_json("comparison.json", table)?;
        print!("{}", table.to_text());
    }
    println!("bayes oracle accuracy {:.4}", grid.bayes_accuracy);
    out.write("config.toml", &config::to_toml(&cfg, &config_hash, seed)?)?;
    out.finish(
        "ablate",
        RunManifest {
            command: "ablate".into(),
            config_hash,
            seed,
            dataset_hash: Some(splits.test.hash()?),
            bayes_accuracy: Some(grid.bayes_accuracy),
            artifacts: Vec::new(),
        },
    )
}
