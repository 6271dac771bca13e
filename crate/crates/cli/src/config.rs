use std::path::Path;

use anyhow::{Context, Result};
use clef_core::synthbench::default_prior_map;
use clef_core::{ExperimentConfig, TestVariant};

/// Reads a TOML config; absent fields keep their defaults. Without an explicit
/// `bias.prior_map` the default map for the configured class and context
/// counts is used.
pub fn load(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let table: toml::Table = toml::from_str(text)?;
    let has_map = table.get("bias").and_then(|b| b.get("prior_map")).is_some();
    let mut cfg: ExperimentConfig = toml::Value::Table(table).try_into()?;
    if !has_map {
        cfg.bias.prior_map = default_prior_map(cfg.bias.num_classes, cfg.bias.num_contexts);
    }
    Ok(cfg)
}

/// The resolved config as written next to run artifacts. The output location
/// is left out so the file does not depend on where the run was placed.
pub fn to_toml(cfg: &ExperimentConfig, config_hash: &str, seed: u64) -> Result<String> {
    let mut view = cfg.clone();
    view.out_dir = Default::default();
    Ok(format!(
        "# config_hash = {config_hash}, seed = {seed}\n{}",
        toml::to_string(&view)?
    ))
}

pub fn parse_test_split(s: &str) -> Result<TestVariant, String> {
    match s {
        "decorrelated" => Ok(TestVariant::Decorrelated),
        "anti_correlated" | "anti-correlated" => Ok(TestVariant::AntiCorrelated),
        _ => Err(format!(
            "unknown test split `{s}` (decorrelated | anti_correlated)"
        )),
    }
}
