//! End-to-end experiment plumbing shared by the CLI and the test suites:
//! configuration, dataset splits, the ablation variants, and grid runs.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::causal::{estimate_no_treatment, NoTreatmentKind, Scorer};
use crate::diffcore::scalar::argmax;
use crate::error::{validation_err, ClefError, Result};
use crate::metrics::{compare_modes, evaluate, ComparisonTable, EvalReport, Metrics};
use crate::models::{ClefModel, ContextInput, Mode, ModelConfig, ModelInputs};
use crate::synthbench::{
    bayes_oracle, dataset_hash, generate_dataset, regime_for, short_hash, BiasSpec, DatasetHeader,
    LabelRegime, Prototypes, SceneSample, Split, TestVariant, DATASET_FORMAT,
    DATASET_FORMAT_VERSION,
};
use crate::train::{fit, EpochRecord, TaskKind, TrainConfig, TrainData};

/// One row of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Vanilla,
    Clef,
    TeOnly,
    NoKl,
    NoMask,
    AvgEmbedding,
    RandomEmbedding,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Vanilla,
        Variant::Clef,
        Variant::TeOnly,
        Variant::NoKl,
        Variant::NoMask,
        Variant::AvgEmbedding,
        Variant::RandomEmbedding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Clef => "clef",
            Variant::TeOnly => "te_only",
            Variant::NoKl => "no_kl",
            Variant::NoMask => "no_mask",
            Variant::AvgEmbedding => "avg_embedding",
            Variant::RandomEmbedding => "random_embedding",
        }
    }

    pub fn mode(self) -> Mode {
        match self {
            Variant::Vanilla => Mode::Vanilla,
            Variant::TeOnly => Mode::TeOnly,
            Variant::NoKl => Mode::NoKl,
            Variant::Clef | Variant::NoMask | Variant::AvgEmbedding | Variant::RandomEmbedding => {
                Mode::Clef
            }
        }
    }

    /// The no-treatment kind this variant forces, if any.
    pub fn no_treatment_override(self) -> Option<NoTreatmentKind> {
        match self {
            Variant::AvgEmbedding => Some(NoTreatmentKind::AveragePrior),
            Variant::RandomEmbedding => Some(NoTreatmentKind::RandomFixed),
            _ => None,
        }
    }

    pub fn context_input(self) -> ContextInput {
        match self {
            Variant::NoMask => ContextInput::Unmasked,
            _ => ContextInput::Masked,
        }
    }

    pub fn default_scorer(self) -> Scorer {
        self.mode().default_scorer()
    }

    /// The variant a trained model was built as.
    pub fn of_model(model: &ClefModel) -> Variant {
        match model.mode {
            Mode::Vanilla => Variant::Vanilla,
            Mode::TeOnly => Variant::TeOnly,
            Mode::NoKl => Variant::NoKl,
            Mode::Clef => match (model.config.context_input, model.no_treatment_kind) {
                (ContextInput::Unmasked, _) => Variant::NoMask,
                (_, NoTreatmentKind::AveragePrior) => Variant::AvgEmbedding,
                (_, NoTreatmentKind::RandomFixed) => Variant::RandomEmbedding,
                _ => Variant::Clef,
            },
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = ClefError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ClefError::Validation(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelWidths {
    pub width: usize,
    pub hidden_layers: usize,
}

impl Default for ModelWidths {
    fn default() -> Self {
        Self {
            width: 32,
            hidden_layers: 2,
        }
    }
}

/// Every field falls back to its default when absent from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub test_split: TestVariant,
    pub ablations: Vec<Variant>,
    pub out_dir: PathBuf,
    pub model: ModelWidths,
    pub bias: BiasSpec,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_train: 6000,
            n_val: 1000,
            n_test: 2000,
            test_split: TestVariant::AntiCorrelated,
            ablations: Variant::ALL.to_vec(),
            out_dir: PathBuf::from("runs"),
            model: ModelWidths::default(),
            bias: BiasSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.bias.validate()?;
        self.train.validate()?;
        if self.n_train == 0 || self.n_test == 0 {
            return validation_err("n_train and n_test must be positive");
        }
        if self.ablations.is_empty() {
            return validation_err("ablation list is empty");
        }
        let task_ml = self.train.task == TaskKind::MultiLabel;
        if task_ml != self.bias.multi_label {
            return validation_err("train.task and bias.multi_label disagree");
        }
        self.model_config(Variant::Clef).validate()
    }

    /// Uses `seed` for data generation and training alike.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.bias.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Short content hash over everything except the output location.
    pub fn config_hash(&self) -> Result<String> {
        let mut view = self.clone();
        view.out_dir = PathBuf::new();
        Ok(short_hash(serde_json::to_string(&view)?.as_bytes()))
    }

    /// Hash of the settings that determine the generated data.
    pub fn data_hash(&self) -> Result<String> {
        let view = (
            &self.bias,
            self.n_train,
            self.n_val,
            self.n_test,
            self.test_split,
        );
        Ok(short_hash(serde_json::to_string(&view)?.as_bytes()))
    }

    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        ModelConfig {
            subject_dim: self.bias.d_s,
            context_dim: self.bias.d_c,
            num_classes: self.bias.num_classes,
            width: self.model.width,
            hidden_layers: self.model.hidden_layers,
            context_input: variant.context_input(),
        }
    }

    pub fn train_config(&self, variant: Variant) -> TrainConfig {
        let mut t = self.train.clone();
        t.mode = variant.mode();
        if let Some(kind) = variant.no_treatment_override() {
            t.no_treatment = kind;
        }
        t
    }

    pub fn test_regime(&self) -> LabelRegime {
        regime_for(Split::Test, self.test_split)
    }
}

/// One generated split plus its header.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub header: DatasetHeader,
    pub samples: Vec<SceneSample>,
}

impl SplitData {
    pub fn hash(&self) -> Result<String> {
        dataset_hash(&self.header, &self.samples)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: SplitData,
    pub val: Option<SplitData>,
    pub test: SplitData,
}

fn make_split(cfg: &ExperimentConfig, n: usize, split: Split, hash: &str) -> Result<SplitData> {
    let regime = regime_for(split, cfg.test_split);
    let samples = generate_dataset(&cfg.bias, n, split, regime)?;
    Ok(SplitData {
        header: DatasetHeader {
            format: DATASET_FORMAT.into(),
            format_version: DATASET_FORMAT_VERSION,
            split,
            regime,
            count: n,
            config_hash: hash.into(),
            seed: cfg.bias.seed,
            spec: cfg.bias.clone(),
        },
        samples,
    })
}

pub fn generate_splits(cfg: &ExperimentConfig) -> Result<Splits> {
    cfg.validate()?;
    let hash = cfg.data_hash()?;
    Ok(Splits {
        train: make_split(cfg, cfg.n_train, Split::Train, &hash)?,
        val: if cfg.n_val > 0 {
            Some(make_split(cfg, cfg.n_val, Split::Val, &hash)?)
        } else {
            None
        },
        test: make_split(cfg, cfg.n_test, Split::Test, &hash)?,
    })
}

/// Initial model of `variant`; the average-prior no-treatment vector is read
/// from `train`.
pub fn build_model(
    cfg: &ExperimentConfig,
    variant: Variant,
    train: &[SceneSample],
) -> Result<ClefModel> {
    let t = cfg.train_config(variant);
    let est = estimate_no_treatment(
        t.no_treatment,
        cfg.bias.num_classes,
        t.init_range,
        train.iter().flat_map(|s| s.labels.iter().copied()),
        t.seed,
    )?;
    ClefModel::new(cfg.model_config(variant), t.mode, &est, t.seed)
}

/// Everything one grid cell produces.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub variant: Variant,
    pub model: ClefModel,
    pub best: ClefModel,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    /// One report per scorer, in [`Scorer::ALL`] order.
    pub reports: Vec<EvalReport>,
}

impl CellResult {
    pub fn report(&self, scorer: Scorer) -> &EvalReport {
        self.reports
            .iter()
            .find(|r| r.scorer == scorer.name())
            .expect("every scorer is evaluated")
    }

    pub fn default_report(&self) -> &EvalReport {
        self.report(self.variant.default_scorer())
    }
}

/// Scores of `model` on `samples` under `scorer`.
pub fn score_samples(
    model: &ClefModel,
    samples: &[SceneSample],
    scorer: Scorer,
) -> Result<Vec<Vec<f64>>> {
    let inputs = ModelInputs::from_samples(samples, model.config.context_input)?;
    Ok(model
        .forward_all(&inputs)?
        .iter()
        .map(|s| scorer.score(s))
        .collect())
}

pub fn evaluate_model(
    model: &ClefModel,
    samples: &[SceneSample],
    scorer: Scorer,
) -> Result<Metrics> {
    let scores = score_samples(model, samples, scorer)?;
    let labels: Vec<Vec<usize>> = samples.iter().map(|s| s.labels.clone()).collect();
    evaluate(&scores, &labels, model.num_classes())
}

/// Trains `variant` on the shared splits and evaluates the final model on the
/// test split with every scorer.
pub fn run_cell(cfg: &ExperimentConfig, variant: Variant, splits: &Splits) -> Result<CellResult> {
    let config_hash = cfg.config_hash()?;
    let dataset_hash = splits.test.hash()?;
    let model = build_model(cfg, variant, &splits.train.samples)?;
    let t = cfg.train_config(variant);
    let train = TrainData::from_samples(&splits.train.samples, &model, t.task)?;
    let val = splits
        .val
        .as_ref()
        .map(|v| TrainData::from_samples(&v.samples, &model, t.task))
        .transpose()?;
    let out = fit(model, &train, val.as_ref(), &t)?;

    let inputs = ModelInputs::from_samples(&splits.test.samples, out.model.config.context_input)?;
    let sets = out.model.forward_all(&inputs)?;
    let labels: Vec<Vec<usize>> = splits
        .test
        .samples
        .iter()
        .map(|s| s.labels.clone())
        .collect();
    let reports = Scorer::ALL
        .into_iter()
        .map(|scorer| {
            let scores: Vec<Vec<f64>> = sets.iter().map(|s| scorer.score(s)).collect();
            let metrics = evaluate(&scores, &labels, cfg.bias.num_classes)?;
            Ok(EvalReport::new(
                variant.name(),
                scorer.name(),
                labels.len(),
                metrics,
                dataset_hash.clone(),
                config_hash.clone(),
                t.seed,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellResult {
        variant,
        model: out.model,
        best: out.best,
        best_epoch: out.best_epoch,
        log: out.log,
        reports,
    })
}

/// Accuracy of the exact posterior's argmax (top-1 hit in multi-label sets).
pub fn bayes_accuracy(
    spec: &BiasSpec,
    samples: &[SceneSample],
    regime: LabelRegime,
) -> Result<f64> {
    if samples.is_empty() {
        return validation_err("bayes accuracy of an empty set");
    }
    let protos = Prototypes::from_spec(spec);
    let hits = samples
        .iter()
        .filter(|s| {
            s.labels
                .contains(&argmax(&bayes_oracle(spec, &protos, s, regime)))
        })
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub config_hash: String,
    pub seed: u64,
    pub cells: Vec<CellResult>,
    pub bayes_accuracy: f64,
    /// Default-scorer report of every cell against vanilla; `None` when the
    /// grid has no vanilla cell.
    pub comparison: Option<ComparisonTable>,
}

impl GridResult {
    pub fn cell(&self, variant: Variant) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.variant == variant)
    }
}

/// Runs every configured variant on shared data. Cells train in parallel;
/// each cell is single-threaded, so results do not depend on scheduling.
pub fn run_grid(cfg: &ExperimentConfig, splits: &Splits) -> Result<GridResult> {
    cfg.validate()?;
    let cells = cfg
        .ablations
        .par_iter()
        .map(|&v| run_cell(cfg, v, splits))
        .collect::<Result<Vec<_>>>()?;
    let defaults: Vec<EvalReport> = cells.iter().map(|c| c.default_report().clone()).collect();
    let comparison = if cfg.ablations.contains(&Variant::Vanilla) {
        Some(compare_modes(&defaults)?)
    } else {
        None
    };
    Ok(GridResult {
        config_hash: cfg.config_hash()?,
        seed: cfg.train.seed,
        cells,
        bayes_accuracy: bayes_accuracy(&cfg.bias, &splits.test.samples, cfg.test_regime())?,
        comparison,
    })
}
