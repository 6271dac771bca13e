//! Counterfactual context debiasing for two-branch classifiers: effect
//! calculus, models, a synthetic bias benchmark, training and evaluation.

pub mod causal;
pub mod diffcore;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod synthbench;
pub mod train;

pub use causal::{NoTreatmentEstimator, NoTreatmentKind, ReferenceOutcome, ScoreSet, Scorer};
pub use error::{ClefError, Result};
pub use experiment::{ExperimentConfig, Variant};
pub use metrics::{ComparisonTable, EvalReport};
pub use models::{Checkpoint, ClefModel, ContextInput, Mode, ModelConfig, ModelInputs};
pub use synthbench::{BiasSpec, LabelRegime, SceneSample, Split, TestVariant};
pub use train::{fit, KlDirection, LossBreakdown, TaskKind, TrainConfig, TrainData};
