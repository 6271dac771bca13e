//! Counterfactual effect calculus over two-branch class scores.
//!
//! A sample is scored by a context-only branch (`y_c`) and by the ensemble
//! model (`y_e`). Scores are combined with `φ(a, b) = log σ(a + b)`:
//!
//! - factual outcome `Y_{c,e} = φ(y_c, y_e)`
//! - counterfactual outcome `Y_{c,e*} = φ(y_c, y_e*)`, where the ensemble path
//!   is blocked and replaced by the shared no-treatment scores `y_e*`
//! - `TE = Y_{c,e} − Y_{c*,e*}`, `NDE = Y_{c,e*} − Y_{c*,e*}`
//! - `TIE = TE − NDE = Y_{c,e} − Y_{c,e*}`
//!
//! TIE is the debiased prediction: the direct context contribution carried by
//! `y_c` is present in both outcomes and largely cancels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::diffcore::scalar::{argmax, log_sigmoid};
use crate::diffcore::{GradientTape, Var};
use crate::error::{shape_err, validation_err, ClefError, Result};

/// Per-class scores of one sample from both branches plus the no-treatment
/// scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub y_c: Vec<f64>,
    pub y_e: Vec<f64>,
    pub y_e_star: Vec<f64>,
}

impl ScoreSet {
    pub fn new(y_c: Vec<f64>, y_e: Vec<f64>, y_e_star: Vec<f64>) -> Result<Self> {
        let k = y_c.len();
        if y_e.len() != k || y_e_star.len() != k {
            return shape_err(format!(
                "score vectors have lengths {}, {}, {}",
                k,
                y_e.len(),
                y_e_star.len()
            ));
        }
        if k == 0 {
            return shape_err("score vectors are empty");
        }
        if [&y_c, &y_e, &y_e_star]
            .iter()
            .any(|v| v.iter().any(|x| !x.is_finite()))
        {
            return validation_err("score vectors must be finite");
        }
        Ok(Self { y_c, y_e, y_e_star })
    }

    pub fn num_classes(&self) -> usize {
        self.y_c.len()
    }
}

/// Factual/counterfactual outcomes and the three effects for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalEffects {
    pub factual: Vec<f64>,
    pub counterfactual: Vec<f64>,
    pub te: Vec<f64>,
    pub nde: Vec<f64>,
    pub tie: Vec<f64>,
}

/// The fully untreated outcome `Y_{c*,e*}`, materialized so TE and NDE can be
/// inspected. Always class-uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOutcome {
    y_ref: Vec<f64>,
}

impl ReferenceOutcome {
    /// Constant vector `value` over `k` classes.
    pub fn uniform(value: f64, k: usize) -> Self {
        Self {
            y_ref: vec![value; k],
        }
    }

    /// `φ(u, u)` with `u` the mean of the no-treatment logits.
    pub fn from_no_treatment(logits: &[f64]) -> Self {
        let u = logits.iter().sum::<f64>() / logits.len() as f64;
        Self::uniform(log_sigmoid(u + u), logits.len())
    }

    pub fn values(&self) -> &[f64] {
        &self.y_ref
    }
}

/// `φ(a, b) = log σ(a + b)` elementwise.
pub fn fuse(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return shape_err(format!("fuse: lengths {} and {}", a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| log_sigmoid(x + y)).collect())
}

/// Differentiable `φ` for two same-shape score batches.
pub fn fuse_on_tape(tape: &mut GradientTape, a: Var, b: Var) -> Result<Var> {
    let sum = tape.add(a, b)?;
    Ok(tape.log_sigmoid(sum))
}

/// Differentiable `φ(a, row)` with one shared score row broadcast over the
/// batch `a`.
pub fn fuse_row_on_tape(tape: &mut GradientTape, a: Var, row: Var) -> Result<Var> {
    let sum = tape.add_row(a, row)?;
    Ok(tape.log_sigmoid(sum))
}

pub fn factual_score(s: &ScoreSet) -> Vec<f64> {
    fuse(&s.y_c, &s.y_e).expect("ScoreSet lengths agree")
}

/// `φ(y_c, y_e*)`; does not read `y_e`.
pub fn counterfactual_score(s: &ScoreSet) -> Vec<f64> {
    fuse(&s.y_c, &s.y_e_star).expect("ScoreSet lengths agree")
}

pub fn compute_effects(s: &ScoreSet, reference: &ReferenceOutcome) -> Result<CausalEffects> {
    let k = s.num_classes();
    if reference.y_ref.len() != k {
        return shape_err(format!(
            "reference has {} classes, scores have {k}",
            reference.y_ref.len()
        ));
    }
    let factual = factual_score(s);
    let counterfactual = counterfactual_score(s);
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
    Ok(CausalEffects {
        te: diff(&factual, &reference.y_ref),
        nde: diff(&counterfactual, &reference.y_ref),
        tie: diff(&factual, &counterfactual),
        factual,
        counterfactual,
    })
}

/// Debiased per-class scores `φ(y_c, y_e) − φ(y_c, y_e*)`.
pub fn predict_tie(s: &ScoreSet) -> Vec<f64> {
    factual_score(s)
        .iter()
        .zip(counterfactual_score(s))
        .map(|(f, c)| f - c)
        .collect()
}

/// Multi-class decision: `argmax TIE`.
pub fn predict_tie_class(s: &ScoreSet) -> usize {
    argmax(&predict_tie(s))
}

/// How class scores are read out of a [`ScoreSet`] at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// `φ(y_c, y_e) − φ(y_c, y_e*)`.
    Tie,
    /// `φ(y_c, y_e)`.
    Factual,
    /// `φ(y_c, y_e) − Y_{c*,e*}`; ranks like `Factual` since the reference is
    /// class-uniform.
    Te,
    /// Context branch alone (`y_c`), the pure-bias probe.
    ContextOnly,
    /// Ensemble model alone (`y_e`), i.e. the vanilla classifier.
    EnsembleOnly,
}

impl Scorer {
    pub const ALL: [Scorer; 5] = [
        Scorer::Tie,
        Scorer::Factual,
        Scorer::Te,
        Scorer::ContextOnly,
        Scorer::EnsembleOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scorer::Tie => "tie",
            Scorer::Factual => "factual",
            Scorer::Te => "te",
            Scorer::ContextOnly => "context_only",
            Scorer::EnsembleOnly => "ensemble_only",
        }
    }

    pub fn score(self, s: &ScoreSet) -> Vec<f64> {
        match self {
            Scorer::Tie => predict_tie(s),
            Scorer::Factual => factual_score(s),
            Scorer::Te => {
                let reference = ReferenceOutcome::from_no_treatment(&s.y_e_star);
                compute_effects(s, &reference)
                    .expect("reference sized from the same scores")
                    .te
            }
            Scorer::ContextOnly => s.y_c.clone(),
            Scorer::EnsembleOnly => s.y_e.clone(),
        }
    }
}

impl std::str::FromStr for Scorer {
    type Err = ClefError;

    fn from_str(s: &str) -> Result<Self> {
        Scorer::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| ClefError::Validation(format!("unknown scorer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoTreatmentKind {
    /// Trainable, initialized i.i.d. from `Uniform(init_range)`.
    LearnableUniform,
    /// Frozen log class frequencies of the training split.
    AveragePrior,
    /// Frozen seeded standard-normal draw.
    RandomFixed,
}

impl NoTreatmentKind {
    pub fn is_trainable(self) -> bool {
        matches!(self, NoTreatmentKind::LearnableUniform)
    }
}

/// Default `init_range` for [`NoTreatmentKind::LearnableUniform`].
pub const DEFAULT_INIT_RANGE: (f64, f64) = (-0.01, 0.01);

/// The shared no-treatment scores `y_e*`, one vector for every sample of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoTreatmentEstimator {
    pub kind: NoTreatmentKind,
    pub logits: Vec<f64>,
    pub init_range: (f64, f64),
    pub seed: u64,
}

impl NoTreatmentEstimator {
    pub fn learnable_uniform(k: usize, init_range: (f64, f64), seed: u64) -> Result<Self> {
        check_classes(k)?;
        let (lo, hi) = init_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return validation_err(format!("invalid init range ({lo}, {hi})"));
        }
        let logits = if lo == hi {
            vec![lo; k]
        } else {
            let dist = Uniform::new(lo, hi).map_err(|e| ClefError::Validation(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..k).map(|_| dist.sample(&mut rng)).collect()
        };
        Ok(Self {
            kind: NoTreatmentKind::LearnableUniform,
            logits,
            init_range,
            seed,
        })
    }

    /// Log of the empirical class frequencies among `labels` (one entry per
    /// label occurrence).
    pub fn average_prior(k: usize, labels: impl IntoIterator<Item = usize>) -> Result<Self> {
        check_classes(k)?;
        let mut counts = vec![0usize; k];
        let mut total = 0usize;
        for y in labels {
            if y >= k {
                return validation_err(format!("label {y} out of range for {k} classes"));
            }
            counts[y] += 1;
            total += 1;
        }
        if total == 0 {
            return Err(ClefError::Data(
                "average prior needs a non-empty training set".into(),
            ));
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(ClefError::Data(format!(
                "class {missing} never occurs in the training set; its log prior is undefined"
            )));
        }
        Ok(Self {
            kind: NoTreatmentKind::AveragePrior,
            logits: counts
                .iter()
                .map(|&c| (c as f64 / total as f64).ln())
                .collect(),
            init_range: DEFAULT_INIT_RANGE,
            seed: 0,
        })
    }

    pub fn random_fixed(k: usize, seed: u64) -> Result<Self> {
        check_classes(k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            kind: NoTreatmentKind::RandomFixed,
            logits: (0..k).map(|_| StandardNormal.sample(&mut rng)).collect(),
            init_range: DEFAULT_INIT_RANGE,
            seed,
        })
    }
}

/// Builds the no-treatment estimator of the requested kind. `train_labels` is
/// only read for [`NoTreatmentKind::AveragePrior`].
pub fn estimate_no_treatment(
    kind: NoTreatmentKind,
    k: usize,
    init_range: (f64, f64),
    train_labels: impl IntoIterator<Item = usize>,
    seed: u64,
) -> Result<NoTreatmentEstimator> {
    match kind {
        NoTreatmentKind::LearnableUniform => {
            NoTreatmentEstimator::learnable_uniform(k, init_range, seed)
        }
        NoTreatmentKind::AveragePrior => NoTreatmentEstimator::average_prior(k, train_labels),
        NoTreatmentKind::RandomFixed => NoTreatmentEstimator::random_fixed(k, seed),
    }
}

fn check_classes(k: usize) -> Result<()> {
    if k < 2 {
        return validation_err(format!("need at least 2 classes, got {k}"));
    }
    Ok(())
}
