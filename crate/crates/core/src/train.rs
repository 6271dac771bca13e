//! Task and KL losses, their per-mode combination, and the training loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{fuse_on_tape, fuse_row_on_tape, NoTreatmentKind, DEFAULT_INIT_RANGE};
use crate::diffcore::scalar::{log_softmax, softmax};
use crate::diffcore::{GradientTape, Optimizer, OptimizerConfig, Tensor, Var};
use crate::error::{validation_err, ClefError, Result};
use crate::metrics::evaluate;
use crate::models::{ClefModel, ForwardVars, Mode, ModelInputs};
use crate::synthbench::SceneSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    MultiClass,
    MultiLabel,
}

/// Which distribution plays the target in the KL regularizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(p_factual ‖ q_counterfactual)`.
    FactualTarget,
    /// `KL(q_counterfactual ‖ p_factual)`.
    CounterfactualTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub mode: Mode,
    pub no_treatment: NoTreatmentKind,
    pub task: TaskKind,
    pub kl_weight: f64,
    pub kl_direction: KlDirection,
    /// Range of the uniform initialization of learnable `y_e*`.
    pub init_range: (f64, f64),
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            optimizer: OptimizerConfig::adam(1e-3),
            seed: 0,
            mode: Mode::Clef,
            no_treatment: NoTreatmentKind::LearnableUniform,
            task: TaskKind::MultiClass,
            kl_weight: 1.0,
            kl_direction: KlDirection::FactualTarget,
            init_range: DEFAULT_INIT_RANGE,
        }
    }
}

impl TrainConfig {
    /// Checks ranges. Vanilla mode never reads `y_e*`, so its no-treatment
    /// kind is accepted and ignored.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return validation_err("batch_size must be positive");
        }
        let lr = self.optimizer.lr();
        if !(lr.is_finite() && lr >= 0.0) {
            return validation_err(format!("learning rate {lr} must be finite and ≥ 0"));
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return validation_err(format!(
                "kl_weight {} must be finite and ≥ 0",
                self.kl_weight
            ));
        }
        let (lo, hi) = self.init_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return validation_err(format!("invalid init_range ({lo}, {hi})"));
        }
        Ok(())
    }
}

/// Ground truth for a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes(Vec<usize>),
    LabelSets(Vec<Vec<usize>>),
}

impl Targets {
    pub fn from_samples(samples: &[SceneSample], task: TaskKind) -> Self {
        match task {
            TaskKind::MultiClass => Targets::Classes(samples.iter().map(|s| s.label()).collect()),
            TaskKind::MultiLabel => {
                Targets::LabelSets(samples.iter().map(|s| s.labels.clone()).collect())
            }
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(v) => v.len(),
            Targets::LabelSets(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Targets::Classes(_) => TaskKind::MultiClass,
            Targets::LabelSets(_) => TaskKind::MultiLabel,
        }
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        match self {
            Targets::Classes(v) => Targets::Classes(idx.iter().map(|&i| v[i]).collect()),
            Targets::LabelSets(v) => {
                Targets::LabelSets(idx.iter().map(|&i| v[i].clone()).collect())
            }
        }
    }

    /// Label sets with the primary label first.
    pub fn label_sets(&self) -> Vec<Vec<usize>> {
        match self {
            Targets::Classes(v) => v.iter().map(|&y| vec![y]).collect(),
            Targets::LabelSets(v) => v.clone(),
        }
    }

    fn check(&self, k: usize) -> Result<()> {
        let bad = match self {
            Targets::Classes(v) => v.iter().any(|&y| y >= k),
            Targets::LabelSets(v) => v.iter().flatten().any(|&y| y >= k),
        };
        if bad {
            return validation_err(format!("label out of range for {k} classes"));
        }
        Ok(())
    }
}

/// Batch-mean task loss of `scores` (`[n, K]`) on the tape.
///
/// Multi-class: cross-entropy of `softmax(scores)`. Multi-label: the scores are
/// per-class log-probabilities and the loss is the summed binary NLL with
/// `log(1 − eˢ)` for negatives.
pub fn task_loss_on_tape(tape: &mut GradientTape, scores: Var, targets: &Targets) -> Result<Var> {
    let dims = tape.dims(scores).to_vec();
    let (n, k) = (dims[0], dims[dims.len() - 1]);
    if targets.len() != n {
        return validation_err(format!("{} targets for {n} score rows", targets.len()));
    }
    targets.check(k)?;
    let inv_n = 1.0 / n as f64;
    match targets {
        Targets::Classes(ys) => {
            let lp = tape.log_softmax(scores);
            let mut w = vec![0.0; n * k];
            for (r, &y) in ys.iter().enumerate() {
                w[r * k + y] = -inv_n;
            }
            tape.dot_const(lp, w)
        }
        Targets::LabelSets(sets) => {
            let mut pos = vec![0.0; n * k];
            let mut neg = vec![-inv_n; n * k];
            for (r, ys) in sets.iter().enumerate() {
                for &y in ys {
                    pos[r * k + y] = -inv_n;
                    neg[r * k + y] = 0.0;
                }
            }
            let lneg = tape.log1mexp(scores);
            let a = tape.dot_const(scores, pos)?;
            let b = tape.dot_const(lneg, neg)?;
            tape.add(a, b)
        }
    }
}

/// Batch-mean KL between the class distributions of `factual` (read as a
/// constant) and `counterfactual`. Only `counterfactual` receives gradient.
pub fn kl_loss_on_tape(
    tape: &mut GradientTape,
    counterfactual: Var,
    factual: Var,
    direction: KlDirection,
) -> Result<Var> {
    let k = *tape.dims(factual).last().expect("non-empty dims");
    let fv = tape.value(factual).to_vec();
    let n = fv.len() / k;
    let inv_n = 1.0 / n as f64;
    let lp: Vec<f64> = fv.chunks(k).flat_map(log_softmax).collect();
    let lq = tape.log_softmax(counterfactual);
    match direction {
        KlDirection::FactualTarget => {
            // Σ p (log p − log q) / n, with the Σ p log p part a constant
            let p: Vec<f64> = lp.iter().map(|l| l.exp()).collect();
            let entropy_term: f64 = p
                .iter()
                .zip(&lp)
                .map(|(pi, li)| if *pi > 0.0 { pi * li } else { 0.0 })
                .sum::<f64>()
                * inv_n;
            let cross = tape.dot_const(lq, p.iter().map(|pi| -pi * inv_n).collect())?;
            let c = tape.constant(&Tensor::scalar(entropy_term));
            tape.add(c, cross)
        }
        KlDirection::CounterfactualTarget => {
            let dims = tape.dims(factual).to_vec();
            let lp_var = tape.constant(&Tensor::new(dims, lp)?);
            let q = tape.exp(lq);
            let diff = tape.sub(lq, lp_var)?;
            let terms = tape.mul(q, diff)?;
            let s = tape.sum(terms);
            Ok(tape.scale(s, inv_n))
        }
    }
}

/// Value-level task losses for the factual and counterfactual score rows.
pub fn task_loss(
    factual: &[Vec<f64>],
    counterfactual: &[Vec<f64>],
    targets: &Targets,
) -> Result<(f64, f64)> {
    let mut tape = GradientTape::new();
    let f = tape.constant(&rows_tensor(factual)?);
    let c = tape.constant(&rows_tensor(counterfactual)?);
    let lf = task_loss_on_tape(&mut tape, f, targets)?;
    let lc = task_loss_on_tape(&mut tape, c, targets)?;
    Ok((tape.scalar(lf), tape.scalar(lc)))
}

/// Value-level KL regularizer, batch mean over rows.
pub fn kl_loss(
    counterfactual: &[Vec<f64>],
    factual: &[Vec<f64>],
    direction: KlDirection,
) -> Result<f64> {
    if counterfactual.len() != factual.len() {
        return validation_err("kl_loss: row counts differ");
    }
    let mut total = 0.0;
    for (c, f) in counterfactual.iter().zip(factual) {
        if c.len() != f.len() {
            return validation_err("kl_loss: class counts differ");
        }
        let (lp, lq) = (log_softmax(f), log_softmax(c));
        let (target, other) = match direction {
            KlDirection::FactualTarget => (&lp, &lq),
            KlDirection::CounterfactualTarget => (&lq, &lp),
        };
        let p = softmax(if direction == KlDirection::FactualTarget {
            f
        } else {
            c
        });
        total += p
            .iter()
            .zip(target.iter().zip(other))
            .map(|(pi, (t, o))| if *pi > 0.0 { pi * (t - o) } else { 0.0 })
            .sum::<f64>();
    }
    Ok(total / factual.len() as f64)
}

fn rows_tensor(rows: &[Vec<f64>]) -> Result<Tensor> {
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return validation_err("score rows differ in length");
    }
    Tensor::matrix(rows.len(), k, rows.concat())
}

/// Per-batch loss terms. `total = task_factual + task_counterfactual +
/// kl_weight · kl`, evaluated in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task_factual: f64,
    pub task_counterfactual: f64,
    pub kl: f64,
    pub total: f64,
}

/// Handles of the loss terms recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub forward: ForwardVars,
    pub task_factual: Var,
    pub task_counterfactual: Option<Var>,
    pub kl: Option<Var>,
    pub total: Var,
}

/// Records the forward pass and the mode's loss on `tape`.
///
/// - vanilla: task loss on `y_e` alone
/// - clef: factual + counterfactual task losses + weighted KL
/// - no_kl: factual + counterfactual task losses
/// - te_only: as clef, with the context branch removed (`y_c ≡ 0`)
pub fn final_loss_on_tape(
    tape: &mut GradientTape,
    model: &ClefModel,
    inputs: &ModelInputs,
    targets: &Targets,
    config: &TrainConfig,
) -> Result<(LossVars, LossBreakdown)> {
    if inputs.is_empty() {
        return validation_err("final_loss needs a non-empty batch");
    }
    let f = model.forward(tape, inputs)?;
    let multi_label = targets.task() == TaskKind::MultiLabel;

    let (tf, tcf, kl) = if model.mode == Mode::Vanilla {
        let scores = if multi_label {
            tape.log_sigmoid(f.y_e)
        } else {
            f.y_e
        };
        (task_loss_on_tape(tape, scores, targets)?, None, None)
    } else {
        let factual = fuse_on_tape(tape, f.y_c, f.y_e)?;
        let counterfactual = fuse_row_on_tape(tape, f.y_c, f.y_e_star)?;
        let tf = task_loss_on_tape(tape, factual, targets)?;
        let tcf = task_loss_on_tape(tape, counterfactual, targets)?;
        let kl = if model.mode == Mode::NoKl {
            None
        } else {
            let y_c = tape.detach(f.y_c);
            let gated = fuse_row_on_tape(tape, y_c, f.y_e_star)?;
            let target = tape.detach(factual);
            Some(kl_loss_on_tape(tape, gated, target, config.kl_direction)?)
        };
        (tf, Some(tcf), kl)
    };

    let mut total = tf;
    if let Some(c) = tcf {
        total = tape.add(total, c)?;
    }
    if let Some(k) = kl {
        let weighted = tape.scale(k, config.kl_weight);
        total = tape.add(total, weighted)?;
    }
    let breakdown = LossBreakdown {
        task_factual: tape.scalar(tf),
        task_counterfactual: tcf.map_or(0.0, |v| tape.scalar(v)),
        kl: kl.map_or(0.0, |v| tape.scalar(v)),
        total: tape.scalar(total),
    };
    Ok((
        LossVars {
            forward: f,
            task_factual: tf,
            task_counterfactual: tcf,
            kl,
            total,
        },
        breakdown,
    ))
}

/// Loss breakdown of `model` on a batch without recording gradients.
pub fn final_loss(
    model: &ClefModel,
    inputs: &ModelInputs,
    targets: &Targets,
    config: &TrainConfig,
) -> Result<LossBreakdown> {
    let mut tape = GradientTape::new();
    Ok(final_loss_on_tape(&mut tape, model, inputs, targets, config)?.1)
}

/// Inputs and targets of one split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub inputs: ModelInputs,
    pub targets: Targets,
}

impl TrainData {
    pub fn from_samples(
        samples: &[SceneSample],
        model: &ClefModel,
        task: TaskKind,
    ) -> Result<Self> {
        Ok(Self {
            inputs: ModelInputs::from_samples(samples, model.config.context_input)?,
            targets: Targets::from_samples(samples, task),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub task_factual: f64,
    pub task_counterfactual: f64,
    pub kl: f64,
    pub total: f64,
    /// Validation accuracy (multi-class) or mAP (multi-label) with the mode's
    /// default scorer.
    pub val_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Parameters after the last epoch.
    pub model: ClefModel,
    /// Parameters of the epoch with the best validation metric (the initial
    /// model when no epoch ran or no validation data was given).
    pub best: ClefModel,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

/// Validation metric of `model` under its mode's default scorer.
pub fn validation_metric(model: &ClefModel, data: &TrainData) -> Result<f64> {
    let scorer = model.mode.default_scorer();
    let scores: Vec<Vec<f64>> = model
        .forward_all(&data.inputs)?
        .iter()
        .map(|s| scorer.score(s))
        .collect();
    let m = evaluate(&scores, &data.targets.label_sets(), model.num_classes())?;
    Ok(match data.targets.task() {
        TaskKind::MultiClass => m.accuracy,
        TaskKind::MultiLabel => m.map,
    })
}

const SHUFFLE_STREAM: u64 = 20;

/// Mini-batch training. Deterministic given `config.seed`.
pub fn fit(
    mut model: ClefModel,
    train: &TrainData,
    val: Option<&TrainData>,
    config: &TrainConfig,
) -> Result<FitOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(ClefError::Data("training set is empty".into()));
    }
    if model.mode != config.mode {
        return validation_err(format!(
            "model built for {} but config trains {}",
            model.mode.name(),
            config.mode.name()
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut optimizer = Optimizer::new(config.optimizer);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_metric = f64::NEG_INFINITY;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 3];
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs = train.inputs.select(idx);
            let targets = train.targets.select(idx);
            model.store.zero_grad();
            let mut tape = GradientTape::new();
            let (vars, loss) = final_loss_on_tape(&mut tape, &model, &inputs, &targets, config)?;
            if !loss.total.is_finite() {
                return Err(ClefError::Divergence(format!(
                    "non-finite loss at epoch {epoch}, batch {b}: {loss:?}"
                )));
            }
            tape.backward(vars.total, &mut model.store)?;
            optimizer.step(&mut model.store);
            if !model.store.all_finite() {
                return Err(ClefError::Divergence(format!(
                    "non-finite parameters after epoch {epoch}, batch {b}"
                )));
            }
            let w = idx.len() as f64;
            sums[0] += w * loss.task_factual;
            sums[1] += w * loss.task_counterfactual;
            sums[2] += w * loss.kl;
        }
        let n = train.len() as f64;
        let (tf, tcf, kl) = (sums[0] / n, sums[1] / n, sums[2] / n);
        let val_metric = val.map(|v| validation_metric(&model, v)).transpose()?;
        if let Some(m) = val_metric {
            if m > best_metric {
                best_metric = m;
                best_epoch = epoch;
                best = model.clone();
            }
        } else {
            best_epoch = epoch;
            best = model.clone();
        }
        log.push(EpochRecord {
            epoch,
            task_factual: tf,
            task_counterfactual: tcf,
            kl,
            total: tf + tcf + config.kl_weight * kl,
            val_metric,
        });
    }
    Ok(FitOutcome {
        model,
        best,
        best_epoch,
        log,
    })
}
