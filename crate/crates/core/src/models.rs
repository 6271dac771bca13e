//! The two computation paths and the wrapper that combines them.
//!
//! [`EnsembleModel`] is the ordinary classifier over subject and context
//! features. [`ContextBranch`] sees only the masked scene vector and learns the
//! direct context→label shortcut. [`ClefModel`] owns both, the no-treatment
//! scores `y_e*`, and every parameter in one [`ParamStore`].

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::causal::{NoTreatmentEstimator, NoTreatmentKind, ScoreSet, Scorer};
use crate::diffcore::{Activation, DenseLayer, GradientTape, ParamId, ParamStore, Tensor, Var};
use crate::error::{shape_err, validation_err, ClefError, Result};
use crate::synthbench::{mask_features, scene_features, SceneSample};

/// What the context branch is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextInput {
    /// `[0…0 | context]`: subject slots zeroed.
    Masked,
    /// `[subject | context]`, the no-masking ablation.
    Unmasked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub subject_dim: usize,
    pub context_dim: usize,
    pub num_classes: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    /// Hidden relu layers per encoder.
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_context_input")]
    pub context_input: ContextInput,
}

fn default_width() -> usize {
    32
}

fn default_hidden_layers() -> usize {
    2
}

fn default_context_input() -> ContextInput {
    ContextInput::Masked
}

impl ModelConfig {
    pub fn new(subject_dim: usize, context_dim: usize, num_classes: usize) -> Self {
        Self {
            subject_dim,
            context_dim,
            num_classes,
            width: default_width(),
            hidden_layers: default_hidden_layers(),
            context_input: ContextInput::Masked,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subject_dim == 0 || self.context_dim == 0 || self.width == 0 {
            return validation_err("model dimensions must be positive");
        }
        if self.num_classes < 2 {
            return validation_err(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.hidden_layers == 0 {
            return validation_err("encoders need at least one hidden layer");
        }
        Ok(())
    }

    /// Width of the scene vector fed to the context branch.
    pub fn branch_input_dim(&self) -> usize {
        self.subject_dim + self.context_dim
    }

    /// Width the context-branch encoder consumes: the context features alone
    /// once the (zeroed) subject slots are dropped, or the whole scene vector
    /// when masking is off.
    pub fn branch_encoder_dim(&self) -> usize {
        match self.context_input {
            ContextInput::Masked => self.context_dim,
            ContextInput::Unmasked => self.branch_input_dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Clef,
    Vanilla,
    TeOnly,
    NoKl,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Clef, Mode::Vanilla, Mode::TeOnly, Mode::NoKl];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Clef => "clef",
            Mode::Vanilla => "vanilla",
            Mode::TeOnly => "te_only",
            Mode::NoKl => "no_kl",
        }
    }

    /// Scorer used for predictions: the plain classifier output in vanilla
    /// mode, the indirect effect otherwise.
    pub fn default_scorer(self) -> Scorer {
        match self {
            Mode::Vanilla => Scorer::EnsembleOnly,
            _ => Scorer::Tie,
        }
    }

    /// Whether the context branch takes part in the forward pass.
    pub fn uses_context_branch(self) -> bool {
        matches!(self, Mode::Clef | Mode::NoKl)
    }
}

impl std::str::FromStr for Mode {
    type Err = ClefError;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| ClefError::Validation(format!("unknown mode `{s}`")))
    }
}

/// Hidden relu layers followed by a linear projection to `width`.
fn init_encoder(
    store: &mut ParamStore,
    name: &str,
    in_dim: usize,
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<DenseLayer> {
    let mut layers = Vec::with_capacity(cfg.hidden_layers + 1);
    let mut d = in_dim;
    for i in 0..cfg.hidden_layers {
        layers.push(DenseLayer::init(
            store,
            &format!("{name}.{i}"),
            d,
            cfg.width,
            Activation::Relu,
            rng,
        ));
        d = cfg.width;
    }
    layers.push(DenseLayer::init(
        store,
        &format!("{name}.{}", cfg.hidden_layers),
        d,
        cfg.width,
        Activation::Identity,
        rng,
    ));
    layers
}

fn run_stack(
    tape: &mut GradientTape,
    store: &ParamStore,
    layers: &[DenseLayer],
    mut x: Var,
) -> Result<Var> {
    for layer in layers {
        x = layer.forward(tape, store, x)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBranch {
    pub encoder: Vec<DenseLayer>,
    pub head: DenseLayer,
}

impl ContextBranch {
    fn init(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let encoder = init_encoder(store, "context_branch", cfg.branch_encoder_dim(), cfg, rng);
        let head = DenseLayer::init(
            store,
            "context_branch.head",
            cfg.width,
            cfg.num_classes,
            Activation::Identity,
            rng,
        );
        Self { encoder, head }
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.encoder.iter().chain(std::iter::once(&self.head))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub subject_encoder: Vec<DenseLayer>,
    pub context_encoder: Vec<DenseLayer>,
    /// Dense layers over `[c | s]` producing the ensemble representation `e`.
    pub fusion: Vec<DenseLayer>,
    pub head: DenseLayer,
}

impl EnsembleModel {
    fn init(store: &mut ParamStore, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let subject_encoder = init_encoder(store, "subject_encoder", cfg.subject_dim, cfg, rng);
        let context_encoder = init_encoder(store, "context_encoder", cfg.context_dim, cfg, rng);
        let fusion = vec![DenseLayer::init(
            store,
            "fusion.0",
            2 * cfg.width,
            cfg.width,
            Activation::Relu,
            rng,
        )];
        let head = DenseLayer::init(
            store,
            "head",
            cfg.width,
            cfg.num_classes,
            Activation::Identity,
            rng,
        );
        Self {
            subject_encoder,
            context_encoder,
            fusion,
            head,
        }
    }

    fn layers(&self) -> impl Iterator<Item = &DenseLayer> {
        self.subject_encoder
            .iter()
            .chain(&self.context_encoder)
            .chain(&self.fusion)
            .chain(std::iter::once(&self.head))
    }
}

/// Batched model inputs, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInputs {
    pub subject: Tensor,
    pub context: Tensor,
    /// Context-branch input in the `[subject | context]` layout.
    pub branch: Tensor,
}

impl ModelInputs {
    pub fn from_samples(samples: &[SceneSample], input: ContextInput) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| ClefError::Data("cannot build inputs from zero samples".into()))?;
        let (ds, dc) = (first.subject_signal.len(), first.context_signal.len());
        let n = samples.len();
        let mut subject = Vec::with_capacity(n * ds);
        let mut context = Vec::with_capacity(n * dc);
        let mut branch = Vec::with_capacity(n * (ds + dc));
        for s in samples {
            if s.subject_signal.len() != ds || s.context_signal.len() != dc {
                return shape_err("samples have inconsistent signal widths");
            }
            subject.extend_from_slice(&s.subject_signal);
            context.extend_from_slice(&s.context_signal);
            branch.extend(match input {
                ContextInput::Masked => mask_features(s),
                ContextInput::Unmasked => scene_features(s),
            });
        }
        Ok(Self {
            subject: Tensor::matrix(n, ds, subject)?,
            context: Tensor::matrix(n, dc, context)?,
            branch: Tensor::matrix(n, ds + dc, branch)?,
        })
    }

    pub fn len(&self) -> usize {
        self.subject.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            subject: select_rows(&self.subject, idx),
            context: select_rows(&self.context, idx),
            branch: select_rows(&self.branch, idx),
        }
    }
}

fn select_rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let w = t.last_dim();
    let mut values = Vec::with_capacity(idx.len() * w);
    for &i in idx {
        values.extend_from_slice(t.row(i));
    }
    Tensor::matrix(idx.len(), w, values).expect("selected rows keep their width")
}

/// Tape handles produced by one forward pass of [`ClefModel`].
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    /// `[n, K]`; constant zeros when the mode has no context branch.
    pub y_c: Var,
    /// Ensemble representation `[n, width]`.
    pub e: Var,
    pub y_e: Var,
    /// The shared `[K]` no-treatment row.
    pub y_e_star: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClefModel {
    pub config: ModelConfig,
    pub mode: Mode,
    pub no_treatment_kind: NoTreatmentKind,
    pub ensemble: EnsembleModel,
    pub context_branch: ContextBranch,
    pub y_e_star: ParamId,
    pub store: ParamStore,
}

/// Seed stream offsets so each component draws independently of the others.
const ENSEMBLE_STREAM: u64 = 10;
const BRANCH_STREAM: u64 = 11;

impl ClefModel {
    /// Seeded initialization. The ensemble's initial weights depend only on
    /// `(config, seed)`, so every mode starts from the same classifier.
    pub fn new(
        config: ModelConfig,
        mode: Mode,
        no_treatment: &NoTreatmentEstimator,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if no_treatment.logits.len() != config.num_classes {
            return shape_err(format!(
                "no-treatment vector has {} classes, model has {}",
                no_treatment.logits.len(),
                config.num_classes
            ));
        }
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ENSEMBLE_STREAM);
        let ensemble = EnsembleModel::init(&mut store, &config, &mut rng);
        rng.set_stream(BRANCH_STREAM);
        rng.set_word_pos(0);
        let context_branch = ContextBranch::init(&mut store, &config, &mut rng);
        let y_e_star = store.insert(
            "y_e_star",
            Tensor::vector(no_treatment.logits.clone()).with_grad(),
        );

        let mut model = Self {
            config,
            mode,
            no_treatment_kind: no_treatment.kind,
            ensemble,
            context_branch,
            y_e_star,
            store,
        };
        model.apply_trainability();
        Ok(model)
    }

    /// Freezes what the mode does not train: the context branch outside
    /// clef/no_kl, `y_e*` in vanilla mode or when it is a fixed vector.
    fn apply_trainability(&mut self) {
        let branch_on = self.mode.uses_context_branch();
        let ids: Vec<ParamId> = self
            .context_branch
            .layers()
            .flat_map(|l| [l.weight, l.bias])
            .collect();
        for id in ids {
            self.store.get_mut(id).set_requires_grad(branch_on);
        }
        let star_on = self.mode != Mode::Vanilla && self.no_treatment_kind.is_trainable();
        self.store.get_mut(self.y_e_star).set_requires_grad(star_on);
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    pub fn no_treatment_logits(&self) -> &[f64] {
        self.store.get(self.y_e_star).values()
    }

    /// Context branch on the scene vector `[n, d_s + d_c]`. In masked mode the
    /// subject slots must be zero and are dropped, so the encoder reads context
    /// features only. The input is data: no gradient flows back into it.
    pub fn forward_context(&self, tape: &mut GradientTape, branch_input: Var) -> Result<Var> {
        let dims = tape.dims(branch_input).to_vec();
        if dims.len() != 2 || dims[1] != self.config.branch_input_dim() {
            return shape_err(format!(
                "context branch expects [n, {}], got {dims:?}",
                self.config.branch_input_dim()
            ));
        }
        let x = if self.config.context_input == ContextInput::Masked {
            let (w, ds) = (dims[1], self.config.subject_dim);
            let rows = tape.value(branch_input).chunks(w);
            if rows.clone().any(|row| row[..ds].iter().any(|&v| v != 0.0)) {
                return Err(ClefError::Contract(
                    "context branch received non-zero subject slots; mask the input first".into(),
                ));
            }
            let context: Vec<f64> = rows.flat_map(|row| row[ds..].iter().copied()).collect();
            tape.constant_from(vec![dims[0], w - ds], context)?
        } else {
            branch_input
        };
        let h = run_stack(tape, &self.store, &self.context_branch.encoder, x)?;
        self.context_branch.head.forward(tape, &self.store, h)
    }

    /// Ensemble classifier; returns `(e, y_e)`.
    pub fn forward_ensemble(
        &self,
        tape: &mut GradientTape,
        subject: Var,
        context: Var,
    ) -> Result<(Var, Var)> {
        let (sd, cd) = (tape.dims(subject).to_vec(), tape.dims(context).to_vec());
        if sd.len() != 2 || sd[1] != self.config.subject_dim {
            return shape_err(format!(
                "subject input must be [n, {}], got {sd:?}",
                self.config.subject_dim
            ));
        }
        if cd.len() != 2 || cd[1] != self.config.context_dim || cd[0] != sd[0] {
            return shape_err(format!(
                "context input must be [{}, {}], got {cd:?}",
                sd[0], self.config.context_dim
            ));
        }
        let s = run_stack(tape, &self.store, &self.ensemble.subject_encoder, subject)?;
        let c = run_stack(tape, &self.store, &self.ensemble.context_encoder, context)?;
        let cs = tape.concat(c, s)?;
        let e = run_stack(tape, &self.store, &self.ensemble.fusion, cs)?;
        let y_e = self.ensemble.head.forward(tape, &self.store, e)?;
        Ok((e, y_e))
    }

    /// Full forward pass recorded on `tape`.
    pub fn forward(&self, tape: &mut GradientTape, inputs: &ModelInputs) -> Result<ForwardVars> {
        let subject = tape.constant(&inputs.subject);
        let context = tape.constant(&inputs.context);
        let (e, y_e) = self.forward_ensemble(tape, subject, context)?;
        let y_c = if self.mode.uses_context_branch() {
            let branch = tape.constant(&inputs.branch);
            self.forward_context(tape, branch)?
        } else {
            let n = inputs.len();
            tape.constant(&Tensor::zeros(vec![n, self.config.num_classes]))
        };
        let y_e_star = tape.param(&self.store, self.y_e_star);
        Ok(ForwardVars {
            y_c,
            e,
            y_e,
            y_e_star,
        })
    }

    /// Per-sample score sets, ready for any [`crate::causal::Scorer`].
    pub fn forward_all(&self, inputs: &ModelInputs) -> Result<Vec<ScoreSet>> {
        let mut tape = GradientTape::new();
        let f = self.forward(&mut tape, inputs)?;
        let k = self.config.num_classes;
        let star = tape.value(f.y_e_star).to_vec();
        tape.value(f.y_c)
            .chunks(k)
            .zip(tape.value(f.y_e).chunks(k))
            .map(|(c, e)| ScoreSet::new(c.to_vec(), e.to_vec(), star.clone()))
            .collect()
    }

    /// `(e, y_e)` as plain tensors.
    pub fn ensemble_outputs(&self, inputs: &ModelInputs) -> Result<(Tensor, Tensor)> {
        let mut tape = GradientTape::new();
        let s = tape.constant(&inputs.subject);
        let c = tape.constant(&inputs.context);
        let (e, y_e) = self.forward_ensemble(&mut tape, s, c)?;
        Ok((tape.tensor(e), tape.tensor(y_e)))
    }

    /// Context-branch scores as a plain tensor.
    pub fn context_outputs(&self, inputs: &ModelInputs) -> Result<Tensor> {
        let mut tape = GradientTape::new();
        let b = tape.constant(&inputs.branch);
        let y_c = self.forward_context(&mut tape, b)?;
        Ok(tape.tensor(y_c))
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        for layer in self.ensemble.layers().chain(self.context_branch.layers()) {
            layer.check(&self.store)?;
        }
        let star = self.store.get(self.y_e_star);
        if star.dims() != [self.config.num_classes] {
            return shape_err("checkpoint no-treatment vector has the wrong length");
        }
        Ok(())
    }
}

pub const CHECKPOINT_FORMAT: &str = "clef-checkpoint";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub model: ClefModel,
}

impl Checkpoint {
    pub fn new(model: ClefModel, config_hash: impl Into<String>, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            format_version: CHECKPOINT_FORMAT_VERSION,
            config_hash: config_hash.into(),
            seed,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.format_version != CHECKPOINT_FORMAT_VERSION {
            return validation_err(format!(
                "unsupported checkpoint format {} v{}",
                ckpt.format, ckpt.format_version
            ));
        }
        ckpt.model.check()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
