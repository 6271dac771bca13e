//! Synthetic scenes with a controllable spurious context–label correlation.
//!
//! Each context type `t` has an admissible label subset (the informative
//! context prior) and one preferred label inside it (the shortcut). Training
//! labels are the preferred label with probability `beta` and otherwise uniform
//! over the admissible subset. Test labels ignore the preference
//! (decorrelated) or exclude the preferred label outright (anti-correlated).
//!
//! Observations are Gaussian around fixed seeded prototypes: the subject signal
//! around the label prototype, the context signal around the context-type
//! prototype. Occluded samples carry an all-zero subject signal.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{validation_err, ClefError, Result};

/// Admissible labels for one context type and its preferred (shortcut) label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPrior {
    pub admissible: Vec<usize>,
    pub preferred: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasSpec {
    pub num_classes: usize,
    pub num_contexts: usize,
    pub beta: f64,
    pub prior_map: Vec<ContextPrior>,
    pub occlusion_rate: f64,
    pub sigma_s: f64,
    pub sigma_c: f64,
    pub d_s: usize,
    pub d_c: usize,
    pub seed: u64,
    /// Emit label sets instead of single labels.
    #[serde(default)]
    pub multi_label: bool,
}

impl Default for BiasSpec {
    fn default() -> Self {
        Self {
            num_classes: 6,
            num_contexts: 3,
            beta: 0.9,
            prior_map: default_prior_map(6, 3),
            occlusion_rate: 0.5,
            sigma_s: 1.0,
            sigma_c: 0.5,
            d_s: 16,
            d_c: 8,
            seed: 0,
            multi_label: false,
        }
    }
}

/// Overlapping windows of width `⌈K/T⌉ + 1`; context `t` starts at `⌊tK/T⌋`
/// and prefers the second label of its window.
pub fn default_prior_map(num_classes: usize, num_contexts: usize) -> Vec<ContextPrior> {
    let width = (num_classes.div_ceil(num_contexts.max(1)) + 1).min(num_classes);
    (0..num_contexts)
        .map(|t| {
            let start = t * num_classes / num_contexts;
            let admissible: Vec<usize> = (0..width).map(|i| (start + i) % num_classes).collect();
            let preferred = admissible[1.min(width - 1)];
            ContextPrior {
                admissible,
                preferred,
            }
        })
        .collect()
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        let (k, t) = (self.num_classes, self.num_contexts);
        if k < 2 || t < 2 {
            return validation_err(format!("need K ≥ 2 and T ≥ 2, got K={k}, T={t}"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return validation_err(format!("beta {} outside [0, 1]", self.beta));
        }
        if !(0.0..=1.0).contains(&self.occlusion_rate) {
            return validation_err(format!(
                "occlusion_rate {} outside [0, 1]",
                self.occlusion_rate
            ));
        }
        if !(self.sigma_s > 0.0 && self.sigma_c > 0.0) {
            return validation_err("noise standard deviations must be positive");
        }
        if self.d_s == 0 || self.d_c == 0 {
            return validation_err("feature widths must be positive");
        }
        if self.prior_map.len() != t {
            return validation_err(format!(
                "prior_map has {} entries for {t} context types",
                self.prior_map.len()
            ));
        }
        let mut covered = vec![false; k];
        for (i, p) in self.prior_map.iter().enumerate() {
            if p.admissible.is_empty() {
                return validation_err(format!("context {i} has an empty admissible set"));
            }
            let mut seen = vec![false; k];
            for &y in &p.admissible {
                if y >= k {
                    return validation_err(format!("context {i} admits label {y} ≥ K"));
                }
                if seen[y] {
                    return validation_err(format!("context {i} lists label {y} twice"));
                }
                seen[y] = true;
                covered[y] = true;
            }
            if !p.admissible.contains(&p.preferred) {
                return validation_err(format!(
                    "preferred label {} of context {i} is not admissible",
                    p.preferred
                ));
            }
        }
        if let Some(y) = covered.iter().position(|c| !c) {
            return validation_err(format!("label {y} is admissible in no context"));
        }
        Ok(())
    }

    /// Expected `P(label = preferred | t)` on the training split:
    /// `beta + (1 − beta)/|A_t|`.
    pub fn expected_preferred_rate(&self, t: usize) -> f64 {
        let a = self.prior_map[t].admissible.len() as f64;
        self.beta + (1.0 - self.beta) / a
    }
}

/// Label regime of the generated split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestVariant {
    Decorrelated,
    AntiCorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Which label distribution a split follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRegime {
    /// Train and validation: preference-skewed.
    Biased,
    Decorrelated,
    AntiCorrelated,
}

impl From<TestVariant> for LabelRegime {
    fn from(v: TestVariant) -> Self {
        match v {
            TestVariant::Decorrelated => LabelRegime::Decorrelated,
            TestVariant::AntiCorrelated => LabelRegime::AntiCorrelated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSample {
    pub subject_signal: Vec<f64>,
    pub context_signal: Vec<f64>,
    pub context_type: usize,
    /// One label in multi-class mode; one or more in multi-label mode.
    pub labels: Vec<usize>,
    pub occluded: bool,
    pub split: Split,
}

impl SceneSample {
    /// Primary label (the only label in multi-class mode).
    pub fn label(&self) -> usize {
        self.labels[0]
    }
}

/// Fixed prototypes derived from the spec seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Prototypes {
    pub label: Vec<Vec<f64>>,
    pub context: Vec<Vec<f64>>,
}

const PROTOTYPE_STREAM: u64 = 0;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn split_stream(split: Split, regime: LabelRegime) -> u64 {
    match (split, regime) {
        (Split::Train, _) => 1,
        (Split::Val, _) => 2,
        (Split::Test, LabelRegime::Decorrelated) => 3,
        (Split::Test, LabelRegime::AntiCorrelated) => 4,
        (Split::Test, LabelRegime::Biased) => 5,
    }
}

impl Prototypes {
    /// Standard-normal prototype vectors; in high enough dimension they are
    /// close to orthogonal.
    pub fn from_spec(spec: &BiasSpec) -> Self {
        let mut rng = stream_rng(spec.seed, PROTOTYPE_STREAM);
        let mut draw = |n: usize, d: usize| -> Vec<Vec<f64>> {
            (0..n)
                .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect()
        };
        let label = draw(spec.num_classes, spec.d_s);
        let context = draw(spec.num_contexts, spec.d_c);
        Self { label, context }
    }

    /// Mean of the label prototypes of `labels`.
    pub fn subject_mean(&self, labels: &[usize]) -> Vec<f64> {
        let d = self.label[0].len();
        let mut mean = vec![0.0; d];
        for &y in labels {
            for (m, v) in mean.iter_mut().zip(&self.label[y]) {
                *m += v;
            }
        }
        let n = labels.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Default regime of each split; the test variant picks the test regime.
pub fn regime_for(split: Split, test_variant: TestVariant) -> LabelRegime {
    match split {
        Split::Train | Split::Val => LabelRegime::Biased,
        Split::Test => test_variant.into(),
    }
}

/// Generates `n` samples. Fully determined by `(spec, n, split, regime)`.
pub fn generate_dataset(
    spec: &BiasSpec,
    n: usize,
    split: Split,
    regime: LabelRegime,
) -> Result<Vec<SceneSample>> {
    spec.validate()?;
    if n == 0 {
        return validation_err("dataset size must be at least 1");
    }
    let protos = Prototypes::from_spec(spec);
    let mut rng = stream_rng(spec.seed, split_stream(split, regime));

    let n_occluded = (spec.occlusion_rate * n as f64).round() as usize;
    let mut occluded = vec![false; n];
    for i in index::sample(&mut rng, n, n_occluded.min(n)) {
        occluded[i] = true;
    }

    let mut samples = Vec::with_capacity(n);
    for &is_occluded in &occluded {
        let t = rng.random_range(0..spec.num_contexts);
        let prior = &spec.prior_map[t];
        let primary = draw_label(&mut rng, prior, regime, spec.beta);
        let mut labels = vec![primary];
        if spec.multi_label && rng.random_bool(MULTI_LABEL_EXTRA_RATE) {
            let others: Vec<usize> = prior
                .admissible
                .iter()
                .copied()
                .filter(|&y| y != primary && allowed(prior, regime, y))
                .collect();
            if !others.is_empty() {
                labels.push(others[rng.random_range(0..others.len())]);
            }
        }
        let mean = protos.subject_mean(&labels);
        let noise_s: Vec<f64> = (0..spec.d_s)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                spec.sigma_s * z
            })
            .collect();
        let subject_signal = if is_occluded {
            vec![0.0; spec.d_s]
        } else {
            mean.iter().zip(&noise_s).map(|(m, e)| m + e).collect()
        };
        let context_signal = protos.context[t]
            .iter()
            .map(|m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + spec.sigma_c * z
            })
            .collect();
        samples.push(SceneSample {
            subject_signal,
            context_signal,
            context_type: t,
            labels,
            occluded: is_occluded,
            split,
        });
    }
    Ok(samples)
}

/// Probability that a multi-label sample carries a second label.
pub const MULTI_LABEL_EXTRA_RATE: f64 = 0.5;

fn allowed(prior: &ContextPrior, regime: LabelRegime, y: usize) -> bool {
    !(regime == LabelRegime::AntiCorrelated && y == prior.preferred)
}

fn draw_label(rng: &mut ChaCha8Rng, prior: &ContextPrior, regime: LabelRegime, beta: f64) -> usize {
    match regime {
        LabelRegime::Biased => {
            if rng.random_bool(beta) {
                prior.preferred
            } else {
                prior.admissible[rng.random_range(0..prior.admissible.len())]
            }
        }
        LabelRegime::Decorrelated => prior.admissible[rng.random_range(0..prior.admissible.len())],
        LabelRegime::AntiCorrelated => {
            let pool: Vec<usize> = prior
                .admissible
                .iter()
                .copied()
                .filter(|&y| y != prior.preferred)
                .collect();
            if pool.is_empty() {
                // singleton admissible set: nothing to anti-correlate against
                prior.preferred
            } else {
                pool[rng.random_range(0..pool.len())]
            }
        }
    }
}

/// `P(primary label = y | context t)` under `regime`, in closed form.
pub fn label_prior(spec: &BiasSpec, t: usize, regime: LabelRegime) -> Vec<f64> {
    let prior = &spec.prior_map[t];
    let mut p = vec![0.0; spec.num_classes];
    let a = prior.admissible.len() as f64;
    match regime {
        LabelRegime::Biased => {
            for &y in &prior.admissible {
                p[y] += (1.0 - spec.beta) / a;
            }
            p[prior.preferred] += spec.beta;
        }
        LabelRegime::Decorrelated => {
            for &y in &prior.admissible {
                p[y] = 1.0 / a;
            }
        }
        LabelRegime::AntiCorrelated => {
            if prior.admissible.len() == 1 {
                p[prior.preferred] = 1.0;
            } else {
                for &y in &prior.admissible {
                    if y != prior.preferred {
                        p[y] = 1.0 / (a - 1.0);
                    }
                }
            }
        }
    }
    p
}

/// Context-only input: the `[subject | context]` layout with every subject slot
/// zeroed.
pub fn mask_features(sample: &SceneSample) -> Vec<f64> {
    let mut v = vec![0.0; sample.subject_signal.len()];
    v.extend_from_slice(&sample.context_signal);
    v
}

/// Unmasked `[subject | context]` layout.
pub fn scene_features(sample: &SceneSample) -> Vec<f64> {
    let mut v = sample.subject_signal.clone();
    v.extend_from_slice(&sample.context_signal);
    v
}

/// Copy of `sample` with the subject removed.
pub fn mask_sample(sample: &SceneSample) -> SceneSample {
    SceneSample {
        subject_signal: vec![0.0; sample.subject_signal.len()],
        ..sample.clone()
    }
}

/// Exact posterior over classes given the observed signals, enumerating
/// context types and label configurations under `regime`.
///
/// Multi-class: `P(y | s, c)`, summing to one. Multi-label: per-class marginal
/// `P(k ∈ labels | s, c)`.
pub fn bayes_oracle(
    spec: &BiasSpec,
    protos: &Prototypes,
    sample: &SceneSample,
    regime: LabelRegime,
) -> Vec<f64> {
    let k = spec.num_classes;
    let t_count = spec.num_contexts as f64;
    let ctx_loglik = |t: usize| -> f64 {
        -sq_dist(&sample.context_signal, &protos.context[t]) / (2.0 * spec.sigma_c * spec.sigma_c)
    };
    let subj_loglik = |labels: &[usize]| -> f64 {
        if sample.occluded {
            0.0
        } else {
            -sq_dist(&sample.subject_signal, &protos.subject_mean(labels))
                / (2.0 * spec.sigma_s * spec.sigma_s)
        }
    };

    // (log joint weight, label configuration)
    let mut terms: Vec<(f64, Vec<usize>)> = Vec::new();
    for t in 0..spec.num_contexts {
        let lc = ctx_loglik(t) - t_count.ln();
        let prior = label_prior(spec, t, regime);
        for (y, &py) in prior.iter().enumerate() {
            if py == 0.0 {
                continue;
            }
            if !spec.multi_label {
                terms.push((lc + py.ln() + subj_loglik(&[y]), vec![y]));
                continue;
            }
            let others: Vec<usize> = spec.prior_map[t]
                .admissible
                .iter()
                .copied()
                .filter(|&o| o != y && allowed(&spec.prior_map[t], regime, o))
                .collect();
            if others.is_empty() {
                terms.push((lc + py.ln() + subj_loglik(&[y]), vec![y]));
                continue;
            }
            let p_single = 1.0 - MULTI_LABEL_EXTRA_RATE;
            terms.push((lc + (py * p_single).ln() + subj_loglik(&[y]), vec![y]));
            let p_pair = MULTI_LABEL_EXTRA_RATE / others.len() as f64;
            for &o in &others {
                terms.push((lc + (py * p_pair).ln() + subj_loglik(&[y, o]), vec![y, o]));
            }
        }
    }
    let max = terms
        .iter()
        .map(|(w, _)| *w)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut posterior = vec![0.0; k];
    let mut total = 0.0;
    for (w, labels) in &terms {
        let p = (w - max).exp();
        total += p;
        for &y in labels {
            posterior[y] += p;
        }
    }
    posterior.iter_mut().for_each(|p| *p /= total);
    posterior
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Row-major `H × W × C` grid with the subject's bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<f64>,
    pub bbox: BoundingBox,
}

/// Inclusive-exclusive corners: columns `x0..x1`, rows `y0..y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl GridImage {
    pub fn validate(&self) -> Result<()> {
        if self.pixels.len() != self.height * self.width * self.channels {
            return validation_err(format!(
                "{}×{}×{} grid holds {} pixels",
                self.height,
                self.width,
                self.channels,
                self.pixels.len()
            ));
        }
        let b = self.bbox;
        if b.x0 > b.x1 || b.y0 > b.y1 || b.x1 > self.width || b.y1 > self.height {
            return validation_err(format!(
                "bbox {b:?} outside {}×{} grid",
                self.height, self.width
            ));
        }
        Ok(())
    }
}

/// Zeroes every pixel inside the subject box; pixels outside are untouched.
pub fn mask_grid(img: &GridImage) -> Result<GridImage> {
    img.validate()?;
    let mut out = img.clone();
    let b = img.bbox;
    let c = img.channels;
    for row in b.y0..b.y1 {
        let start = (row * img.width + b.x0) * c;
        let end = (row * img.width + b.x1) * c;
        out.pixels[start..end].fill(0.0);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dataset files

pub const DATASET_FORMAT: &str = "clef-scenes";
pub const DATASET_FORMAT_VERSION: u32 = 1;

/// First line of every dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub format_version: u32,
    pub split: Split,
    pub regime: LabelRegime,
    pub count: usize,
    pub config_hash: String,
    pub seed: u64,
    pub spec: BiasSpec,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    subject_signal: Vec<f64>,
    context_signal: Vec<f64>,
    context_type: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    label: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    labels: Option<Vec<usize>>,
    occluded: bool,
    split: Split,
}

impl SampleRecord {
    fn from_sample(s: &SceneSample, multi_label: bool) -> Self {
        let (label, labels) = if multi_label {
            (None, Some(s.labels.clone()))
        } else {
            (Some(s.label()), None)
        };
        Self {
            subject_signal: s.subject_signal.clone(),
            context_signal: s.context_signal.clone(),
            context_type: s.context_type,
            label,
            labels,
            occluded: s.occluded,
            split: s.split,
        }
    }

    fn into_sample(self) -> Result<SceneSample> {
        let labels = match (self.label, self.labels) {
            (Some(y), None) => vec![y],
            (None, Some(ys)) if !ys.is_empty() => ys,
            _ => return validation_err("sample must carry exactly one of `label` / `labels`"),
        };
        Ok(SceneSample {
            subject_signal: self.subject_signal,
            context_signal: self.context_signal,
            context_type: self.context_type,
            labels,
            occluded: self.occluded,
            split: self.split,
        })
    }
}

/// Serializes a dataset as JSON Lines: header, then one sample per line.
pub fn dataset_to_string(header: &DatasetHeader, samples: &[SceneSample]) -> Result<String> {
    let mut out = serde_json::to_string(header)?;
    out.push('\n');
    for s in samples {
        out.push_str(&serde_json::to_string(&SampleRecord::from_sample(
            s,
            header.spec.multi_label,
        ))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_dataset(path: &Path, header: &DatasetHeader, samples: &[SceneSample]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(dataset_to_string(header, samples)?.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads and schema-checks a dataset file.
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<SceneSample>)> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines
        .next()
        .ok_or_else(|| ClefError::Validation(format!("{} is empty", path.display())))??;
    let header: DatasetHeader = serde_json::from_str(&first)?;
    if header.format != DATASET_FORMAT || header.format_version != DATASET_FORMAT_VERSION {
        return validation_err(format!(
            "unsupported dataset format {} v{}",
            header.format, header.format_version
        ));
    }
    header.spec.validate()?;
    let mut samples = Vec::with_capacity(header.count);
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line)?;
        let s = record.into_sample()?;
        check_sample(&header.spec, &s)?;
        samples.push(s);
    }
    if samples.len() != header.count {
        return validation_err(format!(
            "header announces {} samples, file holds {}",
            header.count,
            samples.len()
        ));
    }
    Ok((header, samples))
}

fn check_sample(spec: &BiasSpec, s: &SceneSample) -> Result<()> {
    if s.subject_signal.len() != spec.d_s || s.context_signal.len() != spec.d_c {
        return validation_err("sample signal widths do not match the spec");
    }
    if s.context_type >= spec.num_contexts || s.labels.iter().any(|&y| y >= spec.num_classes) {
        return validation_err("sample context type or label out of range");
    }
    if s.occluded && s.subject_signal.iter().any(|&v| v != 0.0) {
        return validation_err("occluded sample has a non-zero subject signal");
    }
    Ok(())
}

/// Short hex digest of arbitrary bytes.
pub fn short_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(&digest[..8])
}

/// Content hash of a dataset, independent of file location.
pub fn dataset_hash(header: &DatasetHeader, samples: &[SceneSample]) -> Result<String> {
    Ok(short_hash(dataset_to_string(header, samples)?.as_bytes()))
}

/// Class × context frequency table plus bias statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub count: usize,
    pub occluded: usize,
    /// `counts[t][y]`: samples of context type `t` whose primary label is `y`.
    pub counts: Vec<Vec<usize>>,
    /// Empirical `P(label = preferred | t)` per context type.
    pub preferred_rate: Vec<f64>,
    /// Moment estimate of `beta` from the preferred rate, pooled over contexts:
    /// `(rate − 1/|A|) / (1 − 1/|A|)`.
    pub estimated_beta: f64,
}

pub fn summarize(spec: &BiasSpec, samples: &[SceneSample]) -> DatasetSummary {
    let mut counts = vec![vec![0usize; spec.num_classes]; spec.num_contexts];
    for s in samples {
        counts[s.context_type][s.label()] += 1;
    }
    let mut preferred_rate = Vec::new();
    let (mut est_num, mut est_den) = (0.0, 0.0);
    for (t, row) in counts.iter().enumerate() {
        let total: usize = row.iter().sum();
        let prior = &spec.prior_map[t];
        let rate = if total == 0 {
            0.0
        } else {
            row[prior.preferred] as f64 / total as f64
        };
        preferred_rate.push(rate);
        let chance = 1.0 / prior.admissible.len() as f64;
        if chance < 1.0 {
            est_num += total as f64 * (rate - chance) / (1.0 - chance);
            est_den += total as f64;
        }
    }
    DatasetSummary {
        count: samples.len(),
        occluded: samples.iter().filter(|s| s.occluded).count(),
        counts,
        preferred_rate,
        estimated_beta: if est_den > 0.0 {
            est_num / est_den
        } else {
            0.0
        },
    }
}

impl DatasetSummary {
    /// Plain-text frequency table.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let k = self.counts.first().map_or(0, Vec::len);
        let _ = write!(out, "{:>8}", "context");
        for y in 0..k {
            let _ = write!(out, "{:>7}", format!("y{y}"));
        }
        let _ = writeln!(out, "{:>10}", "pref_rate");
        for (t, row) in self.counts.iter().enumerate() {
            let _ = write!(out, "{t:>8}");
            for c in row {
                let _ = write!(out, "{c:>7}");
            }
            let _ = writeln!(out, "{:>10.4}", self.preferred_rate[t]);
        }
        let _ = writeln!(
            out,
            "samples={} occluded={} estimated_beta={:.4}",
            self.count, self.occluded, self.estimated_beta
        );
        out
    }
}
