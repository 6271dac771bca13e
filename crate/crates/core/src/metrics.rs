//! Accuracy, rank-based average precision, and mode comparison tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diffcore::scalar::argmax;
use crate::error::{validation_err, Result};

/// Fraction of positions where `predictions` and `labels` agree.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return validation_err("accuracy of an empty prediction list");
    }
    if predictions.len() != labels.len() {
        return validation_err(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        ));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

/// Precision averaged over the ranks of the positives, with scores sorted
/// descending and ties kept in input order. `None` when there are no
/// positives (the class is not evaluable).
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len(), "scores/positives misaligned");
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Unweighted mean over evaluable classes.
pub fn mean_ap(per_class: &[Option<f64>]) -> Result<f64> {
    let evaluable: Vec<f64> = per_class.iter().flatten().copied().collect();
    if evaluable.is_empty() {
        return validation_err("no evaluable class for mAP");
    }
    Ok(evaluable.iter().sum::<f64>() / evaluable.len() as f64)
}

/// Metrics of one scorer over one labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// `None` for classes with no positive sample.
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    /// Fraction of samples whose top-scoring class is among their labels.
    pub accuracy: f64,
    /// Accuracy restricted to samples whose primary label is each class.
    pub per_class_accuracy: Vec<Option<f64>>,
}

/// `scores[i]` are the per-class scores of sample `i`; `labels[i]` its label
/// set (a single label in multi-class tasks, primary label first).
pub fn evaluate(scores: &[Vec<f64>], labels: &[Vec<usize>], num_classes: usize) -> Result<Metrics> {
    if scores.is_empty() {
        return validation_err("cannot evaluate an empty set");
    }
    if scores.len() != labels.len() {
        return validation_err(format!(
            "{} score rows for {} label sets",
            scores.len(),
            labels.len()
        ));
    }
    for (s, ys) in scores.iter().zip(labels) {
        if s.len() != num_classes {
            return validation_err(format!(
                "score row has {} classes, expected {num_classes}",
                s.len()
            ));
        }
        if ys.is_empty() || ys.iter().any(|&y| y >= num_classes) {
            return validation_err("label set empty or out of range");
        }
    }

    let per_class_ap: Vec<Option<f64>> = (0..num_classes)
        .map(|k| {
            let column: Vec<f64> = scores.iter().map(|s| s[k]).collect();
            let positives: Vec<bool> = labels.iter().map(|ys| ys.contains(&k)).collect();
            average_precision(&column, &positives)
        })
        .collect();
    let map = mean_ap(&per_class_ap)?;

    let predictions: Vec<usize> = scores.iter().map(|s| argmax(s)).collect();
    let hit: Vec<bool> = predictions
        .iter()
        .zip(labels)
        .map(|(p, ys)| ys.contains(p))
        .collect();
    let accuracy = hit.iter().filter(|&&h| h).count() as f64 / hit.len() as f64;

    let mut correct = vec![0usize; num_classes];
    let mut seen = vec![0usize; num_classes];
    for (h, ys) in hit.iter().zip(labels) {
        seen[ys[0]] += 1;
        if *h {
            correct[ys[0]] += 1;
        }
    }
    let per_class_accuracy = correct
        .iter()
        .zip(&seen)
        .map(|(&c, &n)| (n > 0).then(|| c as f64 / n as f64))
        .collect();

    Ok(Metrics {
        per_class_ap,
        map,
        accuracy,
        per_class_accuracy,
    })
}

/// Evaluation of one trained variant under one scorer, stamped with its
/// provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Variant tag, e.g. `vanilla`, `clef`, `no_mask`.
    pub mode: String,
    pub scorer: String,
    pub num_samples: usize,
    pub per_class_ap: Vec<Option<f64>>,
    pub map: f64,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<Option<f64>>,
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn new(
        mode: impl Into<String>,
        scorer: impl Into<String>,
        num_samples: usize,
        metrics: Metrics,
        dataset_hash: impl Into<String>,
        config_hash: impl Into<String>,
        seed: u64,
    ) -> Self {
        Self {
            mode: mode.into(),
            scorer: scorer.into(),
            num_samples,
            per_class_ap: metrics.per_class_ap,
            map: metrics.map,
            accuracy: metrics.accuracy,
            per_class_accuracy: metrics.per_class_accuracy,
            dataset_hash: dataset_hash.into(),
            config_hash: config_hash.into(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mode: String,
    pub scorer: String,
    pub accuracy: f64,
    pub map: f64,
    pub delta_accuracy: f64,
    pub delta_map: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub dataset_hash: String,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
    /// Whether accuracy ordered `clef ≥ te_only ≥ vanilla`; `None` if any of
    /// the three rows is missing.
    pub ordering_holds: Option<bool>,
}

pub const BASELINE_MODE: &str = "vanilla";

/// Deltas of every report against the `vanilla` report, in input order.
pub fn compare_modes(reports: &[EvalReport]) -> Result<ComparisonTable> {
    let Some(first) = reports.first() else {
        return validation_err("no reports to compare");
    };
    if let Some(r) = reports
        .iter()
        .find(|r| r.dataset_hash != first.dataset_hash)
    {
        return validation_err(format!(
            "reports were computed on different datasets ({} vs {})",
            first.dataset_hash, r.dataset_hash
        ));
    }
    let Some(base) = reports.iter().find(|r| r.mode == BASELINE_MODE) else {
        return validation_err("comparison needs a vanilla report");
    };
    let rows = reports
        .iter()
        .map(|r| ComparisonRow {
            mode: r.mode.clone(),
            scorer: r.scorer.clone(),
            accuracy: r.accuracy,
            map: r.map,
            delta_accuracy: r.accuracy - base.accuracy,
            delta_map: r.map - base.map,
        })
        .collect();
    let acc = |m: &str| reports.iter().find(|r| r.mode == m).map(|r| r.accuracy);
    let ordering_holds = match (acc("clef"), acc("te_only"), acc(BASELINE_MODE)) {
        (Some(tie), Some(te), Some(v)) => Some(tie >= te && te >= v),
        _ => None,
    };
    Ok(ComparisonTable {
        dataset_hash: first.dataset_hash.clone(),
        config_hash: base.config_hash.clone(),
        seed: base.seed,
        rows,
        ordering_holds,
    })
}

impl ComparisonTable {
    pub const COLUMNS: [&'static str; 8] = [
        "mode",
        "scorer",
        "accuracy",
        "map",
        "delta_accuracy",
        "delta_map",
        "config_hash",
        "seed",
    ];

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "config_hash={} seed={} dataset_hash={}\n",
            self.config_hash, self.seed, self.dataset_hash
        );
        let _ = writeln!(
            out,
            "{:<18}{:<15}{:>10}{:>10}{:>16}{:>11}",
            "mode", "scorer", "accuracy", "map", "delta_accuracy", "delta_map"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<18}{:<15}{:>10.4}{:>10.4}{:>+16.4}{:>+11.4}",
                r.mode, r.scorer, r.accuracy, r.map, r.delta_accuracy, r.delta_map
            );
        }
        let ordering = match self.ordering_holds {
            Some(true) => "held",
            Some(false) => "violated",
            None => "n/a",
        };
        let _ = writeln!(out, "ordering clef >= te_only >= vanilla: {ordering}");
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.mode,
                r.scorer,
                r.accuracy,
                r.map,
                r.delta_accuracy,
                r.delta_map,
                self.config_hash,
                self.seed
            );
        }
        out
    }
}
