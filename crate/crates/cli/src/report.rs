//! Aggregation of completed runs into markdown and CSV summaries.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clef_core::experiment::Variant;
use clef_core::{EvalReport, Scorer};

use crate::artifacts::{OutDir, RunManifest, MANIFEST_SUFFIX};

pub const SUMMARY_COLUMNS: [&str; 9] = [
    "mode",
    "scorer",
    "runs",
    "seeds",
    "accuracy_mean",
    "accuracy_range",
    "map_mean",
    "map_range",
    "config_hashes",
];

pub const PER_CLASS_COLUMNS: [&str; 6] = ["mode", "scorer", "class", "runs", "ap_mean", "ap_range"];

/// Mean and spread of a set of values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values {
            min = min.min(v);
            max = max.max(v);
        }
        Some(Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min,
            max,
        })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    fn percent(&self) -> String {
        format!(
            "{:.2} [{:.2}, {:.2}]",
            100.0 * self.mean,
            100.0 * self.min,
            100.0 * self.max
        )
    }
}

struct Run {
    /// Relative to the report root; `.` for the root itself.
    dir: String,
    manifests: Vec<RunManifest>,
}

#[derive(Default)]
struct Collected {
    runs: Vec<Run>,
    problems: Vec<String>,
    reports: Vec<EvalReport>,
}

fn relative(root: &Path, path: &Path) -> String {
    match path.strip_prefix(root) {
        Ok(p) if p.as_os_str().is_empty() => ".".into(),
        Ok(p) => p.display().to_string(),
        Err(_) => path.display().to_string(),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

fn collect(root: &Path, dir: &Path, acc: &mut Collected) -> Result<()> {
    let entries = sorted_entries(dir)?;
    let rel = relative(root, dir);
    let mut run = Run {
        dir: rel.clone(),
        manifests: Vec::new(),
    };
    let mut seen = Vec::new();
    for path in &entries {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if !name.ends_with(MANIFEST_SUFFIX) || !path.is_file() {
            continue;
        }
        let manifest: RunManifest = match std::fs::read_to_string(path)
            .map_err(anyhow::Error::from)
            .and_then(|t| serde_json::from_str(&t).map_err(anyhow::Error::from))
        {
            Ok(m) => m,
            Err(e) => {
                acc.problems.push(format!(
                    "{}: unreadable manifest ({e})",
                    relative(root, path)
                ));
                continue;
            }
        };
        for artifact in &manifest.artifacts {
            let path = dir.join(artifact);
            let shown = relative(root, &path);
            if !path.is_file() {
                acc.problems.push(format!("{shown}: missing"));
                continue;
            }
            if !artifact.ends_with(".report.json") || seen.contains(artifact) {
                continue;
            }
            seen.push(artifact.clone());
            match std::fs::read_to_string(&path)
                .map_err(anyhow::Error::from)
                .and_then(|t| serde_json::from_str::<EvalReport>(&t).map_err(anyhow::Error::from))
            {
                Ok(r) => acc.reports.push(r),
                Err(e) => acc
                    .problems
                    .push(format!("{shown}: unreadable report ({e})")),
            }
        }
        run.manifests.push(manifest);
    }
    if !run.manifests.is_empty() {
        acc.runs.push(run);
    }
    for path in &entries {
        if path.is_dir() {
            collect(root, path, acc)?;
        }
    }
    Ok(())
}

struct Row {
    mode: String,
    scorer: String,
    seeds: Vec<u64>,
    hashes: Vec<String>,
    accuracy: Spread,
    map: Spread,
    per_class: Vec<Option<Spread>>,
    runs: usize,
}

fn row_order(mode: &str, scorer: &str) -> (usize, usize) {
    let v = Variant::ALL.iter().position(|v| v.name() == mode);
    let s = Scorer::ALL.iter().position(|s| s.name() == scorer);
    (v.unwrap_or(usize::MAX), s.unwrap_or(usize::MAX))
}

type GroupKey = ((usize, usize), String, String);

fn aggregate(reports: &[EvalReport]) -> Vec<Row> {
    let mut groups: BTreeMap<GroupKey, Vec<&EvalReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((
                row_order(&r.mode, &r.scorer),
                r.mode.clone(),
                r.scorer.clone(),
            ))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((_, mode, scorer), rs)| {
            let mut seeds: Vec<u64> = rs.iter().map(|r| r.seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let mut hashes: Vec<String> = rs.iter().map(|r| r.config_hash.clone()).collect();
            hashes.sort();
            hashes.dedup();
            let k = rs.iter().map(|r| r.per_class_ap.len()).max().unwrap_or(0);
            let per_class = (0..k)
                .map(|c| {
                    let vals: Vec<f64> = rs
                        .iter()
                        .filter_map(|r| r.per_class_ap.get(c).copied().flatten())
                        .collect();
                    Spread::of(&vals)
                })
                .collect();
            let acc: Vec<f64> = rs.iter().map(|r| r.accuracy).collect();
            let map: Vec<f64> = rs.iter().map(|r| r.map).collect();
            Row {
                runs: rs.len(),
                accuracy: Spread::of(&acc).expect("group is non-empty"),
                map: Spread::of(&map).expect("group is non-empty"),
                mode,
                scorer,
                seeds,
                hashes,
                per_class,
            }
        })
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

fn summary_csv(rows: &[Row]) -> String {
    let mut out = SUMMARY_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.mode,
            r.scorer,
            r.runs,
            join(&r.seeds),
            r.accuracy.mean,
            r.accuracy.range(),
            r.map.mean,
            r.map.range(),
            join(&r.hashes)
        );
    }
    out
}

fn per_class_csv(rows: &[Row]) -> String {
    let mut out = PER_CLASS_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        for (c, s) in r.per_class.iter().enumerate() {
            let (mean, range) = s.map_or((String::new(), String::new()), |s| {
                (s.mean.to_string(), s.range().to_string())
            });
            let _ = writeln!(out, "{},{},{c},{},{mean},{range}", r.mode, r.scorer, r.runs);
        }
    }
    out
}

fn is_default_row(r: &Row) -> bool {
    r.mode
        .parse::<Variant>()
        .map_or(true, |v| v.default_scorer().name() == r.scorer)
}

fn summary_markdown(c: &Collected, rows: &[Row]) -> String {
    let mut out = String::from("# Run summary\n\n");
    if c.runs.is_empty() {
        out.push_str("no runs found\n");
        return out;
    }
    out.push_str("| run | command | config_hash | seed |\n|---|---|---|---|\n");
    for run in &c.runs {
        for m in &run.manifests {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} |",
                run.dir, m.command, m.config_hash, m.seed
            );
        }
    }
    out.push_str("\n## Problems\n\n");
    if c.problems.is_empty() {
        out.push_str("none\n");
    }
    for p in &c.problems {
        let _ = writeln!(out, "- {p}");
    }

    let bayes: Vec<f64> = c
        .runs
        .iter()
        .flat_map(|r| r.manifests.iter().filter_map(|m| m.bayes_accuracy))
        .collect();
    if let Some(s) = Spread::of(&bayes) {
        let _ = writeln!(
            out,
            "\nBayes oracle accuracy (%): {} over {} runs",
            s.percent(),
            bayes.len()
        );
    }

    out.push_str("\n## Test metrics (%), mean [min, max] over runs\n\n");
    if rows.is_empty() {
        out.push_str("no evaluation reports found\n");
        return out;
    }
    out.push_str("| mode | scorer | runs | accuracy | mAP |\n|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} |",
            r.mode,
            r.scorer,
            r.runs,
            r.accuracy.percent(),
            r.map.percent()
        );
    }

    let k = rows.iter().map(|r| r.per_class.len()).max().unwrap_or(0);
    out.push_str("\n## Per-class AP (%), mean over runs, default scorer of each mode\n\n| mode |");
    for c in 0..k {
        let _ = write!(out, " y{c} |");
    }
    out.push_str(" mAP |\n|---|");
    out.push_str(&"---|".repeat(k + 1));
    out.push('\n');
    for r in rows.iter().filter(|r| is_default_row(r)) {
        let _ = write!(out, "| {} |", r.mode);
        for c in 0..k {
            match r.per_class.get(c).copied().flatten() {
                Some(s) => {
                    let _ = write!(out, " {:.2} |", 100.0 * s.mean);
                }
                None => out.push_str(" - |"),
            }
        }
        let _ = writeln!(out, " {:.2} |", 100.0 * r.map.mean);
    }
    out
}

pub fn run(root: &Path, out: Option<&Path>) -> Result<()> {
    if !root.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("run directory {} does not exist", root.display()),
        )
        .into());
    }
    let mut collected = Collected::default();
    collect(root, root, &mut collected)?;
    let rows = aggregate(&collected.reports);
    if collected.runs.is_empty() {
        println!("no runs found");
    }
    for p in &collected.problems {
        eprintln!("warning: {p}");
    }
    let markdown = summary_markdown(&collected, &rows);
    let mut dir = OutDir::create(out.unwrap_or(root))?;
    dir.write("summary.md", &markdown)?;
    dir.write("summary.csv", &summary_csv(&rows))?;
    dir.write("per_class_ap.csv", &per_class_csv(&rows))?;
    if !collected.runs.is_empty() {
        print!("{markdown}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(mode: &str, scorer: &str, seed: u64, acc: f64, ap: [Option<f64>; 2]) -> EvalReport {
        EvalReport {
            mode: mode.into(),
            scorer: scorer.into(),
            num_samples: 10,
            per_class_ap: ap.to_vec(),
            map: acc / 2.0,
            accuracy: acc,
            per_class_accuracy: vec![None, None],
            dataset_hash: "d".into(),
            config_hash: format!("c{seed}"),
            seed,
        }
    }

    #[test]
    fn spread_of_two_values() {
        let s = Spread::of(&[0.25, 0.75]).unwrap();
        assert_eq!(s.mean, 0.5);
        assert_eq!(s.range(), 0.5);
        assert_eq!(Spread::of(&[]), None);
    }

    #[test]
    fn two_seeds_aggregate_to_mean_and_range() {
        let rows = aggregate(&[
            report("clef", "tie", 1, 0.6, [Some(0.2), None]),
            report("clef", "tie", 0, 0.4, [Some(0.4), Some(1.0)]),
            report("vanilla", "ensemble_only", 0, 0.3, [None, None]),
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mode, "vanilla");
        let clef = &rows[1];
        assert_eq!(clef.seeds, vec![0, 1]);
        assert!((clef.accuracy.mean - 0.5).abs() < 1e-15);
        assert!((clef.accuracy.range() - 0.2).abs() < 1e-15);
        assert!((clef.per_class[0].unwrap().mean - 0.3).abs() < 1e-15);
        assert_eq!(clef.per_class[1].unwrap().range(), 0.0);
        assert_eq!(rows[0].per_class[0], None);
    }

    #[test]
    fn csv_columns_follow_the_declared_schema() {
        let rows = aggregate(&[report("clef", "tie", 0, 0.5, [Some(0.5), Some(0.5)])]);
        let csv = summary_csv(&rows);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), SUMMARY_COLUMNS.join(","));
        assert_eq!(
            lines.next().unwrap().split(',').count(),
            SUMMARY_COLUMNS.len()
        );
        let pc = per_class_csv(&rows);
        assert_eq!(pc.lines().next().unwrap(), PER_CLASS_COLUMNS.join(","));
        assert_eq!(pc.lines().count(), 3);
    }
}
