//! Multi-loss benchmark: every loss trains on the same split per seed.

use alpa_core::datagen::{stratified_split, LabeledDataset};
use alpa_core::losses::LossSpec;
use alpa_core::metrics::MetricsReport;
use alpa_core::trainer::{evaluate, train};
use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SCHEMA_VERSION};

/// Number of lowest-recall classes averaged for the tail summary.
pub const WORST_CLASSES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedReport {
    pub seed: u64,
    #[serde(flatten)]
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossResult {
    pub label: String,
    pub loss_spec: LossSpec,
    pub reports: Vec<SeedReport>,
    pub median_balanced_accuracy: f64,
    /// Median over seeds of the mean recall of the three worst classes.
    pub median_worst3_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub schema_version: u32,
    pub class_counts: Vec<usize>,
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub losses: Vec<LossResult>,
}

impl BenchResult {
    pub fn loss(&self, label: &str) -> Option<&LossResult> {
        self.losses.iter().find(|l| l.label == label)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Trains every (loss, seed) cell, in parallel, and merges in config order.
pub fn run_bench(config: &RunConfig, seeds: &[u64]) -> anyhow::Result<BenchResult> {
    let losses = config.require_bench_losses()?;
    let ds = config.load_dataset()?;
    let frac = config.split.train_fraction;
    let splits: Vec<(LabeledDataset, LabeledDataset)> = seeds
        .iter()
        .map(|&seed| stratified_split(&ds, frac, seed))
        .collect::<alpa_core::Result<_>>()?;

    let cells: Vec<(usize, usize)> = (0..losses.len())
        .flat_map(|l| (0..seeds.len()).map(move |s| (l, s)))
        .collect();
    let outcomes: Vec<anyhow::Result<MetricsReport>> = cells
        .par_iter()
        .map(|&(l, s)| {
            let (train_set, test_set) = &splits[s];
            let cfg = config
                .training
                .to_train_config(losses[l].spec.clone(), seeds[s]);
            let history = train(train_set, &cfg)
                .with_context(|| format!("loss `{}`, seed {}", losses[l].label, seeds[s]))?;
            Ok(evaluate(&history.model, test_set)?)
        })
        .collect();

    let mut outcomes = outcomes.into_iter();
    let mut results = Vec::with_capacity(losses.len());
    for entry in losses {
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let report = outcomes.next().expect("one outcome per cell")?;
            reports.push(SeedReport { seed, report });
        }
        let ba: Vec<f64> = reports.iter().map(|r| r.report.balanced_accuracy).collect();
        let worst: Vec<f64> = reports
            .iter()
            .map(|r| r.report.worst_recall_mean(WORST_CLASSES))
            .collect();
        results.push(LossResult {
            label: entry.label.clone(),
            loss_spec: entry.spec.clone(),
            median_balanced_accuracy: median(&ba),
            median_worst3_recall: median(&worst),
            reports,
        });
    }
    Ok(BenchResult {
        schema_version: SCHEMA_VERSION,
        class_counts: ds.class_counts(),
        train_fraction: frac,
        seeds: seeds.to_vec(),
        losses: results,
    })
}

/// Per-class recall and F1 (means over seeds), one column pair per loss,
/// followed by the median balanced accuracy and worst-three recall rows.
pub fn format_table(result: &BenchResult) -> String {
    use std::fmt::Write;
    const CELL: usize = 8;
    let mut out = String::new();
    let _ = write!(out, "{:<24}", "class (test samples)");
    for loss in &result.losses {
        let width = 2 * CELL + 1;
        let mut label = loss.label.clone();
        label.truncate(width);
        let _ = write!(out, " | {label:^width$}");
    }
    out.push('\n');
    let _ = write!(out, "{:<24}", "");
    for _ in &result.losses {
        let _ = write!(out, " | {:>CELL$} {:>CELL$}", "Recall", "F1");
    }
    out.push('\n');

    let test_counts = result
        .losses
        .first()
        .and_then(|l| l.reports.first())
        .map(|r| r.report.class_counts.clone())
        .unwrap_or_default();
    for (k, n) in test_counts.iter().enumerate() {
        let _ = write!(out, "{:<24}", format!("{k} ({n})"));
        for loss in &result.losses {
            let n = loss.reports.len() as f64;
            let recall = loss
                .reports
                .iter()
                .map(|r| r.report.per_class_recall[k])
                .sum::<f64>()
                / n;
            let f1 = loss
                .reports
                .iter()
                .map(|r| r.report.per_class_f1[k])
                .sum::<f64>()
                / n;
            let _ = write!(out, " | {recall:>CELL$.4} {f1:>CELL$.4}");
        }
        out.push('\n');
    }
    let summary = |out: &mut String, name: &str, pick: fn(&LossResult) -> f64| {
        let _ = write!(out, "{name:<24}");
        for loss in &result.losses {
            let _ = write!(out, " | {:>w$.4}", pick(loss), w = 2 * CELL + 1);
        }
        out.push('\n');
    };
    summary(&mut out, "Balanced acc (median)", |l| {
        l.median_balanced_accuracy
    });
    summary(&mut out, "Worst-3 recall (median)", |l| {
        l.median_worst3_recall
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
