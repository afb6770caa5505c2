//! Per-class precision/recall/F1, macro and weighted F1, confusion matrices.

use std::fmt::Write as _;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ClassLabel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Evaluation summary. `confusion[gold][pred]`, indexed in `per_class` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Vec<Vec<usize>>,
    pub per_class: IndexMap<ClassLabel, ClassMetrics>,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    MacroF1,
    WeightedF1,
    Accuracy,
}

impl EvalReport {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::MacroF1 => self.macro_f1,
            Metric::WeightedF1 => self.weighted_f1,
            Metric::Accuracy => self.accuracy,
        }
    }

    pub fn classes(&self) -> Vec<ClassLabel> {
        self.per_class.keys().copied().collect()
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("gold has {gold} labels but pred has {pred}")]
    LengthMismatch { gold: usize, pred: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("label {0} is not among the evaluated classes")]
    UnknownLabel(ClassLabel),
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn evaluate(gold: &[ClassLabel], pred: &[ClassLabel], classes: &[ClassLabel]) -> Result<EvalReport, MetricsError> {
    if gold.len() != pred.len() {
        return Err(MetricsError::LengthMismatch { gold: gold.len(), pred: pred.len() });
    }
    if gold.is_empty() {
        return Err(MetricsError::Empty);
    }
    let index = |l: ClassLabel| classes.iter().position(|c| *c == l).ok_or(MetricsError::UnknownLabel(l));
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&g, &p) in gold.iter().zip(pred) {
        confusion[index(g)?][index(p)?] += 1;
    }

    let total = gold.len();
    let mut per_class = IndexMap::with_capacity(k);
    let mut correct = 0;
    for (i, &label) in classes.iter().enumerate() {
        let tp = confusion[i][i];
        let support: usize = confusion[i].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        correct += tp;
        per_class.insert(label, ClassMetrics { precision, recall, f1, support });
    }
    let macro_f1 = if k == 0 { 0.0 } else { per_class.values().map(|m| m.f1).sum::<f64>() / k as f64 };
    let weighted_f1 = per_class.values().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64;
    Ok(EvalReport { confusion, per_class, macro_f1, weighted_f1, accuracy: ratio(correct, total) })
}

/// Plain-text table with four-decimal floats.
pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    let width = report.per_class.keys().map(|c| c.as_str().len()).max().unwrap_or(5).max(12);
    let _ = writeln!(out, "{:<width$} {:>9} {:>9} {:>9} {:>9}", "class", "precision", "recall", "f1", "support");
    for (label, m) in &report.per_class {
        let _ = writeln!(
            out,
            "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>9}",
            label.as_str(),
            m.precision,
            m.recall,
            m.f1,
            m.support
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<width$} {:>9.4}", "accuracy", report.accuracy);
    let _ = writeln!(out, "{:<width$} {:>9.4}", "macro_f1", report.macro_f1);
    let _ = writeln!(out, "{:<width$} {:>9.4}", "weighted_f1", report.weighted_f1);
    let _ = writeln!(out);
    let _ = writeln!(out, "confusion (rows = gold, cols = predicted)");
    for (label, row) in report.per_class.keys().zip(&report.confusion) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>7}")).collect();
        let _ = writeln!(out, "{:<width$} {}", label.as_str(), cells.join(" "));
    }
    out
}
