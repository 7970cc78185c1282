use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{aggregate_runs, ConfusionMatrix, EvalError, MetricSet};

pub const CONFIDENCE: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateEntry {
    /// `None` when no run produced a defined value.
    pub mean: Option<f64>,
    pub half_width: Option<f64>,
    /// Runs with a defined value.
    pub n: usize,
}

/// Per backbone and augmentation condition summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub backbone: String,
    pub cyclegan: bool,
    pub runs: Vec<MetricSet<f64>>,
    pub aggregate: BTreeMap<String, AggregateEntry>,
    pub confusion: ConfusionMatrix,
    pub roc: Vec<[f64; 2]>,
    pub config_hash: String,
}

/// Aggregates each metric over the runs where it is defined.
pub fn aggregate_metric_sets(
    runs: &[MetricSet<f64>],
) -> Result<BTreeMap<String, AggregateEntry>, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut out = BTreeMap::new();
    for (k, name) in MetricSet::<f64>::NAMES.iter().enumerate() {
        let defined: Vec<f64> = runs.iter().filter_map(|r| r.values()[k]).collect();
        let entry = if defined.is_empty() {
            AggregateEntry {
                mean: None,
                half_width: None,
                n: 0,
            }
        } else {
            let a = aggregate_runs(&defined, CONFIDENCE)?;
            AggregateEntry {
                mean: Some(a.mean),
                half_width: Some(a.half_width),
                n: defined.len(),
            }
        };
        out.insert(name.to_string(), entry);
    }
    Ok(out)
}

/// `mean ± half_width` in percent with two decimals, or `n/a`.
pub fn format_cell(entry: &AggregateEntry) -> String {
    match (entry.mean, entry.half_width) {
        (Some(m), Some(h)) => format!("{:.2} ± {:.2}", m * 100.0, h * 100.0),
        _ => "n/a".to_string(),
    }
}

pub const TABLE_COLUMNS: [(&str, &str); 5] = [
    ("accuracy", "Accuracy"),
    ("precision", "Precision"),
    ("recall", "Recall"),
    ("f1", "F1-score"),
    ("auc", "AUC"),
];

/// Markdown tables, one per augmentation condition, rows in input order.
pub fn comparison_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    for (cyclegan, title) in [(false, "Results without CycleGAN"), (true, "Results with CycleGAN")] {
        let rows: Vec<&EvalReport> = reports.iter().filter(|r| r.cyclegan == cyclegan).collect();
        if rows.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("## {title}\n\n| Model | Runs |"));
        for (_, header) in TABLE_COLUMNS {
            out.push_str(&format!(" {header} |"));
        }
        out.push_str("\n|---|---|");
        out.push_str(&"---|".repeat(TABLE_COLUMNS.len()));
        out.push('\n');
        for r in rows {
            out.push_str(&format!("| {} | {} |", r.backbone, r.runs.len()));
            for (key, _) in TABLE_COLUMNS {
                let cell = r.aggregate.get(key).map(format_cell).unwrap_or_else(|| "n/a".into());
                out.push_str(&format!(" {cell} |"));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_renders_percent_with_two_decimals() {
        let e = AggregateEntry {
            mean: Some(0.996),
            half_width: Some(0.0079),
            n: 10,
        };
        assert_eq!(format_cell(&e), "99.60 ± 0.79");
    }

    #[test]
    fn single_run_renders_zero_half_width() {
        let run = MetricSet {
            accuracy: Some(0.5),
            precision: None,
            recall: Some(1.0),
            f1: None,
            auc: Some(0.75),
        };
        let agg = aggregate_metric_sets(&[run]).unwrap();
        assert_eq!(format_cell(&agg["accuracy"]), "50.00 ± 0.00");
        assert_eq!(format_cell(&agg["precision"]), "n/a");
    }
}
