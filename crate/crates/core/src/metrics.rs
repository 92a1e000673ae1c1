//! Confusion-matrix metrics and table-shaped evaluation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("{predictions} predictions but {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Metrics whose denominator is zero are `None`, which is distinct from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub f_beta: Option<f64>,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean of precision and sensitivity. Zero if either is zero.
pub fn f_score(precision: f64, sensitivity: f64) -> f64 {
    if precision <= 0.0 || sensitivity <= 0.0 {
        0.0
    } else {
        2.0 / (1.0 / precision + 1.0 / sensitivity)
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let precision = ratio(cm.tp, cm.tp + cm.fp);
    let sensitivity = ratio(cm.tp, cm.tp + cm.fn_);
    let f_beta = match (precision, sensitivity) {
        (Some(p), Some(s)) => Some(f_score(p, s)),
        _ => None,
    };
    Ok(MetricsReport {
        precision,
        sensitivity,
        f_beta,
        accuracy: (cm.tp + cm.tn) as f64 / total as f64,
    })
}

/// Tallies binary predictions against labels (`true` = positive class).
pub fn evaluate_classifier(predictions: &[bool], labels: &[bool]) -> Result<ConfusionMatrix, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        match (p, l) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// One machine-readable report row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub modality: String,
    pub precision: Option<f64>,
    pub sensitivity: Option<f64>,
    pub f_beta: Option<f64>,
    pub accuracy: f64,
}

impl ReportRow {
    pub fn new(modality: impl Into<String>, m: &MetricsReport) -> Self {
        Self {
            modality: modality.into(),
            precision: m.precision,
            sensitivity: m.sensitivity,
            f_beta: m.f_beta,
            accuracy: m.accuracy,
        }
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

/// Plain-text table with one column per modality and one row per metric.
pub fn format_table(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.modality.len()).max().unwrap_or(0).max(8);
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "Metric");
    for r in rows {
        let _ = write!(out, " | {:>width$}", r.modality);
    }
    out.push('\n');
    out.push_str(&"-".repeat(12 + rows.len() * (width + 3)));
    out.push('\n');
    type Cell = fn(&ReportRow) -> Option<f64>;
    let lines: [(&str, Cell); 4] = [
        ("F-Beta", |r| r.f_beta),
        ("Precision", |r| r.precision),
        ("Sensitivity", |r| r.sensitivity),
        ("Accuracy", |r| Some(r.accuracy)),
    ];
    for (name, get) in lines {
        let _ = write!(out, "{name:<12}");
        for r in rows {
            let _ = write!(out, " | {:>width$}", cell(get(r)));
        }
        out.push('\n');
    }
    out
}

/// CSV with header `modality,precision,sensitivity,f_beta,accuracy`; undefined
/// cells are empty.
pub fn format_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let m = compute_metrics(&ConfusionMatrix::new(10, 0, 0, 10)).unwrap();
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.f_beta, Some(1.0));
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn hand_counted_example() {
        let m = compute_metrics(&ConfusionMatrix::new(3, 1, 2, 4)).unwrap();
        assert!((m.precision.unwrap() - 0.75).abs() < 1e-12);
        assert!((m.sensitivity.unwrap() - 0.6).abs() < 1e-12);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.f_beta.unwrap() - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
    }

    #[test]
    fn undefined_is_not_zero() {
        let m = compute_metrics(&ConfusionMatrix::new(0, 0, 0, 5)).unwrap();
        assert_eq!(m.precision, None);
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.f_beta, None);
        assert_eq!(m.accuracy, 1.0);
        let m = compute_metrics(&ConfusionMatrix::new(0, 3, 2, 5)).unwrap();
        assert_eq!(m.precision, Some(0.0));
        assert_eq!(m.f_beta, Some(0.0));
        assert_eq!(
            compute_metrics(&ConfusionMatrix::default()),
            Err(MetricsError::EmptyMatrix)
        );
    }

    #[test]
    fn tally_extremes_and_length_check() {
        let labels = [true, false, true, true, false];
        let cm = evaluate_classifier(&labels, &labels).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        let cm = evaluate_classifier(&flipped, &labels).unwrap();
        assert_eq!((cm.tp, cm.tn), (0, 0));
        assert!(evaluate_classifier(&labels, &labels[..2]).is_err());
    }

    #[test]
    fn published_vascular_cell() {
        assert!((f_score(0.951, 0.869) - 0.908).abs() <= 0.0005);
        assert_eq!(f_score(0.917, 0.917), 0.917);
    }

    #[test]
    fn accuracy_symmetric_under_class_swap() {
        let a = compute_metrics(&ConfusionMatrix::new(7, 2, 3, 11)).unwrap();
        let b = compute_metrics(&ConfusionMatrix::new(11, 3, 2, 7)).unwrap();
        assert_eq!(a.accuracy, b.accuracy);
    }

    #[test]
    fn table_and_csv_layout() {
        let rows = vec![
            ReportRow::new("vocal", &compute_metrics(&ConfusionMatrix::new(3, 1, 2, 4)).unwrap()),
            ReportRow::new("retina", &compute_metrics(&ConfusionMatrix::new(0, 0, 0, 4)).unwrap()),
        ];
        let table = format_table(&rows);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].contains("vocal") && lines[0].contains("retina"));
        assert!(lines[3].starts_with("Precision") && lines[3].contains("0.750") && lines[3].contains("n/a"));
        let csv = format_csv(&rows);
        assert_eq!(
            csv,
            "modality,precision,sensitivity,f_beta,accuracy\n\
             vocal,0.75,0.6,0.6666666666666666,0.7\nretina,,,,1.0\n"
        );
    }
}
