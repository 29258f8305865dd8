//! CSV export. Numbers use 17 significant digits so every f64 re-parses to
//! the identical value.

use std::fmt::Write;

use ndarray::Array2;

use super::IoError;
use crate::apps::RocCurve;
use crate::dr::ChannelChart;
use crate::metrics::MetricsReport;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn table(col: &str, ids: &[u64], values: &Array2<f64>) -> String {
    let mut s = String::from("sample_id");
    for j in 0..values.ncols() {
        let _ = write!(s, ",{col}{j}");
    }
    s.push('\n');
    for (id, row) in ids.iter().zip(values.rows()) {
        let _ = write!(s, "{id}");
        for &v in row {
            let _ = write!(s, ",{}", num(v));
        }
        s.push('\n');
    }
    s
}

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(1)
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn field<T: std::str::FromStr>(line: usize, s: &str) -> Result<T, IoError> {
    s.parse().map_err(|_| IoError::Csv { line, reason: format!("cannot parse {s:?}") })
}

fn parse_table(text: &str) -> Result<(Vec<u64>, Array2<f64>), IoError> {
    let h = text.lines().next().ok_or(IoError::Csv { line: 1, reason: "missing header".into() })?;
    let width = h.split(',').count();
    if h.split(',').next().map(str::trim) != Some("sample_id") {
        return Err(IoError::Csv { line: 1, reason: "first column must be sample_id".into() });
    }
    if width < 2 {
        return Err(IoError::Csv { line: 1, reason: "no coordinate columns".into() });
    }
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    for (line, f) in rows(text) {
        if f.len() != width {
            return Err(IoError::Csv { line, reason: format!("expected {width} fields, found {}", f.len()) });
        }
        ids.push(field(line, f[0])?);
        for v in &f[1..] {
            vals.push(field(line, v)?);
        }
    }
    let n = ids.len();
    Ok((ids, Array2::from_shape_vec((n, width - 1), vals).expect("row widths checked")))
}

/// `sample_id,c0,c1,...` with one row per chart point.
pub fn chart_to_csv(chart: &ChannelChart) -> String {
    table("c", &chart.sample_ids, &chart.coordinates)
}

/// Inverse of [`chart_to_csv`]: sample ids and coordinates.
pub fn parse_chart_csv(text: &str) -> Result<(Vec<u64>, Array2<f64>), IoError> {
    parse_table(text)
}

/// `sample_id,x0,x1,...` ground-truth coordinates (positions in meters, or
/// arc length for the spiral).
pub fn truth_to_csv(ids: &[u64], truth: &Array2<f64>) -> String {
    table("x", ids, truth)
}

pub fn parse_truth_csv(text: &str) -> Result<(Vec<u64>, Array2<f64>), IoError> {
    parse_table(text)
}

/// `metric,k,value`; `k` is empty for the K-independent metrics.
pub fn report_to_csv(report: &MetricsReport) -> String {
    let mut s = String::from("metric,k,value\n");
    for &(k, v) in &report.trustworthiness {
        let _ = writeln!(s, "trustworthiness,{k},{}", num(v));
    }
    for &(k, v) in &report.continuity {
        let _ = writeln!(s, "continuity,{k},{}", num(v));
    }
    let _ = writeln!(s, "kruskal_stress,,{}", num(report.kruskal_stress));
    if let Some(r) = report.alignment_rmse {
        let _ = writeln!(s, "alignment_rmse,,{}", num(r));
    }
    s
}

/// `threshold,fpr,tpr` in increasing threshold order.
pub fn roc_to_csv(roc: &RocCurve) -> String {
    let mut s = String::from("threshold,fpr,tpr\n");
    for i in 0..roc.thresholds.len() {
        let _ = writeln!(s, "{},{},{}", num(roc.thresholds[i]), num(roc.fpr[i]), num(roc.tpr[i]));
    }
    s
}

/// `true_cell,predicted_cell,count` for every cell pair.
pub fn confusion_to_csv(confusion: &[Vec<usize>]) -> String {
    let mut s = String::from("true_cell,predicted_cell,count\n");
    for (t, row) in confusion.iter().enumerate() {
        for (p, c) in row.iter().enumerate() {
            let _ = writeln!(s, "{t},{p},{c}");
        }
    }
    s
}
