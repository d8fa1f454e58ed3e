//! Per-variant summary tables.
//!
//! A summary depends only on the traces it is built from, so rebuilding it
//! from files written by `skm run` reproduces `summary.json` exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{Experiment, Metric};
use crate::analysis::{bound_envelope_check, fit_rate};
use crate::error::Result;
use crate::iteration::Trace;

/// Fraction of trailing rows used for the rate fit.
pub const RATE_WINDOW: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub name: String,
    pub runs: usize,
    pub diverged: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_final_avg_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_final_avg_residual: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_final_dist_to_ref_l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_final_dist_to_ref_l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_rate_slope: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub envelope_pass_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub name: String,
    pub metrics: Vec<Metric>,
    pub rows: Vec<VariantSummary>,
}

/// Median of finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

fn mean(values: &[f64]) -> Option<f64> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Summarizes one variant. Diverged traces are counted but excluded from
/// every statistic.
pub fn summarize_variant(name: &str, metrics: &[Metric], traces: &[Trace]) -> VariantSummary {
    let ok: Vec<&Trace> = traces.iter().filter(|t| !t.meta.diverged).collect();
    let wants = |m| metrics.contains(&m);
    let avg: Vec<f64> = ok.iter().filter_map(|t| t.final_avg_residual()).collect();
    let dist: Vec<f64> = ok.iter().filter_map(|t| t.meta.final_dist_to_ref).collect();
    let slopes: Vec<f64> = ok
        .iter()
        .filter_map(|t| fit_rate(t, t.meta.rate_exponent, RATE_WINDOW).ok())
        .map(|f| f.fitted_slope)
        .collect();
    let envelope = (!ok.is_empty()).then(|| {
        ok.iter()
            .filter(|t| bound_envelope_check(t, t.meta.rate_exponent))
            .count() as f64
            / ok.len() as f64
    });

    let pick = |m: Metric, v: Option<f64>| if wants(m) { v } else { None };
    VariantSummary {
        name: name.to_owned(),
        runs: traces.len(),
        diverged: traces.len() - ok.len(),
        median_final_avg_residual: pick(Metric::FinalAvgResidual, median(&avg)),
        mean_final_avg_residual: pick(Metric::FinalAvgResidual, mean(&avg)),
        median_final_dist_to_ref_l1: pick(Metric::FinalDistToRefL1, median(&dist)),
        mean_final_dist_to_ref_l1: pick(Metric::FinalDistToRefL1, mean(&dist)),
        median_rate_slope: pick(Metric::RateFit, median(&slopes)),
        envelope_pass_rate: pick(Metric::EnvelopeCheck, envelope),
    }
}

pub fn summarize(name: &str, metrics: &[Metric], variants: &[(String, Vec<Trace>)]) -> SummaryTable {
    SummaryTable {
        name: name.to_owned(),
        metrics: metrics.to_vec(),
        rows: variants
            .iter()
            .map(|(v, traces)| summarize_variant(v, metrics, traces))
            .collect(),
    }
}

/// Path of the trace CSV for `(variant, seed)` under `out`.
pub fn trace_path(out: &Path, variant: &str, seed: u64) -> std::path::PathBuf {
    out.join(variant).join(format!("seed_{seed}.csv"))
}

pub fn metadata_path(out: &Path, variant: &str, seed: u64) -> std::path::PathBuf {
    out.join(variant).join(format!("seed_{seed}.json"))
}

/// Rebuilds the summary from the traces `skm run` wrote for `exp`.
pub fn summarize_dir(exp: &Experiment, out: &Path) -> Result<SummaryTable> {
    let mut variants = Vec::with_capacity(exp.variants.len());
    for v in &exp.variants {
        let traces = exp
            .seeds
            .iter()
            .map(|&s| Trace::load(trace_path(out, &v.name, s), metadata_path(out, &v.name, s)))
            .collect::<Result<Vec<_>>>()?;
        variants.push((v.name.clone(), traces));
    }
    Ok(summarize(&exp.name, &exp.report, &variants))
}

type Column = Box<dyn Fn(&VariantSummary) -> String>;

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.4e}"))
}

/// Aligned plain-text rendering with one row per variant.
pub fn render(table: &SummaryTable) -> String {
    let mut headers = vec!["algorithm".to_owned(), "runs".into(), "diverged".into()];
    let mut columns: Vec<Column> = Vec::new();
    let has = |m| table.metrics.contains(&m);
    if has(Metric::FinalAvgResidual) {
        headers.extend(["median avg residual".into(), "mean avg residual".into()]);
        columns.push(Box::new(|r| cell(r.median_final_avg_residual)));
        columns.push(Box::new(|r| cell(r.mean_final_avg_residual)));
    }
    if has(Metric::FinalDistToRefL1) {
        headers.extend(["median l1 dist".into(), "mean l1 dist".into()]);
        columns.push(Box::new(|r| cell(r.median_final_dist_to_ref_l1)));
        columns.push(Box::new(|r| cell(r.mean_final_dist_to_ref_l1)));
    }
    if has(Metric::RateFit) {
        headers.push("median slope".into());
        columns.push(Box::new(|r| r.median_rate_slope.map_or("-".into(), |s| format!("{s:.3}"))));
    }
    if has(Metric::EnvelopeCheck) {
        headers.push("envelope pass".into());
        columns.push(Box::new(|r| r.envelope_pass_rate.map_or("-".into(), |s| format!("{:.0}%", 100.0 * s))));
    }

    let body: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            let mut line = vec![r.name.clone(), r.runs.to_string(), r.diverged.to_string()];
            line.extend(columns.iter().map(|f| f(r)));
            line
        })
        .collect();
    aligned(&headers, &body, &format!("{}\n", table.name))
}

/// Left-aligns the first column and right-aligns the rest.
pub(crate) fn aligned(headers: &[String], body: &[Vec<String>], title: &str) -> String {
    let widths: Vec<usize> = (0..headers.len())
        .map(|i| {
            body.iter()
                .map(|r| r[i].chars().count())
                .chain(std::iter::once(headers[i].chars().count()))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let fmt_row = |cells: &[String]| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = widths[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = widths[i]);
            }
        }
        s.trim_end().to_owned() + "\n"
    };
    let mut out = title.to_owned();
    out += &fmt_row(headers);
    out += &(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  ") + "\n");
    for r in body {
        out += &fmt_row(r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        assert_eq!(median(&[f64::NAN, 1.0]), Some(1.0));
    }

    #[test]
    fn diverged_runs_are_counted_not_averaged() {
        let mut good = Trace::from_residuals(&[0.5, 0.5], &[1.0, 0.0]);
        good.meta.rate_exponent = 0.5;
        let mut bad = Trace::from_residuals(&[0.5], &[1e9]);
        bad.meta.diverged = true;
        let s = summarize_variant("v", &[Metric::FinalAvgResidual], &[good, bad]);
        assert_eq!((s.runs, s.diverged), (2, 1));
        assert_eq!(s.median_final_avg_residual, Some(0.5));
        assert_eq!(s.median_final_dist_to_ref_l1, None);
    }

    #[test]
    fn render_is_aligned() {
        let table = SummaryTable {
            name: "t".into(),
            metrics: vec![Metric::FinalAvgResidual],
            rows: vec![VariantSummary {
                name: "long-variant-name".into(),
                runs: 20,
                diverged: 0,
                median_final_avg_residual: Some(1e-3),
                mean_final_avg_residual: Some(2e-3),
                median_final_dist_to_ref_l1: None,
                mean_final_dist_to_ref_l1: None,
                median_rate_slope: None,
                envelope_pass_rate: None,
            }],
        };
        let text = render(&table);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1].len(), lines[3].len());
    }
}
