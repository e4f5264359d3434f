//! Report files: the per-month CSV, the summary JSON and the grid heat table.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BacktestReport, Comparison, GridResult, MonthResult, SkipNotice, Summary};
use crate::error::{Error, Result};
use crate::month::YearMonth;
use crate::scoring::ScoringMethod;

pub const REPORT_HEADER: [&str; 22] = [
    "cutoff",
    "predictor",
    "scorer",
    "eps",
    "top_p",
    "n_train",
    "n_test",
    "n_targets",
    "n_predictions",
    "tp",
    "fp",
    "fn",
    "tn",
    "tpr",
    "fpr",
    "precision",
    "recall",
    "f1",
    "mcc",
    "accuracy",
    "amplification",
    "warnings",
];

/// One row of the report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub cutoff: YearMonth,
    pub predictor: String,
    pub scorer: String,
    pub eps: f64,
    pub top_p: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_targets: usize,
    pub n_predictions: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub accuracy: Option<f64>,
    pub amplification: Option<f64>,
    /// Warnings joined by `" | "`.
    pub warnings: String,
}

const WARNING_SEP: &str = " | ";

impl ReportRow {
    fn of(report: &BacktestReport, m: &MonthResult, scorer: ScoringMethod) -> Self {
        let c = m.counts(scorer);
        let s = m.metrics(scorer);
        Self {
            cutoff: m.cutoff,
            predictor: report.predictor_tag.clone(),
            scorer: scorer.as_str().to_string(),
            eps: report.params.scoring.eps,
            top_p: report.params.scoring.top_p,
            n_train: m.n_train,
            n_test: m.n_test,
            n_targets: m.n_targets,
            n_predictions: m.n_predictions,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            tn: c.tn,
            tpr: s.tpr,
            fpr: s.fpr,
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
            mcc: s.mcc,
            accuracy: s.accuracy,
            amplification: m.amplification,
            warnings: m.warnings.join(WARNING_SEP),
        }
    }

    pub fn warnings(&self) -> Vec<&str> {
        if self.warnings.is_empty() {
            Vec::new()
        } else {
            self.warnings.split(WARNING_SEP).collect()
        }
    }
}

/// Writes rows for every month, scorer and report, in report order.
pub fn write_report_csv<W: Write>(reports: &[&BacktestReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        for m in &r.months {
            for scorer in [ScoringMethod::Naive, ScoringMethod::ClusterAware] {
                w.serialize(ReportRow::of(r, m, scorer))?;
            }
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: "<report csv>".into(),
        source: e,
    })
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(REPORT_HEADER) {
        return Err(Error::MalformedStore {
            path: path.to_path_buf(),
            detail: "unexpected report CSV header".into(),
        });
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub predictor: String,
    pub eps: f64,
    pub top_p: f64,
    pub horizon_months: u32,
    pub seed: u64,
    pub skipped: Vec<SkipNotice>,
    #[serde(flatten)]
    pub summary: Summary,
}

/// The summary JSON document: per-predictor fits and means, comparisons
/// against the baseline and the union of all warnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDoc {
    pub reports: Vec<ReportSummary>,
    pub comparisons: Vec<Comparison>,
    pub warnings: Vec<String>,
}

impl SummaryDoc {
    pub fn new(reports: &[&BacktestReport], comparisons: Vec<Comparison>) -> Self {
        let warnings: BTreeSet<String> = reports
            .iter()
            .flat_map(|r| r.summary.warnings.iter().cloned())
            .collect();
        Self {
            reports: reports
                .iter()
                .map(|r| ReportSummary {
                    predictor: r.predictor_tag.clone(),
                    eps: r.params.scoring.eps,
                    top_p: r.params.scoring.top_p,
                    horizon_months: r.params.scoring.horizon_months,
                    seed: r.params.seed,
                    skipped: r.skipped.clone(),
                    summary: r.summary.clone(),
                })
                .collect(),
            comparisons,
            warnings: warnings.into_iter().collect(),
        }
    }
}

pub fn write_summary_json<W: Write>(doc: &SummaryDoc, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, doc)?;
    writeln!(out).map_err(|e| Error::Io {
        path: "<summary json>".into(),
        source: e,
    })
}

#[derive(Serialize)]
struct HeatRow<'a> {
    predictor: &'a str,
    scorer: &'static str,
    eps: f64,
    top_p: f64,
    n_months: Option<usize>,
    mean_precision: Option<f64>,
    mean_accuracy: Option<f64>,
    fit_a: Option<f64>,
    fit_b: Option<f64>,
    status: String,
}

/// Mean precision and accuracy per (predictor, scorer, eps, top-P).
pub fn write_heat_csv<W: Write>(grid: &GridResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for scorer in [ScoringMethod::Naive, ScoringMethod::ClusterAware] {
        for cell in &grid.cells {
            let row = match &cell.outcome {
                Ok(r) => {
                    let mean = r.summary.mean(scorer);
                    let fit = r.summary.fit(scorer);
                    HeatRow {
                        predictor: &cell.predictor,
                        scorer: scorer.as_str(),
                        eps: cell.eps,
                        top_p: cell.top_p,
                        n_months: Some(r.summary.n_months),
                        mean_precision: mean.precision,
                        mean_accuracy: mean.accuracy,
                        fit_a: fit.map(|f| f.a),
                        fit_b: fit.map(|f| f.b),
                        status: "ok".into(),
                    }
                }
                Err(e) => HeatRow {
                    predictor: &cell.predictor,
                    scorer: scorer.as_str(),
                    eps: cell.eps,
                    top_p: cell.top_p,
                    n_months: None,
                    mean_precision: None,
                    mean_accuracy: None,
                    fit_a: None,
                    fit_b: None,
                    status: format!("failed: {e}"),
                },
            };
            w.serialize(row)?;
        }
    }
    w.flush().map_err(|e| Error::Io {
        path: "<heat csv>".into(),
        source: e,
    })
}
