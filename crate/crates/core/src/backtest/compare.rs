use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{BacktestReport, MeanMetrics};
use crate::error::{Error, Result};
use crate::metrics::{overlap, uplift_at, LogFit, UpliftGap};
use crate::month::YearMonth;
use crate::scoring::ScoringMethod;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonthDelta {
    pub cutoff: YearMonth,
    /// Algorithm minus baseline; absent when either side is undefined.
    pub d_fpr: Option<f64>,
    pub d_tpr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpliftPoint {
    pub fpr: f64,
    pub uplift: Option<f64>,
    pub gap: Option<UpliftGap>,
}

impl UpliftPoint {
    fn at(alg: &LogFit, base: &LogFit, fpr: f64) -> Self {
        match uplift_at(alg, base, fpr) {
            Ok(u) => Self {
                fpr,
                uplift: Some(u),
                gap: None,
            },
            Err(g) => Self {
                fpr,
                uplift: None,
                gap: Some(g),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scorer: ScoringMethod,
    pub algorithm: String,
    pub baseline: String,
    pub deltas: Vec<MonthDelta>,
    pub fit_algorithm: Option<LogFit>,
    pub fit_baseline: Option<LogFit>,
    /// Median FPR over baseline months with positive FPR.
    pub median_baseline_fpr: Option<f64>,
    /// Uplift at the median baseline FPR.
    pub uplift_at_median: Option<UpliftPoint>,
    /// Uplift at log-spaced FPRs across the overlapping observed range.
    pub uplift_table: Vec<UpliftPoint>,
    pub mean_algorithm: MeanMetrics,
    pub mean_baseline: MeanMetrics,
    pub warnings: Vec<String>,
}

const TABLE_POINTS: usize = 5;

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

fn sub(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

/// Pairs two reports month by month and measures the algorithm's uplift
/// over the baseline under `scorer`.
pub fn compare(alg: &BacktestReport, base: &BacktestReport, scorer: ScoringMethod) -> Result<Comparison> {
    let (sa, sb) = (&alg.params.scoring, &base.params.scoring);
    if sa.eps != sb.eps || sa.top_p != sb.top_p || sa.horizon_months != sb.horizon_months {
        return Err(Error::Incomparable(format!(
            "scoring parameters differ: eps {} vs {}, top_p {} vs {}, horizon {} vs {}",
            sa.eps, sb.eps, sa.top_p, sb.top_p, sa.horizon_months, sb.horizon_months
        )));
    }
    let ca: Vec<YearMonth> = alg.months.iter().map(|m| m.cutoff).collect();
    let cb: Vec<YearMonth> = base.months.iter().map(|m| m.cutoff).collect();
    if ca != cb {
        return Err(Error::Incomparable(format!(
            "scored cutoffs differ ({} vs {} months)",
            ca.len(),
            cb.len()
        )));
    }

    let deltas = alg
        .months
        .iter()
        .zip(&base.months)
        .map(|(a, b)| {
            let (ma, mb) = (a.metrics(scorer), b.metrics(scorer));
            MonthDelta {
                cutoff: a.cutoff,
                d_fpr: sub(ma.fpr, mb.fpr),
                d_tpr: sub(ma.tpr, mb.tpr),
            }
        })
        .collect();

    let fit_algorithm = alg.summary.fit(scorer).copied();
    let fit_baseline = base.summary.fit(scorer).copied();
    let median_baseline_fpr = median(
        base.months
            .iter()
            .filter_map(|m| m.metrics(scorer).fpr)
            .filter(|&f| f > 0.0)
            .collect(),
    );

    let (mut uplift_at_median, mut uplift_table) = (None, Vec::new());
    if let (Some(fa), Some(fb)) = (&fit_algorithm, &fit_baseline) {
        uplift_at_median = median_baseline_fpr.map(|f| UpliftPoint::at(fa, fb, f));
        if let Some((lo, hi)) = overlap(fa, fb) {
            let (llo, lhi) = (lo.ln(), hi.ln());
            let steps = if lo == hi { 1 } else { TABLE_POINTS };
            uplift_table = (0..steps)
                .map(|i| {
                    let fpr = if i == 0 {
                        lo
                    } else if i + 1 == steps {
                        hi
                    } else {
                        (llo + (lhi - llo) * i as f64 / (steps - 1) as f64).exp()
                    };
                    UpliftPoint::at(fa, fb, fpr)
                })
                .collect();
        }
    }

    let warnings: BTreeSet<String> = alg
        .summary
        .warnings
        .iter()
        .chain(&base.summary.warnings)
        .cloned()
        .collect();
    Ok(Comparison {
        scorer,
        algorithm: alg.predictor_tag.clone(),
        baseline: base.predictor_tag.clone(),
        deltas,
        fit_algorithm,
        fit_baseline,
        median_baseline_fpr,
        uplift_at_median,
        uplift_table,
        mean_algorithm: *alg.summary.mean(scorer),
        mean_baseline: *base.summary.mean(scorer),
        warnings: warnings.into_iter().collect(),
    })
}
