//! Rates and summary statistics derived from confusion counts, plus the
//! logarithmic ROC fit `tpr = a * ln(fpr) + b`.
//!
//! Undefined values are `None`, never NaN. The one exception is MCC, which
//! is 0 when any factor of its denominator is 0.

use serde::{Deserialize, Serialize};

use crate::scoring::ConfusionCounts;

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// `(TP / (TP + FN), FP / (FP + TN))`.
pub fn rates(c: &ConfusionCounts) -> (Option<f64>, Option<f64>) {
    (ratio(c.tp, c.tp + c.fn_), ratio(c.fp, c.fp + c.tn))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricSet {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub accuracy: Option<f64>,
}

pub fn derived_metrics(c: &ConfusionCounts) -> MetricSet {
    let (tpr, fpr) = rates(c);
    let (tp, fp, fn_, tn) = (c.tp, c.fp, c.fn_, c.tn);
    let factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    let mcc = if factors.contains(&0) {
        0.0
    } else {
        let num = tp as i128 * tn as i128 - fp as i128 * fn_ as i128;
        let pair = |x: u64, y: u64| ((x as u128 * y as u128) as f64).sqrt();
        let den = pair(factors[0], factors[1]) * pair(factors[2], factors[3]);
        (num as f64 / den).clamp(-1.0, 1.0)
    };
    MetricSet {
        tpr,
        fpr,
        precision: ratio(tp, tp + fp),
        recall: tpr,
        // 2PR / (P + R) written over counts; defined whenever any of tp, fp, fn is non-zero
        f1: ratio(2 * tp, 2 * tp + fp + fn_),
        mcc: Some(mcc),
        accuracy: ratio(tp + tn, c.total()),
    }
}

/// Least-squares fit of `tpr = a * ln(fpr) + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub n_points: usize,
    /// Points dropped for zero FPR or an absent coordinate.
    pub n_excluded: usize,
    pub residual_rms: f64,
    /// Observed FPR range of the fitted points.
    pub fpr_min: f64,
    pub fpr_max: f64,
}

impl LogFit {
    pub fn eval(&self, fpr: f64) -> f64 {
        self.a * fpr.ln() + self.b
    }
}

/// Fits the usable points; `None` when fewer than two remain or all share one FPR.
/// The result does not depend on the order of `points`.
pub fn log_fit(points: &[(Option<f64>, Option<f64>)]) -> Option<LogFit> {
    let mut usable: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|&(x, y)| match (x, y) {
            (Some(x), Some(y)) if x > 0.0 && x.is_finite() && y.is_finite() => Some((x, y)),
            _ => None,
        })
        .collect();
    let n_excluded = points.len() - usable.len();
    if usable.len() < 2 {
        return None;
    }
    usable.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)));
    let n = usable.len() as f64;
    let xs: Vec<f64> = usable.iter().map(|p| p.0.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&usable).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let sse: f64 = xs.iter().zip(&usable).map(|(x, p)| (p.1 - (a * x + b)).powi(2)).sum();
    Some(LogFit {
        a,
        b,
        n_points: usable.len(),
        n_excluded,
        residual_rms: (sse / n).sqrt(),
        fpr_min: usable[0].0,
        fpr_max: usable[usable.len() - 1].0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum UpliftGap {
    /// `fpr` lies outside the FPR range both fits observed.
    OutOfRange { fpr: f64, lo: f64, hi: f64 },
    /// The baseline fit is not positive at `fpr`.
    NonPositiveBaseline { fpr: f64 },
}

impl std::fmt::Display for UpliftGap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UpliftGap::OutOfRange { fpr, lo, hi } => {
                write!(f, "fpr {fpr} outside the overlapping observed range [{lo}, {hi}]")
            }
            UpliftGap::NonPositiveBaseline { fpr } => write!(f, "baseline fit is not positive at fpr {fpr}"),
        }
    }
}

/// Overlap of the observed FPR ranges of two fits.
pub fn overlap(alg: &LogFit, base: &LogFit) -> Option<(f64, f64)> {
    let lo = alg.fpr_min.max(base.fpr_min);
    let hi = alg.fpr_max.min(base.fpr_max);
    (lo <= hi).then_some((lo, hi))
}

/// Ratio of fitted TPRs at a matched FPR.
pub fn uplift_at(alg: &LogFit, base: &LogFit, fpr: f64) -> Result<f64, UpliftGap> {
    let (lo, hi) = overlap(alg, base).unwrap_or((f64::NAN, f64::NAN));
    if !(fpr >= lo && fpr <= hi) {
        return Err(UpliftGap::OutOfRange { fpr, lo, hi });
    }
    let denom = base.eval(fpr);
    if denom <= 0.0 {
        return Err(UpliftGap::NonPositiveBaseline { fpr });
    }
    Ok(alg.eval(fpr) / denom)
}
