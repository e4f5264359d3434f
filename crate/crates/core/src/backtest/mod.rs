//! Walk-forward evaluation: one scored month per cutoff, monthly sweeps,
//! and grid search over (top-P, eps, predictor).
//!
//! Every month is a pure function of the corpus, the parameters and a seed
//! derived from `(seed, predictor, top_p, eps, cutoff)`, so months run in
//! parallel and results never depend on scheduling.

mod compare;
mod report;

use std::collections::BTreeSet;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, CutoffSplit};
use crate::error::{Error, Result};
use crate::metrics::{derived_metrics, log_fit, LogFit, MetricSet};
use crate::month::YearMonth;
use crate::predict::{n_predictions_for, PredictContext, Predictor, PredictorConfig};
use crate::scoring::{
    cluster_amplification, score_cluster, score_naive, select_targets, ConfusionCounts, ScoringMethod, ScoringParams,
    TestGeometry,
};

pub use compare::{compare, Comparison, MonthDelta, UpliftPoint};
pub use report::{
    read_report_csv, write_heat_csv, write_report_csv, write_summary_json, ReportRow, ReportSummary, SummaryDoc,
    REPORT_HEADER,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestParams {
    /// First and last cutoff months, inclusive.
    pub cutoff_start: YearMonth,
    pub cutoff_end: YearMonth,
    pub scoring: ScoringParams,
    pub predictor: PredictorConfig,
    pub seed: u64,
}

impl BacktestParams {
    pub fn validate(&self) -> Result<()> {
        if self.cutoff_end < self.cutoff_start {
            return Err(Error::InvalidParam(format!(
                "cutoff range {}..{} is empty",
                self.cutoff_start, self.cutoff_end
            )));
        }
        self.scoring.validate()?;
        self.predictor.validate()
    }

    pub fn cutoffs(&self) -> Vec<YearMonth> {
        self.cutoff_start.through(self.cutoff_end).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthResult {
    pub cutoff: YearMonth,
    pub n_train: usize,
    pub n_test: usize,
    pub n_targets: usize,
    pub n_predictions: usize,
    pub counts_naive: ConfusionCounts,
    pub counts_cluster: ConfusionCounts,
    pub metrics_naive: MetricSet,
    pub metrics_cluster: MetricSet,
    pub amplification: Option<f64>,
    pub predictor_tag: String,
    pub warnings: Vec<String>,
    /// Set when the month could not be scored; counts are then empty.
    pub skipped: Option<String>,
}

impl MonthResult {
    fn skipped(cutoff: YearMonth, tag: String, reason: String) -> Self {
        Self {
            cutoff,
            n_train: 0,
            n_test: 0,
            n_targets: 0,
            n_predictions: 0,
            counts_naive: ConfusionCounts::default(),
            counts_cluster: ConfusionCounts::default(),
            metrics_naive: MetricSet::default(),
            metrics_cluster: MetricSet::default(),
            amplification: None,
            predictor_tag: tag,
            warnings: vec![reason.clone()],
            skipped: Some(reason),
        }
    }

    pub fn counts(&self, method: ScoringMethod) -> &ConfusionCounts {
        match method {
            ScoringMethod::Naive => &self.counts_naive,
            ScoringMethod::ClusterAware => &self.counts_cluster,
        }
    }

    pub fn metrics(&self, method: ScoringMethod) -> &MetricSet {
        match method {
            ScoringMethod::Naive => &self.metrics_naive,
            ScoringMethod::ClusterAware => &self.metrics_cluster,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkipNotice {
    pub cutoff: YearMonth,
    pub reason: String,
}

/// Means over months where each metric is defined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub accuracy: Option<f64>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MeanMetrics {
    pub fn of(months: &[MonthResult], method: ScoringMethod) -> Self {
        let m = |f: fn(&MetricSet) -> Option<f64>| mean(months.iter().map(|r| f(r.metrics(method))));
        Self {
            tpr: m(|s| s.tpr),
            fpr: m(|s| s.fpr),
            precision: m(|s| s.precision),
            recall: m(|s| s.recall),
            f1: m(|s| s.f1),
            mcc: m(|s| s.mcc),
            accuracy: m(|s| s.accuracy),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_months: usize,
    pub fit_naive: Option<LogFit>,
    pub fit_cluster: Option<LogFit>,
    pub mean_naive: MeanMetrics,
    pub mean_cluster: MeanMetrics,
    pub mean_amplification: Option<f64>,
    /// Distinct warnings of all months, sorted.
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn fit(&self, method: ScoringMethod) -> Option<&LogFit> {
        match method {
            ScoringMethod::Naive => self.fit_naive.as_ref(),
            ScoringMethod::ClusterAware => self.fit_cluster.as_ref(),
        }
    }

    pub fn mean(&self, method: ScoringMethod) -> &MeanMetrics {
        match method {
            ScoringMethod::Naive => &self.mean_naive,
            ScoringMethod::ClusterAware => &self.mean_cluster,
        }
    }
}

/// ROC points `(fpr, tpr)` of scored months.
pub fn roc_points(months: &[MonthResult], method: ScoringMethod) -> Vec<(Option<f64>, Option<f64>)> {
    months.iter().map(|m| (m.metrics(method).fpr, m.metrics(method).tpr)).collect()
}

fn summarize(months: &[MonthResult]) -> Summary {
    let warnings: BTreeSet<String> = months.iter().flat_map(|m| m.warnings.iter().cloned()).collect();
    Summary {
        n_months: months.len(),
        fit_naive: log_fit(&roc_points(months, ScoringMethod::Naive)),
        fit_cluster: log_fit(&roc_points(months, ScoringMethod::ClusterAware)),
        mean_naive: MeanMetrics::of(months, ScoringMethod::Naive),
        mean_cluster: MeanMetrics::of(months, ScoringMethod::ClusterAware),
        mean_amplification: mean(months.iter().map(|m| m.amplification)),
        warnings: warnings.into_iter().collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub params: BacktestParams,
    pub predictor_tag: String,
    /// Scored months in cutoff order.
    pub months: Vec<MonthResult>,
    pub skipped: Vec<SkipNotice>,
    pub summary: Summary,
}

impl BacktestReport {
    fn assemble(params: BacktestParams, tag: String, results: Vec<MonthResult>) -> Result<Self> {
        let (skipped, months): (Vec<_>, Vec<_>) = results.into_iter().partition(|m| m.skipped.is_some());
        if months.is_empty() {
            return Err(Error::NoValidCutoffs);
        }
        let skipped = skipped
            .into_iter()
            .map(|m| SkipNotice {
                cutoff: m.cutoff,
                reason: m.skipped.unwrap_or_default(),
            })
            .collect();
        let summary = summarize(&months);
        Ok(Self {
            params,
            predictor_tag: tag,
            months,
            skipped,
            summary,
        })
    }
}

/// Stable per-(cell, cutoff) seed.
pub fn derive_seed(seed: u64, predictor: &str, top_p: f64, eps: f64, cutoff: YearMonth) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(predictor.as_bytes());
    h.update([0]);
    h.update(top_p.to_bits().to_le_bytes());
    h.update(eps.to_bits().to_le_bytes());
    h.update(cutoff.to_string().as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// A cutoff's split and test index, shared by every cell scored at it.
struct Frame<'a> {
    split: CutoffSplit<'a>,
    geom: Option<TestGeometry<'a>>,
    skip: Option<String>,
}

impl<'a> Frame<'a> {
    fn prepare(corpus: &'a Corpus, cutoff: YearMonth, horizon: u32) -> Result<Self> {
        let split = corpus.split_at(cutoff, horizon)?;
        let last_month = corpus.month_range().map(|r| r.1);
        let window_end = split.test.last_month();
        let skip = match last_month {
            None => Some("empty corpus".to_string()),
            Some(last) if window_end > last => Some(format!(
                "test window {cutoff}..{window_end} extends past the corpus end {last}"
            )),
            _ if split.is_empty_test() => Some(format!("empty test window at {cutoff}")),
            _ => None,
        };
        if let Some(reason) = &skip {
            warn!("skipping cutoff {cutoff}: {reason}");
        }
        let geom = match skip {
            None => Some(TestGeometry::build(split.test)?),
            Some(_) => None,
        };
        Ok(Self { split, geom, skip })
    }

    fn evaluate(
        &self,
        scoring: &ScoringParams,
        config: &PredictorConfig,
        predictor: &dyn Predictor,
        seed: u64,
    ) -> Result<MonthResult> {
        let cutoff = self.split.cutoff;
        let tag = predictor.tag();
        let (Some(geom), None) = (&self.geom, &self.skip) else {
            return Ok(MonthResult::skipped(cutoff, tag, self.skip.clone().unwrap_or_default()));
        };
        let train = &self.split.train;
        let ctx = PredictContext {
            n_predictions: n_predictions_for(train.len(), config.n_ratio),
            eps: scoring.eps,
            top_p: scoring.top_p,
            seed: derive_seed(seed, config.kind.name(), scoring.top_p, scoring.eps, cutoff),
        };
        let preds = predictor.predict(train, &ctx).map_err(|e| match e {
            e @ Error::Predictor { .. } => e,
            other => Error::Predictor {
                cutoff,
                detail: other.to_string(),
            },
        })?;
        let targets = select_targets(geom.test(), scoring.top_p)?;
        let counts_naive = score_naive(geom, &preds, &targets, scoring.eps)?;
        let counts_cluster = score_cluster(geom, &preds, &targets, scoring.eps)?;
        let mut warnings = preds.warnings.clone();
        if targets.n_targets() == 0 {
            warnings.push(format!("no targets in the test window at {cutoff}"));
        }
        Ok(MonthResult {
            cutoff,
            n_train: train.len(),
            n_test: geom.test().len(),
            n_targets: targets.n_targets(),
            n_predictions: preds.len(),
            metrics_naive: derived_metrics(&counts_naive),
            metrics_cluster: derived_metrics(&counts_cluster),
            amplification: cluster_amplification(&counts_cluster, &counts_naive),
            counts_naive,
            counts_cluster,
            predictor_tag: preds.predictor_tag,
            warnings,
            skipped: None,
        })
    }
}

pub fn run_month(corpus: &Corpus, cutoff: YearMonth, params: &BacktestParams) -> Result<MonthResult> {
    params.validate()?;
    let predictor = params.predictor.build()?;
    run_month_with(corpus, cutoff, params, predictor.as_ref())
}

pub fn run_month_with(
    corpus: &Corpus,
    cutoff: YearMonth,
    params: &BacktestParams,
    predictor: &dyn Predictor,
) -> Result<MonthResult> {
    let frame = Frame::prepare(corpus, cutoff, params.scoring.horizon_months)?;
    frame.evaluate(&params.scoring, &params.predictor, predictor, params.seed)
}

pub fn run_backtest(corpus: &Corpus, params: &BacktestParams) -> Result<BacktestReport> {
    params.validate()?;
    let predictor = params.predictor.build()?;
    run_backtest_with(corpus, params, predictor.as_ref())
}

/// Runs a backtest with a caller-supplied predictor; `params.predictor`
/// still provides the prediction-count ratio.
pub fn run_backtest_with(corpus: &Corpus, params: &BacktestParams, predictor: &dyn Predictor) -> Result<BacktestReport> {
    params.validate()?;
    let results = params
        .cutoffs()
        .into_par_iter()
        .map(|cutoff| run_month_with(corpus, cutoff, params, predictor))
        .collect::<Result<Vec<_>>>()?;
    BacktestReport::assemble(params.clone(), predictor.tag(), results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub predictor: String,
    pub top_p: f64,
    pub eps: f64,
    pub outcome: std::result::Result<BacktestReport, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CutoffStats {
    pub cutoff: YearMonth,
    pub test_index_builds: usize,
    pub train_index_builds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Ordered by predictor, then top-P, then eps, as given.
    pub cells: Vec<GridCell>,
    pub cutoff_stats: Vec<CutoffStats>,
}

impl GridResult {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Runs a backtest for every (predictor, top-P, eps) cell. Each cutoff's
/// split and indexes are built once and shared across cells; a failing
/// cell is reported without aborting the others.
pub fn grid_search(
    corpus: &Corpus,
    base: &BacktestParams,
    top_p_grid: &[f64],
    eps_grid: &[f64],
    predictors: &[PredictorConfig],
) -> Result<GridResult> {
    if top_p_grid.is_empty() || eps_grid.is_empty() || predictors.is_empty() {
        return Err(Error::InvalidParam("grid search needs non-empty top-P, eps and predictor lists".into()));
    }
    let mut cells = Vec::new();
    for config in predictors {
        for &top_p in top_p_grid {
            for &eps in eps_grid {
                let params = BacktestParams {
                    scoring: ScoringParams { eps, top_p, ..base.scoring },
                    predictor: config.clone(),
                    ..base.clone()
                };
                let built = params.validate().and_then(|_| config.build());
                cells.push((params, built));
            }
        }
    }

    let cutoffs = base.cutoffs();
    let per_cutoff: Vec<(CutoffStats, Vec<std::result::Result<MonthResult, String>>)> = cutoffs
        .par_iter()
        .map(|&cutoff| {
            let frame = Frame::prepare(corpus, cutoff, base.scoring.horizon_months);
            let results = cells
                .iter()
                .map(|(params, built)| {
                    let predictor = built.as_ref().map_err(|e| e.to_string())?;
                    let frame = frame.as_ref().map_err(|e| e.to_string())?;
                    frame
                        .evaluate(&params.scoring, &params.predictor, predictor.as_ref(), params.seed)
                        .map_err(|e| e.to_string())
                })
                .collect();
            let stats = match &frame {
                Ok(f) => CutoffStats {
                    cutoff,
                    test_index_builds: f.geom.is_some() as usize,
                    train_index_builds: f.split.train.index_built() as usize,
                },
                Err(_) => CutoffStats {
                    cutoff,
                    test_index_builds: 0,
                    train_index_builds: 0,
                },
            };
            (stats, results)
        })
        .collect();

    let cutoff_stats = per_cutoff.iter().map(|p| p.0).collect();
    let mut columns: Vec<Vec<std::result::Result<MonthResult, String>>> = vec![Vec::with_capacity(cutoffs.len()); cells.len()];
    for (_, results) in per_cutoff {
        for (col, r) in columns.iter_mut().zip(results) {
            col.push(r);
        }
    }

    let cells = cells
        .into_iter()
        .zip(columns)
        .map(|((params, built), column)| {
            let predictor = match &built {
                Ok(p) => p.tag(),
                Err(_) => params.predictor.kind.name().to_string(),
            };
            let outcome = column
                .into_iter()
                .collect::<std::result::Result<Vec<_>, String>>()
                .and_then(|months| {
                    BacktestReport::assemble(params.clone(), predictor.clone(), months).map_err(|e| e.to_string())
                });
            if let Err(e) = &outcome {
                warn!("grid cell {predictor} top_p={} eps={} failed: {e}", params.scoring.top_p, params.scoring.eps);
            }
            GridCell {
                predictor,
                top_p: params.scoring.top_p,
                eps: params.scoring.eps,
                outcome,
            }
        })
        .collect();
    Ok(GridResult { cells, cutoff_stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_every_part() {
        let m = YearMonth::new(2012, 1).unwrap();
        let s = derive_seed(7, "baseline", 15.0, 0.035, m);
        assert_eq!(s, derive_seed(7, "baseline", 15.0, 0.035, m));
        assert_ne!(s, derive_seed(8, "baseline", 15.0, 0.035, m));
        assert_ne!(s, derive_seed(7, "hotspot", 15.0, 0.035, m));
        assert_ne!(s, derive_seed(7, "baseline", 10.0, 0.035, m));
        assert_ne!(s, derive_seed(7, "baseline", 15.0, 0.02, m));
        assert_ne!(s, derive_seed(7, "baseline", 15.0, 0.035, m.add_months(1)));
    }

    #[test]
    fn means_skip_absent_values() {
        assert_eq!(mean([Some(1.0), None, Some(3.0)].into_iter()), Some(2.0));
        assert_eq!(mean([None, None].into_iter()), None);
    }
}
