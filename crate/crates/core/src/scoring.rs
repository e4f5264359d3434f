//! Target selection and confusion scoring of predictions against a test window.
//!
//! Two scorers label every test article exactly once:
//!
//! * [`score_naive`]: an article is positive when it lies within `eps` of any
//!   prediction, and true when it is a target.
//! * [`score_cluster`]: additionally credits the follow-on cluster of a
//!   target. A covered non-target published strictly after a target inside
//!   the ball of the same prediction is a TP. An uncovered non-target
//!   published strictly after an uncovered target, and within `eps` of it, is
//!   an FN. Coverage decides first: covered articles are never FN.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Article, TestView};
use crate::error::{Error, Result};
use crate::month::YearMonth;
use crate::spatial::{normalize, RangeIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoringMethod {
    Naive,
    #[default]
    ClusterAware,
}

impl ScoringMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMethod::Naive => "naive",
            ScoringMethod::ClusterAware => "cluster",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringParams {
    /// Closed-ball radius in latent space.
    pub eps: f64,
    /// Percentage of each month's articles, by citations, that are targets.
    pub top_p: f64,
    pub horizon_months: u32,
    pub method: ScoringMethod,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            eps: 0.035,
            top_p: 15.0,
            horizon_months: 24,
            method: ScoringMethod::ClusterAware,
        }
    }
}

impl ScoringParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::InvalidParam(format!("eps must be positive and finite, got {}", self.eps)));
        }
        validate_top_p(self.top_p)?;
        if self.horizon_months == 0 {
            return Err(Error::InvalidParam("horizon_months must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn validate_top_p(top_p: f64) -> Result<()> {
    if top_p > 0.0 && top_p <= 100.0 {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!("top_p must lie in (0, 100], got {top_p}")))
    }
}

/// Number of targets among `n` ranked articles: `ceil(top_p / 100 * n)`.
pub fn target_count(top_p: f64, n: usize) -> usize {
    let exact = top_p * n as f64 / 100.0;
    // absorb rounding in products like 15 * 20 / 100
    ((exact - 1e-9).ceil().max(0.0) as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthTargets {
    pub month: YearMonth,
    /// Citation count of the lowest-ranked target, if any.
    pub threshold: Option<u64>,
    pub n_articles: usize,
    /// Articles with citation data, the population that is ranked.
    pub n_ranked: usize,
    pub n_targets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetFlags {
    /// Parallel to the articles the flags were computed for.
    pub is_target: Vec<bool>,
    pub months: Vec<MonthTargets>,
}

impl TargetFlags {
    pub fn n_targets(&self) -> usize {
        self.is_target.iter().filter(|&&t| t).count()
    }
}

/// Per calendar month, flags the top `ceil(top_p% * n)` articles with
/// citation data, ranked by citations descending then id ascending.
pub fn select_targets_in(articles: &[Article], top_p: f64) -> Result<TargetFlags> {
    validate_top_p(top_p)?;
    let mut by_month: BTreeMap<YearMonth, Vec<usize>> = BTreeMap::new();
    for (i, a) in articles.iter().enumerate() {
        by_month.entry(a.month()).or_default().push(i);
    }
    let mut is_target = vec![false; articles.len()];
    let mut months = Vec::with_capacity(by_month.len());
    for (month, members) in by_month {
        let mut ranked: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&i| articles[i].has_citation_data)
            .collect();
        ranked.sort_by(|&x, &y| {
            articles[y]
                .citations
                .cmp(&articles[x].citations)
                .then_with(|| articles[x].id.cmp(&articles[y].id))
        });
        let k = target_count(top_p, ranked.len());
        for &i in &ranked[..k] {
            is_target[i] = true;
        }
        months.push(MonthTargets {
            month,
            threshold: k.checked_sub(1).map(|last| articles[ranked[last]].citations),
            n_articles: members.len(),
            n_ranked: ranked.len(),
            n_targets: k,
        });
    }
    Ok(TargetFlags { is_target, months })
}

pub fn select_targets(test: &TestView<'_>, top_p: f64) -> Result<TargetFlags> {
    select_targets_in(test.articles(), top_p)
}

/// Coordinates emitted by one predictor for one cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub cutoff: YearMonth,
    pub coords: Vec<Vec<f32>>,
    pub predictor_tag: String,
    /// Caveats that every report built from this set must carry.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PredictionSet {
    pub fn new(cutoff: YearMonth, predictor_tag: impl Into<String>) -> Self {
        Self {
            cutoff,
            coords: Vec::new(),
            predictor_tag: predictor_tag.into(),
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Tp,
    Fp,
    Fn,
    Tn,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
    /// One label per test article, in test order.
    #[serde(skip)]
    pub labels: Vec<Label>,
}

impl ConfusionCounts {
    pub fn from_labels(labels: Vec<Label>) -> Self {
        let mut c = ConfusionCounts::default();
        for l in &labels {
            match l {
                Label::Tp => c.tp += 1,
                Label::Fp => c.fp += 1,
                Label::Fn => c.fn_ += 1,
                Label::Tn => c.tn += 1,
            }
        }
        c.labels = labels;
        c
    }

    /// Counts only, as used by tests and the metrics module.
    pub fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self {
            tp,
            fp,
            fn_,
            tn,
            labels: Vec::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// A test window with its range index, built once per cutoff and shared
/// by every (eps, top-P, predictor) cell scored against it.
#[derive(Debug)]
pub struct TestGeometry<'a> {
    test: TestView<'a>,
    index: RangeIndex,
}

impl<'a> TestGeometry<'a> {
    pub fn build(test: TestView<'a>) -> Result<Self> {
        let coords: Vec<&[f32]> = test.articles().iter().map(|a| a.coords.as_slice()).collect();
        let index = RangeIndex::build(&coords, test.dim(), test.metric())?;
        Ok(Self { test, index })
    }

    pub fn test(&self) -> &TestView<'a> {
        &self.test
    }

    pub fn index(&self) -> &RangeIndex {
        &self.index
    }

    /// Test articles inside each prediction's ball, one sorted list per prediction.
    pub fn balls(&self, preds: &PredictionSet, eps: f64) -> Result<Vec<Vec<usize>>> {
        preds
            .coords
            .iter()
            .enumerate()
            .map(|(i, q)| {
                if q.len() != self.index.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.index.dim(),
                        found: q.len(),
                        context: format!("prediction {i} of {}", preds.predictor_tag),
                    });
                }
                Ok(self.index.range_query_normalized(&normalize(q)?, eps))
            })
            .collect()
    }

    pub fn covered(&self, preds: &PredictionSet, eps: f64) -> Result<Vec<bool>> {
        let mut covered = vec![false; self.test.len()];
        for ball in self.balls(preds, eps)? {
            for i in ball {
                covered[i] = true;
            }
        }
        Ok(covered)
    }
}

fn check_targets(geom: &TestGeometry<'_>, targets: &TargetFlags) -> Result<()> {
    if targets.is_target.len() != geom.test.len() {
        return Err(Error::InvalidParam(format!(
            "target flags cover {} articles, test window has {}",
            targets.is_target.len(),
            geom.test.len()
        )));
    }
    Ok(())
}

pub fn score_naive(
    geom: &TestGeometry<'_>,
    preds: &PredictionSet,
    targets: &TargetFlags,
    eps: f64,
) -> Result<ConfusionCounts> {
    check_targets(geom, targets)?;
    let covered = geom.covered(preds, eps)?;
    let labels = covered
        .iter()
        .zip(&targets.is_target)
        .map(|(&c, &t)| match (c, t) {
            (true, true) => Label::Tp,
            (true, false) => Label::Fp,
            (false, true) => Label::Fn,
            (false, false) => Label::Tn,
        })
        .collect();
    Ok(ConfusionCounts::from_labels(labels))
}

pub fn score_cluster(
    geom: &TestGeometry<'_>,
    preds: &PredictionSet,
    targets: &TargetFlags,
    eps: f64,
) -> Result<ConfusionCounts> {
    check_targets(geom, targets)?;
    let arts = geom.test.articles();
    let is_target = &targets.is_target;
    let balls = geom.balls(preds, eps)?;

    let mut covered = vec![false; arts.len()];
    for ball in &balls {
        for &i in ball {
            covered[i] = true;
        }
    }

    let mut cluster_tp = vec![false; arts.len()];
    for ball in &balls {
        let Some(first_target) = ball.iter().filter(|&&i| is_target[i]).map(|&i| arts[i].published).min() else {
            continue;
        };
        for &i in ball {
            if arts[i].published > first_target {
                cluster_tp[i] = true;
            }
        }
    }

    let mut cluster_fn = vec![false; arts.len()];
    for t in (0..arts.len()).filter(|&t| is_target[t] && !covered[t]) {
        let born = arts[t].published;
        geom.index.for_each_in_range(geom.index.point(t), eps, |a| {
            if !covered[a] && arts[a].published > born {
                cluster_fn[a] = true;
            }
        });
    }

    let labels = (0..arts.len())
        .map(|i| match (covered[i], is_target[i]) {
            (true, true) => Label::Tp,
            (true, false) if cluster_tp[i] => Label::Tp,
            (true, false) => Label::Fp,
            (false, true) => Label::Fn,
            (false, false) if cluster_fn[i] => Label::Fn,
            (false, false) => Label::Tn,
        })
        .collect();
    Ok(ConfusionCounts::from_labels(labels))
}

pub fn score(
    method: ScoringMethod,
    geom: &TestGeometry<'_>,
    preds: &PredictionSet,
    targets: &TargetFlags,
    eps: f64,
) -> Result<ConfusionCounts> {
    match method {
        ScoringMethod::Naive => score_naive(geom, preds, targets, eps),
        ScoringMethod::ClusterAware => score_cluster(geom, preds, targets, eps),
    }
}

/// Ratio of TP inflation to FN inflation when moving from naive to
/// cluster-aware scoring. `None` when either ratio is undefined.
pub fn cluster_amplification(cluster: &ConfusionCounts, naive: &ConfusionCounts) -> Option<f64> {
    if naive.tp == 0 || naive.fn_ == 0 || cluster.fn_ == 0 {
        return None;
    }
    let tp_gain = cluster.tp as f64 / naive.tp as f64;
    let fn_gain = cluster.fn_ as f64 / naive.fn_ as f64;
    Some(tp_gain / fn_gain)
}
