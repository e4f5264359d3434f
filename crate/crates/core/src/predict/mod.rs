//! Predictors: the pluggable interface plus the resampling baselines, a
//! density-growth reference heuristic and externally produced predictions.

mod baseline;
mod file;
mod hotspot;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::corpus::TrainView;
use crate::error::{Error, Result};
use crate::scoring::PredictionSet;

pub use baseline::{baseline_sample, baseline_trend_sample};
pub use file::{load_predictions, write_predictions, PREDICTIONS_EXT};
pub use hotspot::{growth_score, hotspot_predict, HotspotParams};

/// Attached to every prediction set from the trend-following baseline.
pub const BIAS_WARNING: &str = "BIASED BASELINE: trend-following predictions sample the top-P articles \
ranked by snapshot-time citation counts, which carry post-cutoff information; not valid for validation";

/// Attached to every prediction set from the hotspot heuristic.
pub const HOTSPOT_NOTE: &str =
    "hotspot is a reference density-growth heuristic for exercising the harness, not a reproduction of any published classifier";

/// Inputs a predictor receives besides the train view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictContext {
    /// Requested number of predictions, from [`n_predictions_for`].
    pub n_predictions: usize,
    /// Scoring radius of the run.
    pub eps: f64,
    /// Target percentile of the run.
    pub top_p: f64,
    pub seed: u64,
}

pub trait Predictor: Send + Sync {
    fn tag(&self) -> String;

    /// Must only read `train`.
    fn predict(&self, train: &TrainView<'_>, ctx: &PredictContext) -> Result<PredictionSet>;
}

/// `max(1, round(n_train / n_ratio))`, or 0 for an empty train view.
pub fn n_predictions_for(n_train_articles: usize, n_ratio: f64) -> usize {
    if n_train_articles == 0 {
        return 0;
    }
    ((n_train_articles as f64 / n_ratio).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "path")]
pub enum PredictorKind {
    Baseline,
    BaselineTrend,
    Hotspot,
    /// A predictions file, or a directory of `<YYYY-MM>.lscp` files.
    FromFile(PathBuf),
}

impl PredictorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Baseline => "baseline",
            PredictorKind::BaselineTrend => "baseline-top",
            PredictorKind::Hotspot => "hotspot",
            PredictorKind::FromFile(_) => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    /// Train articles per prediction.
    pub n_ratio: f64,
    /// Per-axis Gaussian perturbation of baseline samples.
    pub jitter_sigma: f64,
    /// Percentile of the trend baseline's pool; the run's top-P when absent.
    pub top_p_for_trend: Option<f64>,
    pub hotspot: HotspotParams,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kind: PredictorKind::Baseline,
            n_ratio: 100.0,
            jitter_sigma: 0.0,
            top_p_for_trend: None,
            hotspot: HotspotParams::default(),
        }
    }
}

impl PredictorConfig {
    pub fn with_kind(kind: PredictorKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_ratio >= 1.0 && self.n_ratio.is_finite()) {
            return Err(Error::InvalidParam(format!("n_ratio must be >= 1, got {}", self.n_ratio)));
        }
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::InvalidParam(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma)));
        }
        if let Some(p) = self.top_p_for_trend {
            crate::scoring::validate_top_p(p)?;
        }
        self.hotspot.validate()
    }

    pub fn build(&self) -> Result<Box<dyn Predictor>> {
        self.validate()?;
        Ok(match &self.kind {
            PredictorKind::Baseline => Box::new(Baseline {
                jitter_sigma: self.jitter_sigma,
            }),
            PredictorKind::BaselineTrend => Box::new(BaselineTrend {
                jitter_sigma: self.jitter_sigma,
                top_p: self.top_p_for_trend,
            }),
            PredictorKind::Hotspot => Box::new(Hotspot {
                params: self.hotspot.clone(),
            }),
            PredictorKind::FromFile(path) => Box::new(FromFile { path: path.clone() }),
        })
    }
}

struct Baseline {
    jitter_sigma: f64,
}

impl Predictor for Baseline {
    fn tag(&self) -> String {
        "baseline".into()
    }

    fn predict(&self, train: &TrainView<'_>, ctx: &PredictContext) -> Result<PredictionSet> {
        baseline_sample(train, ctx.n_predictions, self.jitter_sigma, ctx.seed)
    }
}

struct BaselineTrend {
    jitter_sigma: f64,
    top_p: Option<f64>,
}

impl Predictor for BaselineTrend {
    fn tag(&self) -> String {
        "baseline-top".into()
    }

    fn predict(&self, train: &TrainView<'_>, ctx: &PredictContext) -> Result<PredictionSet> {
        let top_p = self.top_p.unwrap_or(ctx.top_p);
        baseline_trend_sample(train, ctx.n_predictions, top_p, self.jitter_sigma, ctx.seed)
    }
}

struct Hotspot {
    params: HotspotParams,
}

impl Predictor for Hotspot {
    fn tag(&self) -> String {
        "hotspot".into()
    }

    fn predict(&self, train: &TrainView<'_>, ctx: &PredictContext) -> Result<PredictionSet> {
        let eps = self.params.eps.unwrap_or(ctx.eps);
        let n_keep = self.params.n_keep.unwrap_or(ctx.n_predictions);
        hotspot_predict(train, eps, self.params.recent_window_months, n_keep)
    }
}

struct FromFile {
    path: PathBuf,
}

impl Predictor for FromFile {
    fn tag(&self) -> String {
        let name = self.path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        format!("file:{name}")
    }

    fn predict(&self, train: &TrainView<'_>, _ctx: &PredictContext) -> Result<PredictionSet> {
        let cutoff = train.cutoff();
        let fail = |detail: String| Error::Predictor { cutoff, detail };
        let path = if self.path.is_dir() {
            self.path.join(format!("{cutoff}.{PREDICTIONS_EXT}"))
        } else {
            self.path.clone()
        };
        if !path.exists() {
            return Err(fail(format!("no predictions file at {}", path.display())));
        }
        let set = load_predictions(&path, Some(train.dim())).map_err(|e| fail(e.to_string()))?;
        if set.cutoff != cutoff {
            return Err(fail(format!("{} holds predictions for {}", path.display(), set.cutoff)));
        }
        Ok(set)
    }
}
