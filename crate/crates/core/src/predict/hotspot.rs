//! Reference predictor: train locations whose neighbourhoods grew fastest
//! in the months just before the cutoff.

use log::warn;
use serde::{Deserialize, Serialize};

use super::HOTSPOT_NOTE;
use crate::corpus::TrainView;
use crate::error::{Error, Result};
use crate::scoring::PredictionSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotspotParams {
    /// Neighbourhood radius; the scoring radius when absent.
    pub eps: Option<f64>,
    pub recent_window_months: u32,
    /// Predictions to keep; the run's prediction count when absent.
    pub n_keep: Option<usize>,
}

impl Default for HotspotParams {
    fn default() -> Self {
        Self {
            eps: None,
            recent_window_months: 12,
            n_keep: None,
        }
    }
}

impl HotspotParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.eps {
            if !(e > 0.0 && e.is_finite()) {
                return Err(Error::InvalidParam(format!("hotspot eps must be positive, got {e}")));
            }
        }
        if self.recent_window_months == 0 {
            return Err(Error::InvalidParam("hotspot recent_window_months must be at least 1".into()));
        }
        Ok(())
    }
}

/// Growth of the train neighbourhood of a normalized `center`: neighbours
/// published in the last `window` months minus the earlier neighbour count
/// scaled to a `window`-month span. `None` when the train view does not
/// reach back before the window.
pub fn growth_score(train: &TrainView<'_>, center: &[f64], eps: f64, window: u32) -> Option<f64> {
    let (history, recent_start) = history_months(train, window)?;
    let arts = train.articles();
    let (mut recent, mut before) = (0u64, 0u64);
    train.index().for_each_in_range(center, eps, |i| {
        if arts[i].published >= recent_start {
            recent += 1;
        } else {
            before += 1;
        }
    });
    Some(recent as f64 - before as f64 * window as f64 / history as f64)
}

fn history_months(train: &TrainView<'_>, window: u32) -> Option<(i64, chrono::NaiveDate)> {
    let window_start = train.cutoff().add_months(-(window as i64));
    let first = train.articles().first()?.month();
    let history = first.months_until(window_start);
    (history > 0).then_some((history, window_start.first_day()))
}

pub fn hotspot_predict(train: &TrainView<'_>, eps: f64, window: u32, n_keep: usize) -> Result<PredictionSet> {
    let mut set = PredictionSet::new(train.cutoff(), "hotspot");
    set.warnings.push(HOTSPOT_NOTE.to_string());
    if train.is_empty() {
        return Err(Error::Predictor {
            cutoff: train.cutoff(),
            detail: "hotspot needs a non-empty train view".into(),
        });
    }
    if n_keep == 0 {
        return Ok(set);
    }
    let index = train.index();
    let degenerate = history_months(train, window).is_none();
    if degenerate {
        let msg = format!(
            "hotspot: train history at {} is shorter than the {window}-month window; scoring by plain density",
            train.cutoff()
        );
        warn!("{msg}");
        set.warnings.push(msg);
    }

    let mut scored: Vec<(f64, usize)> = (0..index.len())
        .map(|i| {
            let s = if degenerate {
                index.count_in_range(index.point(i), eps) as f64
            } else {
                growth_score(train, index.point(i), eps, window).expect("history checked")
            };
            (s, i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let metric = index.metric();
    let mut kept: Vec<usize> = Vec::with_capacity(n_keep);
    for &(_, i) in &scored {
        let p = index.point(i);
        let clash = kept.iter().any(|&k| {
            let sq: f64 = p.iter().zip(index.point(k)).map(|(x, y)| (x - y) * (x - y)).sum();
            metric.from_sq_dist(sq) <= eps
        });
        if !clash {
            kept.push(i);
            if kept.len() == n_keep {
                break;
            }
        }
    }
    set.coords = kept.iter().map(|&i| train.articles()[i].coords.clone()).collect();
    Ok(set)
}
