use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::BIAS_WARNING;
use crate::corpus::{Article, TrainView};
use crate::error::{Error, Result};
use crate::scoring::{select_targets_in, PredictionSet};
use crate::spatial::MetricKind;

fn sample_pool(
    pool: &[&Article],
    n: usize,
    jitter_sigma: f64,
    metric: MetricKind,
    seed: u64,
) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (jitter_sigma > 0.0).then(|| Normal::new(0.0, jitter_sigma).expect("sigma validated"));
    (0..n)
        .map(|_| {
            let src = &pool[rng.random_range(0..pool.len())].coords;
            match &noise {
                None => src.clone(),
                Some(noise) => {
                    let mut p: Vec<f64> = src.iter().map(|&x| x as f64 + noise.sample(&mut rng)).collect();
                    if metric == MetricKind::EuclideanOnUnitNorm {
                        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                        if norm > 0.0 {
                            p.iter_mut().for_each(|x| *x /= norm);
                        }
                    }
                    p.into_iter().map(|x| x as f32).collect()
                }
            }
        })
        .collect()
}

/// Resamples `n` train coordinates uniformly with replacement, optionally
/// perturbed by isotropic Gaussian noise.
pub fn baseline_sample(train: &TrainView<'_>, n: usize, jitter_sigma: f64, seed: u64) -> Result<PredictionSet> {
    let mut set = PredictionSet::new(train.cutoff(), "baseline");
    if n == 0 {
        return Ok(set);
    }
    if train.is_empty() {
        return Err(Error::Predictor {
            cutoff: train.cutoff(),
            detail: format!("baseline asked for {n} predictions from an empty train view"),
        });
    }
    let pool: Vec<&Article> = train.articles().iter().collect();
    set.coords = sample_pool(&pool, n, jitter_sigma, train.metric(), seed);
    Ok(set)
}

/// Like [`baseline_sample`] but the pool is each train month's top-P by
/// citations. Biased: the output always carries [`BIAS_WARNING`].
pub fn baseline_trend_sample(
    train: &TrainView<'_>,
    n: usize,
    top_p: f64,
    jitter_sigma: f64,
    seed: u64,
) -> Result<PredictionSet> {
    let flags = select_targets_in(train.articles(), top_p)?;
    let pool: Vec<&Article> = train
        .articles()
        .iter()
        .zip(&flags.is_target)
        .filter_map(|(a, &t)| t.then_some(a))
        .collect();
    let mut set = PredictionSet::new(train.cutoff(), "baseline-top");
    set.warnings.push(BIAS_WARNING.to_string());
    if n == 0 {
        return Ok(set);
    }
    if pool.is_empty() {
        return Err(Error::Predictor {
            cutoff: train.cutoff(),
            detail: "trend baseline has no citation-bearing train articles to sample".into(),
        });
    }
    set.coords = sample_pool(&pool, n, jitter_sigma, train.metric(), seed);
    Ok(set)
}
