//! Deterministic synthetic corpora with planted, time-localized clusters.

use chrono::Duration;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Article, Corpus, Source};
use crate::error::{Error, Result};
use crate::month::YearMonth;
use crate::spatial::MetricKind;

/// Parameters of a synthetic corpus. A spec and its seed fully determine
/// the output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dim: usize,
    pub n_background: usize,
    pub n_clusters: usize,
    /// Members per planted cluster.
    pub cluster_size: usize,
    pub cluster_radius: f64,
    /// Assigned to clusters round-robin.
    pub cluster_birth_months: Vec<YearMonth>,
    /// Months over which a cluster's members are published, starting at birth.
    pub cluster_span_months: u32,
    /// Background articles are spread uniformly over `[start, end]`.
    pub start: YearMonth,
    pub end: YearMonth,
    /// Pareto shape of the citation-rate distribution.
    pub citation_law: f64,
    pub boost_in_clusters: f64,
    /// Fraction of articles without citation data.
    pub missing_citation_rate: f64,
    pub metric: MetricKind,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dim: 3,
            n_background: 2000,
            n_clusters: 0,
            cluster_size: 50,
            cluster_radius: 0.02,
            cluster_birth_months: Vec::new(),
            cluster_span_months: 24,
            start: YearMonth::new(2008, 1).unwrap(),
            end: YearMonth::new(2016, 12).unwrap(),
            citation_law: 1.5,
            boost_in_clusters: 5.0,
            missing_citation_rate: 0.0,
            metric: MetricKind::EuclideanOnUnitNorm,
            seed: 0,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(format!("synthetic spec: {m}")));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.n_clusters > 0 && self.cluster_birth_months.is_empty() {
            return bad("n_clusters > 0 requires at least one cluster birth month");
        }
        if !(self.cluster_radius > 0.0 && self.cluster_radius.is_finite()) {
            return bad("cluster_radius must be positive");
        }
        if !(self.citation_law > 0.0 && self.citation_law.is_finite()) {
            return bad("citation_law must be positive");
        }
        if !(self.boost_in_clusters > 0.0 && self.boost_in_clusters.is_finite()) {
            return bad("boost_in_clusters must be positive");
        }
        if !(0.0..=1.0).contains(&self.missing_citation_rate) {
            return bad("missing_citation_rate must lie in [0, 1]");
        }
        if self.end < self.start {
            return bad("end precedes start");
        }
        if self.cluster_span_months == 0 {
            return bad("cluster_span_months must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCluster {
    pub center: Vec<f32>,
    pub birth: YearMonth,
    pub size: usize,
}

/// Planted structure recorded alongside a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub clusters: Vec<PlantedCluster>,
}

impl GroundTruth {
    /// Recovers the ground truth a synthetic corpus stores in its provenance.
    pub fn from_provenance(provenance: &str) -> Option<Self> {
        serde_json::from_str(provenance).ok()
    }

    /// Clusters born in `[from, from + months)`.
    pub fn born_within(&self, from: YearMonth, months: u32) -> impl Iterator<Item = &PlantedCluster> {
        let end = from.add_months(months as i64);
        self.clusters.iter().filter(move |c| c.birth >= from && c.birth < end)
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn to_unit_f32(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

fn citations(rng: &mut ChaCha8Rng, law: f64, boost: f64) -> u64 {
    // Pareto(scale 1, shape `law`) by inversion; u in (0, 1].
    let u = 1.0 - rng.random::<f64>();
    let rate = u.powf(-1.0 / law);
    (boost * rate - 1.0).floor().clamp(0.0, 1e12) as u64
}

fn uniform_date(rng: &mut ChaCha8Rng, from: YearMonth, months: u32) -> chrono::NaiveDate {
    let first = from.first_day();
    let days = (from.add_months(months as i64).first_day() - first).num_days();
    first + Duration::days(rng.random_range(0..days))
}

/// Generates the corpus described by `spec`. The provenance string holds
/// the JSON-encoded [`GroundTruth`].
pub fn synth_corpus(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut articles = Vec::with_capacity(spec.n_background + spec.n_clusters * spec.cluster_size);
    let mut clusters = Vec::with_capacity(spec.n_clusters);
    let per_axis = spec.cluster_radius / (spec.dim as f64).sqrt();

    for c in 0..spec.n_clusters {
        let center = unit_gaussian(&mut rng, spec.dim);
        let birth = spec.cluster_birth_months[c % spec.cluster_birth_months.len()];
        for m in 0..spec.cluster_size {
            let p: Vec<f64> = center
                .iter()
                .map(|x| x + per_axis * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let has = !rng.random_bool(spec.missing_citation_rate);
            articles.push(Article {
                id: format!("c{c:03}-{m:05}"),
                coords: to_unit_f32(&p),
                published: uniform_date(&mut rng, birth, spec.cluster_span_months),
                citations: citations(&mut rng, spec.citation_law, spec.boost_in_clusters),
                source: Source::Synthetic,
                has_citation_data: has,
            });
        }
        clusters.push(PlantedCluster {
            center: to_unit_f32(&center),
            birth,
            size: spec.cluster_size,
        });
    }

    let span = spec.start.months_until(spec.end) as u32 + 1;
    for i in 0..spec.n_background {
        let p = unit_gaussian(&mut rng, spec.dim);
        let has = !rng.random_bool(spec.missing_citation_rate);
        articles.push(Article {
            id: format!("b{i:07}"),
            coords: to_unit_f32(&p),
            published: uniform_date(&mut rng, spec.start, span),
            citations: citations(&mut rng, spec.citation_law, 1.0),
            source: Source::Synthetic,
            has_citation_data: has,
        });
    }

    let truth = GroundTruth {
        spec: spec.clone(),
        clusters,
    };
    Corpus::new(spec.dim, spec.metric, articles, serde_json::to_string(&truth)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::distance;

    fn one_cluster(seed: u64) -> SynthSpec {
        SynthSpec {
            dim: 4,
            n_background: 0,
            n_clusters: 1,
            cluster_size: 50,
            cluster_radius: 0.03,
            cluster_birth_months: vec![YearMonth::new(2012, 3).unwrap()],
            seed,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn members_stay_near_recorded_center() {
        for seed in 0..5 {
            let c = synth_corpus(&one_cluster(seed)).unwrap();
            let truth = GroundTruth::from_provenance(c.provenance()).unwrap();
            assert_eq!(c.len(), 50);
            let center = &truth.clusters[0].center;
            for a in c.articles() {
                let d = distance(&a.coords, center, MetricKind::EuclideanOnUnitNorm).unwrap();
                assert!(d <= 3.0 * 0.03, "member {} at {d}", a.id);
                assert!(a.month() >= truth.clusters[0].birth);
            }
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SynthSpec {
            n_background: 300,
            n_clusters: 3,
            cluster_birth_months: vec![YearMonth::new(2010, 1).unwrap(), YearMonth::new(2011, 6).unwrap()],
            missing_citation_rate: 0.2,
            seed: 99,
            ..SynthSpec::default()
        };
        assert_eq!(synth_corpus(&spec).unwrap(), synth_corpus(&spec).unwrap());
        let other = SynthSpec { seed: 100, ..spec.clone() };
        assert_ne!(synth_corpus(&spec).unwrap(), synth_corpus(&other).unwrap());
    }

    #[test]
    fn clusters_need_birth_months() {
        let spec = SynthSpec {
            n_clusters: 2,
            ..SynthSpec::default()
        };
        assert!(matches!(synth_corpus(&spec), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn no_clusters_means_empty_truth() {
        let c = synth_corpus(&SynthSpec {
            n_background: 10,
            ..SynthSpec::default()
        })
        .unwrap();
        assert!(GroundTruth::from_provenance(c.provenance()).unwrap().clusters.is_empty());
    }

    /// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
    fn ks_p_value(mut a: Vec<u64>, mut b: Vec<u64>) -> f64 {
        a.sort_unstable();
        b.sort_unstable();
        let (n, m) = (a.len() as f64, b.len() as f64);
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] == x {
                i += 1;
            }
            while j < b.len() && b[j] == x {
                j += 1;
            }
            d = d.max((i as f64 / n - j as f64 / m).abs());
        }
        let en = (n * m / (n + m)).sqrt();
        let lambda = (en + 0.12 + 0.11 / en) * d;
        let mut p = 0.0;
        for k in 1..=100 {
            let k = k as f64;
            p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        }
        p.clamp(0.0, 1.0)
    }

    #[test]
    fn unit_boost_matches_background_citations() {
        let mut rejections = 0;
        for seed in 0..20 {
            let spec = SynthSpec {
                n_background: 1000,
                n_clusters: 10,
                cluster_size: 100,
                cluster_birth_months: vec![YearMonth::new(2010, 1).unwrap()],
                boost_in_clusters: 1.0,
                seed,
                ..SynthSpec::default()
            };
            let c = synth_corpus(&spec).unwrap();
            let (cl, bg): (Vec<_>, Vec<_>) = c.articles().iter().partition(|a| a.id.starts_with('c'));
            let p = ks_p_value(
                cl.iter().map(|a| a.citations).collect(),
                bg.iter().map(|a| a.citations).collect(),
            );
            if p < 0.01 {
                rejections += 1;
            }
        }
        // 20 tests at alpha = 0.01: two or more rejections has probability < 2% under the null.
        assert!(rejections <= 1, "{rejections} rejections");

        let boosted = synth_corpus(&SynthSpec {
            n_background: 1000,
            n_clusters: 10,
            cluster_size: 100,
            cluster_birth_months: vec![YearMonth::new(2010, 1).unwrap()],
            boost_in_clusters: 5.0,
            seed: 1,
            ..SynthSpec::default()
        })
        .unwrap();
        let (cl, bg): (Vec<_>, Vec<_>) = boosted.articles().iter().partition(|a| a.id.starts_with('c'));
        let p = ks_p_value(
            cl.iter().map(|a| a.citations).collect(),
            bg.iter().map(|a| a.citations).collect(),
        );
        assert!(p < 1e-6);
    }
}
