//! Distances in the latent space and an exact closed-ball range index.
//!
//! Both supported metrics normalize their inputs to unit length and are
//! monotone in the squared Euclidean distance between the normalized vectors,
//! so one ball tree serves both. Candidate pruning uses a small slack and the
//! final membership test always goes through [`MetricKind::from_sq_dist`],
//! the same kernel used by [`distance`], so index results equal a linear scan
//! bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LEAF_SIZE: usize = 16;
const PRUNE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    /// L2 distance after L2-normalizing both vectors.
    #[default]
    EuclideanOnUnitNorm,
    /// One minus cosine similarity.
    Cosine,
}

impl MetricKind {
    /// Converts the squared distance between unit vectors into this metric.
    #[inline]
    pub fn from_sq_dist(self, sq: f64) -> f64 {
        match self {
            MetricKind::EuclideanOnUnitNorm => sq.sqrt(),
            // |a - b|^2 = 2 - 2 cos(a, b) for unit vectors
            MetricKind::Cosine => sq * 0.5,
        }
    }

    /// Euclidean radius between unit vectors equivalent to `eps` in this metric.
    fn euclidean_radius(self, eps: f64) -> f64 {
        match self {
            MetricKind::EuclideanOnUnitNorm => eps,
            MetricKind::Cosine => (2.0 * eps).sqrt(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::EuclideanOnUnitNorm => "euclidean-on-unit-norm",
            MetricKind::Cosine => "cosine",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean-on-unit-norm" | "euclidean" => Ok(MetricKind::EuclideanOnUnitNorm),
            "cosine" => Ok(MetricKind::Cosine),
            other => Err(Error::InvalidParam(format!("unknown metric {other:?}"))),
        }
    }
}

/// Returns `v / |v|` in f64.
pub fn normalize(v: &[f32]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| x as f64 / norm).collect())
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance(a: &[f32], b: &[f32], metric: MetricKind) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
            context: "distance operands".into(),
        });
    }
    let (a, b) = (normalize(a)?, normalize(b)?);
    Ok(metric.from_sq_dist(sq_dist(&a, &b)))
}

#[derive(Debug, Clone)]
struct Node {
    start: usize,
    end: usize,
    center: Vec<f64>,
    radius: f64,
    children: Option<(usize, usize)>,
}

/// Immutable ball tree answering exact closed-ball range queries.
#[derive(Debug, Clone)]
pub struct RangeIndex {
    dim: usize,
    metric: MetricKind,
    /// Normalized points in insertion order.
    points: Vec<Vec<f64>>,
    /// Permutation of point ids grouped by node.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl RangeIndex {
    pub fn build<P: AsRef<[f32]>>(points: &[P], dim: usize, metric: MetricKind) -> Result<Self> {
        let mut normalized = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: p.len(),
                    context: format!("index point {i}"),
                });
            }
            normalized.push(normalize(p)?);
        }
        Ok(Self::from_normalized(normalized, dim, metric))
    }

    fn from_normalized(points: Vec<Vec<f64>>, dim: usize, metric: MetricKind) -> Self {
        let mut index = RangeIndex {
            dim,
            metric,
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !index.points.is_empty() {
            index.build_node(0, index.points.len());
        }
        index
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let ids = &self.order[start..end];
        let mut center = vec![0.0; self.dim];
        for &i in ids {
            for (c, x) in center.iter_mut().zip(&self.points[i]) {
                *c += x;
            }
        }
        let n = ids.len() as f64;
        center.iter_mut().for_each(|c| *c /= n);
        let radius = ids
            .iter()
            .map(|&i| sq_dist(&center, &self.points[i]))
            .fold(0.0, f64::max)
            .sqrt();

        let node_id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            center,
            radius,
            children: None,
        });
        if end - start <= LEAF_SIZE {
            return node_id;
        }

        let split_dim = (0..self.dim)
            .map(|d| {
                let (lo, hi) = self.order[start..end]
                    .iter()
                    .map(|&i| self.points[i][d])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
                (d, hi - lo)
            })
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        if self.nodes[node_id].radius == 0.0 {
            return node_id;
        }

        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][split_dim]
                .total_cmp(&points[b][split_dim])
                .then(a.cmp(&b))
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[node_id].children = Some((left, right));
        node_id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    /// The normalized coordinates of point `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    /// Ids of all points within `eps` of `center` (closed ball), ascending.
    pub fn range_query(&self, center: &[f32], eps: f64) -> Result<Vec<usize>> {
        if center.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: center.len(),
                context: "range query center".into(),
            });
        }
        let center = normalize(center)?;
        Ok(self.range_query_normalized(&center, eps))
    }

    /// Range query around an already normalized center, such as [`Self::point`].
    pub fn range_query_normalized(&self, center: &[f64], eps: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_in_range(center, eps, |i| out.push(i));
        out.sort_unstable();
        out
    }

    /// Visits every point within `eps` of `center` in unspecified order.
    pub fn for_each_in_range(&self, center: &[f64], eps: f64, mut visit: impl FnMut(usize)) {
        if self.nodes.is_empty() || eps.is_nan() || eps < 0.0 {
            return;
        }
        let reach = self.metric.euclidean_radius(eps) + PRUNE_SLACK;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if sq_dist(center, &node.center).sqrt() - node.radius > reach {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(r);
                    stack.push(l);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if self.metric.from_sq_dist(sq_dist(center, &self.points[i])) <= eps {
                            visit(i);
                        }
                    }
                }
            }
        }
    }

    /// Number of points within `eps` of `center`.
    pub fn count_in_range(&self, center: &[f64], eps: f64) -> usize {
        let mut n = 0;
        self.for_each_in_range(center, eps, |_| n += 1);
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scan(points: &[Vec<f32>], center: &[f32], eps: f64, metric: MetricKind) -> Vec<usize> {
        (0..points.len())
            .filter(|&i| distance(&points[i], center, metric).unwrap() <= eps)
            .collect()
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f32>> {
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            .collect()
    }

    #[test]
    fn distance_examples() {
        let m = MetricKind::EuclideanOnUnitNorm;
        assert_eq!(distance(&[0.6, 0.8], &[0.6, 0.8], m).unwrap(), 0.0);
        assert_eq!(distance(&[1.0, 0.0], &[0.0, 1.0], MetricKind::Cosine).unwrap(), 1.0);
        let d = distance(&[1.0, 0.0], &[0.0, 1.0], m).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_errors() {
        assert!(matches!(
            distance(&[0.0, 0.0], &[1.0, 0.0], MetricKind::Cosine),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            distance(&[1.0], &[1.0, 0.0], MetricKind::Cosine),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad: Vec<Vec<f32>> = vec![vec![1.0, 0.0], vec![1.0]];
        assert!(RangeIndex::build(&bad, 2, MetricKind::Cosine).is_err());
    }

    #[test]
    fn empty_and_singleton() {
        let empty: Vec<Vec<f32>> = vec![];
        let idx = RangeIndex::build(&empty, 3, MetricKind::EuclideanOnUnitNorm).unwrap();
        assert!(idx.range_query(&[1.0, 0.0, 0.0], 10.0).unwrap().is_empty());

        let p = vec![vec![0.3f32, -0.2, 0.9]];
        let idx = RangeIndex::build(&p, 3, MetricKind::EuclideanOnUnitNorm).unwrap();
        for eps in [0.0, 0.01, 5.0] {
            assert_eq!(idx.range_query(&p[0], eps).unwrap(), vec![0]);
        }
    }

    #[test]
    fn boundary_point_is_included() {
        // Point at exactly 0.035 from the center, measured with the same kernel.
        let center = [1.0f32, 0.0];
        let theta = 2.0 * (0.035f64 / 2.0).asin();
        let p = vec![
            vec![theta.cos() as f32, theta.sin() as f32],
            vec![0.0, 1.0],
        ];
        let m = MetricKind::EuclideanOnUnitNorm;
        let d = distance(&p[0], &center, m).unwrap();
        let idx = RangeIndex::build(&p, 2, m).unwrap();
        assert_eq!(idx.range_query(&center, d).unwrap(), vec![0]);
        assert!((d - 0.035).abs() < 1e-7);
        assert_eq!(scan(&p, &center, d, m), vec![0]);
        let below = f64::from_bits(d.to_bits() - 1);
        assert!(idx.range_query(&center, below).unwrap().is_empty());
    }

    #[test]
    fn matches_linear_scan_on_10k_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (dim, metric) in [(3, MetricKind::EuclideanOnUnitNorm), (8, MetricKind::Cosine)] {
            let pts = random_points(&mut rng, 10_000, dim);
            let idx = RangeIndex::build(&pts, dim, metric).unwrap();
            for _ in 0..30 {
                let q: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                let eps = rng.random_range(0.0..0.6);
                assert_eq!(idx.range_query(&q, eps).unwrap(), scan(&pts, &q, eps, metric));
            }
        }
    }

    #[test]
    fn duplicate_points_do_not_break_build() {
        let pts = vec![vec![1.0f32, 1.0]; 100];
        let idx = RangeIndex::build(&pts, 2, MetricKind::EuclideanOnUnitNorm).unwrap();
        assert_eq!(idx.range_query(&[1.0, 1.0], 0.0).unwrap().len(), 100);
    }

    proptest! {
        #[test]
        fn monotone_in_eps(seed in any::<u64>(), e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_points(&mut rng, 300, 4);
            let idx = RangeIndex::build(&pts, 4, MetricKind::EuclideanOnUnitNorm).unwrap();
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let q = &pts[0];
            let small = idx.range_query(q, lo).unwrap();
            let big = idx.range_query(q, hi).unwrap();
            prop_assert!(small.iter().all(|i| big.binary_search(i).is_ok()));
        }

        #[test]
        fn symmetric_and_nonnegative(a in prop::collection::vec(-1.0f32..1.0, 5),
                                      b in prop::collection::vec(-1.0f32..1.0, 5)) {
            prop_assume!(a.iter().any(|&x| x != 0.0) && b.iter().any(|&x| x != 0.0));
            for m in [MetricKind::EuclideanOnUnitNorm, MetricKind::Cosine] {
                let ab = distance(&a, &b, m).unwrap();
                prop_assert!(ab >= 0.0);
                prop_assert_eq!(ab, distance(&b, &a, m).unwrap());
                prop_assert_eq!(distance(&a, &a, m).unwrap(), 0.0);
            }
        }
    }
}
