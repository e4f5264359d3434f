//! Article data model, cutoff splitting and the on-disk store.

mod store;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::month::YearMonth;
use crate::spatial::{MetricKind, RangeIndex};

pub use store::{load_corpus, store_write, MANIFEST_FILE, META_FILE, VECTORS_FILE};
pub use synth::{synth_corpus, GroundTruth, PlantedCluster, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "arxiv-cs")]
    ArxivCs,
    #[serde(rename = "arxiv-physics")]
    ArxivPhysics,
    #[serde(rename = "arxiv-math")]
    ArxivMath,
    #[serde(rename = "pubmed")]
    PubMed,
    #[serde(rename = "synthetic")]
    Synthetic,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::ArxivCs => "arxiv-cs",
            Source::ArxivPhysics => "arxiv-physics",
            Source::ArxivMath => "arxiv-math",
            Source::PubMed => "pubmed",
            Source::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "arxiv-cs" => Ok(Source::ArxivCs),
            "arxiv-physics" => Ok(Source::ArxivPhysics),
            "arxiv-math" => Ok(Source::ArxivMath),
            "pubmed" => Ok(Source::PubMed),
            "synthetic" => Ok(Source::Synthetic),
            other => Err(Error::InvalidParam(format!("unknown source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Article {
    pub id: String,
    pub coords: Vec<f32>,
    /// Date of first public upload.
    pub published: NaiveDate,
    /// Snapshot-time citation count. Ignored when `has_citation_data` is false.
    pub citations: u64,
    pub source: Source,
    pub has_citation_data: bool,
}

impl Article {
    pub fn month(&self) -> YearMonth {
        YearMonth::of(self.published)
    }

    fn sort_key(&self) -> (NaiveDate, &str) {
        (self.published, &self.id)
    }
}

/// An immutable, time-ordered collection of articles sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    dim: usize,
    metric: MetricKind,
    articles: Vec<Article>,
    provenance: String,
}

impl Corpus {
    /// Validates and sorts `articles` by `(published, id)`.
    pub fn new(
        dim: usize,
        metric: MetricKind,
        mut articles: Vec<Article>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let mut seen = HashSet::with_capacity(articles.len());
        for a in &articles {
            validate_article(a, dim)?;
            if !seen.insert(a.id.as_str()) {
                return Err(Error::DuplicateId(a.id.clone()));
            }
        }
        articles.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(Self {
            dim,
            metric,
            articles,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    /// Months of the earliest and latest articles.
    pub fn month_range(&self) -> Option<(YearMonth, YearMonth)> {
        Some((self.articles.first()?.month(), self.articles.last()?.month()))
    }

    /// Splits at `cutoff`: train is everything strictly before the cutoff
    /// month, test is the following `horizon_months` calendar months.
    pub fn split_at(&self, cutoff: YearMonth, horizon_months: u32) -> Result<CutoffSplit<'_>> {
        if horizon_months == 0 {
            return Err(Error::InvalidParam("horizon_months must be at least 1".into()));
        }
        let start = cutoff.first_day();
        let end = cutoff.add_months(horizon_months as i64).first_day();
        let train_end = self.articles.partition_point(|a| a.published < start);
        let test_end = self.articles.partition_point(|a| a.published < end);
        Ok(CutoffSplit {
            cutoff,
            horizon_months,
            train: TrainView {
                cutoff,
                dim: self.dim,
                metric: self.metric,
                articles: &self.articles[..train_end],
                index: OnceLock::new(),
            },
            test: TestView {
                cutoff,
                horizon_months,
                dim: self.dim,
                metric: self.metric,
                articles: &self.articles[train_end..test_end],
            },
        })
    }
}

pub(crate) fn validate_article(a: &Article, dim: usize) -> Result<()> {
    if a.coords.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: a.coords.len(),
            context: format!("article {:?}", a.id),
        });
    }
    if let Some(component) = a.coords.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteCoordinate {
            id: a.id.clone(),
            component,
        });
    }
    if a.coords.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidParam(format!(
            "article {:?} has a zero coordinate vector",
            a.id
        )));
    }
    Ok(())
}

/// All articles published before the cutoff month. The only data a
/// predictor ever receives.
#[derive(Debug)]
pub struct TrainView<'a> {
    cutoff: YearMonth,
    dim: usize,
    metric: MetricKind,
    articles: &'a [Article],
    index: OnceLock<RangeIndex>,
}

impl<'a> TrainView<'a> {
    pub fn cutoff(&self) -> YearMonth {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn articles(&self) -> &'a [Article] {
        self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    /// Range index over the train coordinates, built on first use.
    pub fn index(&self) -> &RangeIndex {
        self.index.get_or_init(|| {
            let coords: Vec<&[f32]> = self.articles.iter().map(|a| a.coords.as_slice()).collect();
            RangeIndex::build(&coords, self.dim, self.metric)
                .expect("corpus coordinates are validated and non-zero")
        })
    }

    /// Whether [`Self::index`] has been built.
    pub fn index_built(&self) -> bool {
        self.index.get().is_some()
    }
}

/// Articles in `[cutoff, cutoff + horizon)`.
#[derive(Debug, Clone, Copy)]
pub struct TestView<'a> {
    cutoff: YearMonth,
    horizon_months: u32,
    dim: usize,
    metric: MetricKind,
    articles: &'a [Article],
}

impl<'a> TestView<'a> {
    pub fn cutoff(&self) -> YearMonth {
        self.cutoff
    }

    pub fn horizon_months(&self) -> u32 {
        self.horizon_months
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> MetricKind {
        self.metric
    }

    pub fn articles(&self) -> &'a [Article] {
        self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    /// Last month covered by the window.
    pub fn last_month(&self) -> YearMonth {
        self.cutoff.add_months(self.horizon_months as i64 - 1)
    }
}

#[derive(Debug)]
pub struct CutoffSplit<'a> {
    pub cutoff: YearMonth,
    pub horizon_months: u32,
    pub train: TrainView<'a>,
    pub test: TestView<'a>,
}

impl CutoffSplit<'_> {
    /// An empty test window is not an error; callers skip it.
    pub fn is_empty_test(&self) -> bool {
        self.test.is_empty()
    }
}
