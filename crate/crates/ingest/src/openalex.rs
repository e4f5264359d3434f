//! Citation counts from the OpenAlex works API.

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harvest::MetadataRecord;
use crate::http::HttpClient;

/// Identifier used to look a work up. DOIs are preferred; PubMed records
/// without one fall back to their PMID and arXiv records to the DataCite
/// DOI arXiv registers for every paper.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ExternalId {
    Doi(String),
    Pmid(String),
}

impl ExternalId {
    pub fn for_record(r: &MetadataRecord) -> Option<Self> {
        if let Some(doi) = &r.doi {
            return Some(ExternalId::Doi(normalize_doi(doi)));
        }
        if let Some(id) = r.id.strip_prefix("arxiv:") {
            return Some(ExternalId::Doi(format!("10.48550/arxiv.{}", id.to_lowercase())));
        }
        r.id.strip_prefix("pmid:").map(|p| ExternalId::Pmid(p.to_string()))
    }

    fn value(&self) -> &str {
        match self {
            ExternalId::Doi(v) | ExternalId::Pmid(v) => v,
        }
    }
}

impl std::fmt::Display for ExternalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ExternalId::Doi(v) => write!(f, "doi:{v}"),
            ExternalId::Pmid(v) => write!(f, "pmid:{v}"),
        }
    }
}

pub fn normalize_doi(doi: &str) -> String {
    let d = doi.trim();
    let d = d
        .strip_prefix("https://doi.org/")
        .or_else(|| d.strip_prefix("http://doi.org/"))
        .or_else(|| d.strip_prefix("doi:"))
        .unwrap_or(d);
    d.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    pub article_id: String,
    pub external_id: ExternalId,
    /// Absent when OpenAlex does not know the work.
    pub cited_by_count: Option<u64>,
    pub fetched_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenAlexConfig {
    pub endpoint: String,
    /// Contact address for the polite pool.
    pub mailto: Option<String>,
    /// Ids per request; OpenAlex accepts at most 50 alternatives per filter.
    pub batch_size: usize,
    pub concurrency: usize,
}

impl Default for OpenAlexConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openalex.org/works".into(),
            mailto: None,
            batch_size: 50,
            concurrency: 4,
        }
    }
}

pub const MAX_BATCH: usize = 50;

#[derive(Deserialize)]
struct Page {
    results: Vec<Work>,
}

#[derive(Deserialize)]
struct Work {
    doi: Option<String>,
    #[serde(default)]
    ids: WorkIds,
    cited_by_count: u64,
}

#[derive(Deserialize, Default)]
struct WorkIds {
    pmid: Option<String>,
}

fn pmid_of(url: &str) -> String {
    url.trim_end_matches('/').rsplit('/').next().unwrap_or(url).to_string()
}

/// Looks up citation counts for `(article_id, external_id)` pairs in batches.
/// Output order follows the input.
pub fn fetch_citations(
    client: &HttpClient,
    cfg: &OpenAlexConfig,
    ids: &[(String, ExternalId)],
) -> Result<Vec<CitationRecord>> {
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    if cfg.batch_size == 0 || cfg.batch_size > MAX_BATCH {
        return Err(Error::Invalid(format!("batch size must be in 1..={MAX_BATCH}")));
    }
    // batches hold one id kind each, in first-seen order
    let mut dois: Vec<&ExternalId> = Vec::new();
    let mut pmids: Vec<&ExternalId> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (_, ext) in ids {
        if seen.insert(ext) {
            match ext {
                ExternalId::Doi(_) => dois.push(ext),
                ExternalId::Pmid(_) => pmids.push(ext),
            }
        }
    }
    let batches: Vec<&[&ExternalId]> = dois.chunks(cfg.batch_size).chain(pmids.chunks(cfg.batch_size)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency.max(1))
        .build()
        .map_err(|e| Error::Invalid(e.to_string()))?;
    let answers: Vec<Result<(HashMap<ExternalId, u64>, DateTime<Utc>)>> = pool.install(|| {
        batches
            .par_iter()
            .enumerate()
            .map(|(i, batch)| fetch_batch(client, cfg, i, batch))
            .collect()
    });

    let mut counts: HashMap<ExternalId, (Option<u64>, DateTime<Utc>)> = HashMap::new();
    for (batch, answer) in batches.iter().zip(answers) {
        let (found, at) = answer?;
        for ext in batch.iter() {
            counts.insert((*ext).clone(), (found.get(*ext).copied(), at));
        }
    }
    Ok(ids
        .iter()
        .map(|(article_id, ext)| {
            let (cited_by_count, fetched_at) = counts[ext];
            CitationRecord {
                article_id: article_id.clone(),
                external_id: ext.clone(),
                cited_by_count,
                fetched_at,
            }
        })
        .collect())
}

fn fetch_batch(
    client: &HttpClient,
    cfg: &OpenAlexConfig,
    index: usize,
    batch: &[&ExternalId],
) -> Result<(HashMap<ExternalId, u64>, DateTime<Utc>)> {
    let echo = || batch.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",");
    let values: Vec<&str> = batch.iter().map(|e| e.value()).collect();
    let filter = match batch[0] {
        ExternalId::Doi(_) => format!("doi:{}", values.join("|")),
        ExternalId::Pmid(_) => format!("ids.pmid:{}", values.join("|")),
    };
    let per_page = batch.len().to_string();
    let mut params = vec![
        ("filter", filter.as_str()),
        ("select", "doi,ids,cited_by_count"),
        ("per-page", per_page.as_str()),
    ];
    if let Some(m) = &cfg.mailto {
        params.push(("mailto", m));
    }
    let url = url::Url::parse_with_params(&cfg.endpoint, &params)
        .map_err(|e| Error::Invalid(format!("endpoint {}: {e}", cfg.endpoint)))?;
    let fetched = client.get(url.as_str()).map_err(|e| match e {
        Error::OfflineMiss { .. } => e,
        other => Error::Batch {
            index,
            ids: echo(),
            detail: other.to_string(),
        },
    })?;
    let page: Page = serde_json::from_slice(&fetched.body).map_err(|e| Error::Batch {
        index,
        ids: echo(),
        detail: format!("malformed response: {e}"),
    })?;
    let mut found = HashMap::new();
    for w in page.results {
        if let Some(d) = &w.doi {
            found.insert(ExternalId::Doi(normalize_doi(d)), w.cited_by_count);
        }
        if let Some(p) = &w.ids.pmid {
            found.insert(ExternalId::Pmid(pmid_of(p)), w.cited_by_count);
        }
    }
    let missing = batch.iter().filter(|e| !found.contains_key(**e)).count();
    if missing > 0 {
        warn!("citation batch {index}: {missing} of {} ids unknown to OpenAlex", batch.len());
    }
    Ok((found, fetched.fetched_at))
}
