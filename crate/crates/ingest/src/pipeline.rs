//! The full ingest run: harvest, resolve citations, embed, build the store.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use citescope_core::{MetricKind, Source, YearMonth};
use serde::Serialize;

use crate::build::{build_store, BuildSummary};
use crate::embed::{EmbedConfig, Embedder, EmbeddingRequest};
use crate::error::{Error, Result};
use crate::harvest::{fetch_metadata, load_metadata, HarvestConfig, MetadataRecord};
use crate::http::{HttpClient, Mode, RetryPolicy, Transport, UreqTransport};
use crate::openalex::{fetch_citations, ExternalId, OpenAlexConfig};

#[derive(Debug, Clone)]
pub struct IngestPlan {
    pub sources: Vec<Source>,
    pub from: YearMonth,
    pub to: YearMonth,
    /// Holds `metadata/` and the response and embedding caches.
    pub work_dir: PathBuf,
    pub out: PathBuf,
    pub metric: MetricKind,
    pub mode: Mode,
    pub retry: RetryPolicy,
    pub timeout: Duration,
    pub harvest: HarvestConfig,
    pub openalex: OpenAlexConfig,
    pub embed: EmbedConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub records: usize,
    pub failed_months: Vec<String>,
    pub citations_found: usize,
    pub citations_missing: usize,
    pub embedding_calls: usize,
    pub network_calls: usize,
    pub store: BuildSummary,
}

pub fn run_ingest(plan: &IngestPlan) -> Result<IngestReport> {
    let ua = match &plan.openalex.mailto {
        Some(m) => format!("citescope/{} (mailto:{m})", env!("CARGO_PKG_VERSION")),
        None => format!("citescope/{}", env!("CARGO_PKG_VERSION")),
    };
    run_ingest_with(plan, Arc::new(UreqTransport::new(plan.timeout, ua)))
}

pub fn run_ingest_with(plan: &IngestPlan, transport: Arc<dyn Transport>) -> Result<IngestReport> {
    if plan.sources.is_empty() {
        return Err(Error::Invalid("no sources given".into()));
    }
    let client = HttpClient::new(plan.work_dir.join("cache/http"), transport, plan.mode, plan.retry);
    let meta_dir = plan.work_dir.join("metadata");

    let mut records: Vec<MetadataRecord> = Vec::new();
    let mut failed = Vec::new();
    for &source in &plan.sources {
        let stats = fetch_metadata(&client, &plan.harvest, source, plan.from, plan.to, &meta_dir)?;
        failed.extend(stats.failed_months.iter().map(|(m, e)| format!("{source} {m}: {e}")));
        records.extend(load_metadata(&meta_dir, source, plan.from, plan.to)?);
    }

    let lookups: Vec<(String, ExternalId)> = records
        .iter()
        .filter_map(|r| ExternalId::for_record(r).map(|e| (r.id.clone(), e)))
        .collect();
    let citations = fetch_citations(&client, &plan.openalex, &lookups)?;
    let found = citations.iter().filter(|c| c.cited_by_count.is_some()).count();

    let embedder = Embedder::new(&client, plan.embed.clone(), plan.work_dir.join("cache/embeddings"))?;
    let requests: Vec<EmbeddingRequest> = records
        .iter()
        .map(|r| EmbeddingRequest {
            article_id: r.id.clone(),
            text: r.embedding_text(),
        })
        .collect();
    let embeddings = embedder.embed_texts(&requests)?;

    let provenance = serde_json::json!({
        "sources": plan.sources.iter().map(|s| s.as_str()).collect::<Vec<_>>(),
        "from": plan.from.to_string(),
        "to": plan.to.to_string(),
        "model_tag": plan.embed.model_tag,
        "embedding_text": "title + blank line + abstract",
    })
    .to_string();
    let (_, store) = build_store(&records, &citations, &embeddings, plan.metric, &provenance, &plan.out)?;
    Ok(IngestReport {
        records: records.len(),
        failed_months: failed,
        citations_found: found,
        citations_missing: citations.len() - found,
        embedding_calls: embedder.provider_calls(),
        network_calls: client.network_calls(),
        store,
    })
}
