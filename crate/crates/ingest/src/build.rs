use std::collections::{HashMap, HashSet};
use std::path::Path;

use citescope_core::corpus::store_write;
use citescope_core::{Article, Corpus, MetricKind};
use log::info;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingResult;
use crate::error::{Error, Result};
use crate::harvest::MetadataRecord;
use crate::openalex::CitationRecord;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub written: usize,
    pub dim: usize,
    /// Metadata records without an embedding.
    pub dropped_no_embedding: usize,
    /// Written articles flagged as lacking citation data.
    pub without_citations: usize,
}

/// Joins the three inputs on article id and writes the store. Coordinates
/// are normalized to unit length.
pub fn build_store(
    metadata: &[MetadataRecord],
    citations: &[CitationRecord],
    embeddings: &[EmbeddingResult],
    metric: MetricKind,
    provenance: &str,
    out: &Path,
) -> Result<(Corpus, BuildSummary)> {
    let vectors: HashMap<&str, &[f32]> = embeddings.iter().map(|e| (e.article_id.as_str(), e.coords.as_slice())).collect();
    let counts: HashMap<&str, Option<u64>> = citations
        .iter()
        .map(|c| (c.article_id.as_str(), c.cited_by_count))
        .collect();
    let mut seen = HashSet::new();
    let mut articles = Vec::new();
    let mut dropped = 0;
    let mut without_citations = 0;
    for m in metadata {
        if !seen.insert(m.id.as_str()) {
            continue;
        }
        let Some(v) = vectors.get(m.id.as_str()) else {
            dropped += 1;
            continue;
        };
        let norm = v.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt();
        let coords = if norm > 0.0 {
            v.iter().map(|&x| (x as f64 / norm) as f32).collect()
        } else {
            v.to_vec()
        };
        let count = counts.get(m.id.as_str()).copied().flatten();
        if count.is_none() {
            without_citations += 1;
        }
        articles.push(Article {
            id: m.id.clone(),
            coords,
            published: m.published,
            citations: count.unwrap_or(0),
            source: m.source,
            has_citation_data: count.is_some(),
        });
    }
    if articles.is_empty() {
        return Err(Error::EmptyJoin);
    }
    let dim = articles[0].coords.len();
    let corpus = Corpus::new(dim, metric, articles, provenance)?;
    store_write(&corpus, out)?;
    let summary = BuildSummary {
        written: corpus.len(),
        dim,
        dropped_no_embedding: dropped,
        without_citations,
    };
    info!(
        "store {}: {} articles, {} dropped without embedding, {} without citation data",
        out.display(),
        summary.written,
        summary.dropped_no_embedding,
        summary.without_citations
    );
    Ok((corpus, summary))
}
