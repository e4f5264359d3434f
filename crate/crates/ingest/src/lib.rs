//! Builds citescope stores from real sources: arXiv and PubMed metadata,
//! OpenAlex citation counts and embeddings from an HTTP provider.
//!
//! Every request goes through [`http::HttpClient`], which caches responses
//! on disk so warm re-runs need no network.

pub mod build;
pub mod embed;
pub mod error;
pub mod fixture;
pub mod harvest;
pub mod http;
pub mod openalex;
pub mod pipeline;
mod xml;

pub use build::{build_store, BuildSummary};
pub use embed::{EmbedConfig, Embedder, EmbeddingRequest, EmbeddingResult};
pub use error::{Error, Result};
pub use harvest::{fetch_metadata, load_metadata, HarvestConfig, HarvestStats, MetadataRecord};
pub use http::{HttpClient, Mode, RetryPolicy, Transport, UreqTransport};
pub use openalex::{fetch_citations, CitationRecord, ExternalId, OpenAlexConfig};
pub use pipeline::{run_ingest, run_ingest_with, IngestPlan, IngestReport};
