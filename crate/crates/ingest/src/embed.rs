//! Text embedding through an HTTP provider:
//! `POST {"model_tag": ..., "texts": [...]}` answered by `{"vectors": [[...], ...]}`.
//!
//! Vectors are cached per `(model_tag, sha256(text))` under
//! `<cache>/<model key>/<aa>/<text hash>.json`, next to a `model.json` that
//! pins the model's dimension.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{sha256_hex, write_atomic, HttpClient, Method, Request};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub article_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResult {
    pub article_id: String,
    pub coords: Vec<f32>,
    pub model_tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub endpoint: String,
    pub model_tag: String,
    pub batch_size: usize,
}

#[derive(Serialize)]
struct ProviderRequest<'a> {
    model_tag: &'a str,
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct ProviderResponse {
    vectors: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct ModelInfo {
    model_tag: String,
    dim: usize,
}

#[derive(Serialize, Deserialize)]
struct CachedVector {
    coords: Vec<f32>,
}

pub struct Embedder<'c> {
    client: &'c HttpClient,
    cfg: EmbedConfig,
    dir: PathBuf,
    provider_calls: AtomicUsize,
}

impl<'c> Embedder<'c> {
    pub fn new(client: &'c HttpClient, cfg: EmbedConfig, cache_dir: impl Into<PathBuf>) -> Result<Self> {
        if cfg.model_tag.is_empty() {
            return Err(Error::Invalid("embedding model tag must not be empty".into()));
        }
        if cfg.batch_size == 0 {
            return Err(Error::Invalid("embedding batch size must be positive".into()));
        }
        let dir = cache_dir.into().join(&sha256_hex(cfg.model_tag.as_bytes())[..16]);
        Ok(Self {
            client,
            cfg,
            dir,
            provider_calls: AtomicUsize::new(0),
        })
    }

    /// Batches sent to the provider so far.
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::Relaxed)
    }

    fn vector_path(&self, hash: &str) -> PathBuf {
        self.dir.join(&hash[..2]).join(format!("{hash}.json"))
    }

    fn model_dim(&self) -> Result<Option<usize>> {
        let path = self.dir.join("model.json");
        match fs::read(&path) {
            Ok(b) => Ok(Some(serde_json::from_slice::<ModelInfo>(&b)?.dim)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    fn cached(&self, hash: &str) -> Option<Vec<f32>> {
        let b = fs::read(self.vector_path(hash)).ok()?;
        serde_json::from_slice::<CachedVector>(&b).ok().map(|c| c.coords)
    }

    /// Embeds `requests`, serving cached texts locally. Results follow the
    /// input order; identical texts get identical coordinates.
    pub fn embed_texts(&self, requests: &[EmbeddingRequest]) -> Result<Vec<EmbeddingResult>> {
        let mut dim = self.model_dim()?;
        let hashes: Vec<String> = requests
            .iter()
            .map(|r| {
                if r.text.trim().is_empty() {
                    Err(Error::Invalid(format!("empty embedding text for {}", r.article_id)))
                } else {
                    Ok(sha256_hex(r.text.as_bytes()))
                }
            })
            .collect::<Result<_>>()?;

        let mut vectors: HashMap<&str, Vec<f32>> = HashMap::new();
        let mut missing: Vec<(&str, &str)> = Vec::new();
        for (r, h) in requests.iter().zip(&hashes) {
            if vectors.contains_key(h.as_str()) || missing.iter().any(|(m, _)| m == h) {
                continue;
            }
            match self.cached(h) {
                Some(v) => {
                    check_dim(&self.cfg.model_tag, &mut dim, v.len())?;
                    vectors.insert(h, v);
                }
                None => missing.push((h, &r.text)),
            }
        }

        for batch in missing.chunks(self.cfg.batch_size) {
            let body = serde_json::to_vec(&ProviderRequest {
                model_tag: &self.cfg.model_tag,
                texts: batch.iter().map(|(_, t)| *t).collect(),
            })?;
            self.provider_calls.fetch_add(1, Ordering::Relaxed);
            let answer = self.client.send_uncached(&Request {
                method: Method::Post,
                url: self.cfg.endpoint.clone(),
                body: Some(body),
            })?;
            let resp: ProviderResponse =
                serde_json::from_slice(&answer).map_err(|e| Error::parse("embedding response", e))?;
            if resp.vectors.len() != batch.len() {
                return Err(Error::EmbeddingCount {
                    expected: batch.len(),
                    found: resp.vectors.len(),
                });
            }
            // check the whole batch before caching any of it
            for v in &resp.vectors {
                check_dim(&self.cfg.model_tag, &mut dim, v.len())?;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::parse("embedding response", "non-finite coordinate"));
                }
            }
            let model = self.dir.join("model.json");
            if !model.exists() {
                let info = ModelInfo {
                    model_tag: self.cfg.model_tag.clone(),
                    dim: dim.expect("set by check_dim"),
                };
                write_atomic(&model, &serde_json::to_vec_pretty(&info)?)?;
            }
            for ((h, _), v) in batch.iter().zip(resp.vectors) {
                write_atomic(&self.vector_path(h), &serde_json::to_vec(&CachedVector { coords: v.clone() })?)?;
                vectors.insert(h, v);
            }
        }

        Ok(requests
            .iter()
            .zip(&hashes)
            .map(|(r, h)| EmbeddingResult {
                article_id: r.article_id.clone(),
                coords: vectors[h.as_str()].clone(),
                model_tag: self.cfg.model_tag.clone(),
            })
            .collect())
    }
}

fn check_dim(model_tag: &str, dim: &mut Option<usize>, found: usize) -> Result<()> {
    match *dim {
        Some(expected) if expected != found => Err(Error::DimensionDrift {
            model_tag: model_tag.to_string(),
            expected,
            found,
        }),
        Some(_) => Ok(()),
        None if found == 0 => Err(Error::parse("embedding response", "empty vector")),
        None => {
            *dim = Some(found);
            Ok(())
        }
    }
}
