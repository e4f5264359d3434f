//! HTTP access behind a content-addressed response cache.
//!
//! Cache entries live at `<dir>/<aa>/<sha256>.body` with a `.meta.json`
//! sidecar; the key hashes method, URL and request body. Only successful
//! responses are stored, and the sidecar is written last so a torn write
//! never looks like a hit.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, SecondsFormat, Utc};
use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: Method,
    pub url: String,
    /// JSON body for POST requests.
    pub body: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

pub trait Transport: Send + Sync {
    fn send(&self, req: &Request) -> Result<Response>;
}

/// Live transport over `ureq`.
pub struct UreqTransport {
    agent: ureq::Agent,
    user_agent: String,
}

const MAX_BODY: u64 = 256 * 1024 * 1024;

impl UreqTransport {
    pub fn new(timeout: Duration, user_agent: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            agent,
            user_agent: user_agent.into(),
        }
    }
}

impl Transport for UreqTransport {
    fn send(&self, req: &Request) -> Result<Response> {
        let fail = |e: ureq::Error| Error::Transport {
            url: req.url.clone(),
            detail: e.to_string(),
        };
        let resp = match (req.method, &req.body) {
            (Method::Get, _) => self.agent.get(&req.url).header("User-Agent", &self.user_agent).call(),
            (Method::Post, body) => self
                .agent
                .post(&req.url)
                .header("User-Agent", &self.user_agent)
                .header("Content-Type", "application/json")
                .send(body.as_deref().unwrap_or_default()),
        };
        let mut resp = resp.map_err(fail)?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().with_config().limit(MAX_BODY).read_to_vec().map_err(fail)?;
        Ok(Response { status, body })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Serve from cache, fall back to the network and record the answer.
    #[default]
    Live,
    /// Serve from cache only; a miss is an error. Used to replay recorded fixtures.
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 6,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16)).min(self.max_delay)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheMeta {
    method: String,
    url: String,
    fetched_at: DateTime<Utc>,
    body_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fetched {
    pub body: Vec<u8>,
    pub fetched_at: DateTime<Utc>,
    pub from_cache: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_key(req: &Request) -> String {
    let mut h = Sha256::new();
    h.update(req.method.as_str());
    h.update(b"\n");
    h.update(req.url.as_bytes());
    h.update(b"\n");
    if let Some(b) = &req.body {
        h.update(b);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub struct HttpClient {
    cache_dir: PathBuf,
    transport: Arc<dyn Transport>,
    mode: Mode,
    retry: RetryPolicy,
    write_lock: Mutex<()>,
    network_calls: AtomicUsize,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

impl HttpClient {
    pub fn new(cache_dir: impl Into<PathBuf>, transport: Arc<dyn Transport>, mode: Mode, retry: RetryPolicy) -> Self {
        Self {
            cache_dir: cache_dir.into(),
            transport,
            mode,
            retry,
            write_lock: Mutex::new(()),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    /// Requests that reached the transport, including retries.
    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::Relaxed)
    }

    pub fn get(&self, url: &str) -> Result<Fetched> {
        self.fetch(&Request {
            method: Method::Get,
            url: url.to_string(),
            body: None,
        })
    }

    pub fn post_json(&self, url: &str, body: Vec<u8>) -> Result<Fetched> {
        self.fetch(&Request {
            method: Method::Post,
            url: url.to_string(),
            body: Some(body),
        })
    }

    /// Sends without consulting or filling the response cache.
    pub fn send_uncached(&self, req: &Request) -> Result<Vec<u8>> {
        if self.mode == Mode::Offline {
            return Err(Error::OfflineMiss { url: req.url.clone() });
        }
        self.send_with_retry(req)
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        let dir = self.cache_dir.join(&key[..2]);
        (dir.join(format!("{key}.body")), dir.join(format!("{key}.meta.json")))
    }

    fn lookup(&self, key: &str) -> Option<Fetched> {
        let (body_path, meta_path) = self.paths(key);
        let meta: CacheMeta = serde_json::from_slice(&fs::read(&meta_path).ok()?).ok()?;
        let body = fs::read(&body_path).ok()?;
        if sha256_hex(&body) != meta.body_sha256 {
            warn!("ignoring corrupt cache entry {}", body_path.display());
            return None;
        }
        Some(Fetched {
            body,
            fetched_at: meta.fetched_at,
            from_cache: true,
        })
    }

    fn store(&self, key: &str, req: &Request, body: &[u8], fetched_at: DateTime<Utc>) -> Result<()> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let (body_path, meta_path) = self.paths(key);
        write_atomic(&body_path, body)?;
        let meta = CacheMeta {
            method: req.method.as_str().into(),
            url: req.url.clone(),
            fetched_at,
            body_sha256: sha256_hex(body),
        };
        write_atomic(&meta_path, &serde_json::to_vec_pretty(&meta)?)
    }

    pub fn fetch(&self, req: &Request) -> Result<Fetched> {
        let key = cache_key(req);
        if let Some(hit) = self.lookup(&key) {
            debug!("cache hit {}", req.url);
            return Ok(hit);
        }
        if self.mode == Mode::Offline {
            return Err(Error::OfflineMiss { url: req.url.clone() });
        }
        let body = self.send_with_retry(req)?;
        // whole seconds keep the recorded timestamp stable across platforms
        let now = Utc::now();
        let fetched_at = DateTime::parse_from_rfc3339(&now.to_rfc3339_opts(SecondsFormat::Secs, true))
            .map(|d| d.with_timezone(&Utc))
            .unwrap_or(now);
        self.store(&key, req, &body, fetched_at)?;
        Ok(Fetched {
            body,
            fetched_at,
            from_cache: false,
        })
    }

    fn send_with_retry(&self, req: &Request) -> Result<Vec<u8>> {
        let mut attempt = 0;
        loop {
            self.network_calls.fetch_add(1, Ordering::Relaxed);
            let outcome = self.transport.send(req).and_then(|r| {
                if (200..300).contains(&r.status) {
                    Ok(r.body)
                } else {
                    Err(Error::Status {
                        url: req.url.clone(),
                        status: r.status,
                    })
                }
            });
            match outcome {
                Err(e) if e.is_transient() && attempt + 1 < self.retry.max_attempts => {
                    let wait = self.retry.delay(attempt);
                    warn!("{e}; retrying in {wait:?}");
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}
