//! A local HTTP server that plays the arXiv, OpenAlex and embedding
//! endpoints from a small in-memory fixture. Used by tests and for dry runs
//! of the ingest pipeline without touching real services.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::json;

#[derive(Debug, Clone)]
pub struct FixtureRequest {
    pub method: String,
    pub path: String,
    pub query: HashMap<String, String>,
    pub body: Vec<u8>,
}

pub type Handler = dyn Fn(&FixtureRequest) -> (u16, String) + Send + Sync;

pub struct FixtureServer {
    addr: String,
    stop: Arc<AtomicBool>,
    log: Arc<Mutex<Vec<FixtureRequest>>>,
    thread: Option<JoinHandle<()>>,
}

impl FixtureServer {
    pub fn start(handler: Arc<Handler>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = format!("http://{}", listener.local_addr()?);
        let stop = Arc::new(AtomicBool::new(false));
        let log = Arc::new(Mutex::new(Vec::new()));
        let (stop2, log2) = (stop.clone(), log.clone());
        let thread = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if stop2.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let (handler, log) = (handler.clone(), log2.clone());
                std::thread::spawn(move || {
                    let _ = serve(stream, handler.as_ref(), &log);
                });
            }
        });
        Ok(Self {
            addr,
            stop,
            log,
            thread: Some(thread),
        })
    }

    /// Base URL, e.g. `http://127.0.0.1:40000`.
    pub fn url(&self) -> &str {
        &self.addr
    }

    pub fn requests(&self) -> Vec<FixtureRequest> {
        self.log.lock().unwrap().clone()
    }

    /// Stops accepting connections; later requests are refused.
    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr.trim_start_matches("http://"));
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for FixtureServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<FixtureRequest>>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let target = parts.next().unwrap_or("/").to_string();
    let mut length = 0;
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let parsed = url::Url::parse(&format!("http://local{target}")).expect("request target");
    let req = FixtureRequest {
        method,
        path: parsed.path().to_string(),
        query: parsed.query_pairs().into_owned().collect(),
        body,
    };
    log.lock().unwrap().push(req.clone());
    let (status, text) = handler(&req);
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/octet-stream\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        text.len()
    )?;
    stream.write_all(text.as_bytes())?;
    stream.flush()
}

/// One fixture article.
#[derive(Debug, Clone)]
pub struct FixtureArticle {
    pub arxiv_id: String,
    pub created: String,
    pub title: String,
    pub abstract_text: String,
    pub doi: Option<String>,
    /// Citation count known to the fake OpenAlex; `None` means unknown work.
    pub cited_by_count: Option<u64>,
}

/// Ten arXiv CS articles over 2010-01 and 2010-02.
pub fn ten_articles() -> Vec<FixtureArticle> {
    (0..10)
        .map(|i| FixtureArticle {
            arxiv_id: format!("10{:02}.{:05}", 1 + i / 5, i),
            created: format!("2010-{:02}-{:02}", 1 + i / 5, 3 + i),
            title: format!("Article number {i}"),
            abstract_text: format!("Abstract text{} for article {i}.", " x".repeat(i)),
            doi: (i % 3 == 0).then(|| format!("10.1000/FIX.{i}")),
            cited_by_count: (i != 7).then_some(i as u64 * 3),
        })
        .collect()
}

/// Embedding dimension served by [`standard_handler`].
pub const FIXTURE_DIM: usize = 4;

/// The unit basis vector the fixture provider returns for `text`.
pub fn fixture_vector(text: &str) -> Vec<f32> {
    let mut v = vec![0.0; FIXTURE_DIM];
    v[text.len() % FIXTURE_DIM] = 1.0;
    v
}

fn oai_record(a: &FixtureArticle) -> String {
    let doi = a.doi.as_ref().map(|d| format!("<doi>{d}</doi>")).unwrap_or_default();
    format!(
        "<record><header><identifier>oai:arXiv.org:{id}</identifier><datestamp>{c}</datestamp><setSpec>cs</setSpec></header>\
         <metadata><arXiv xmlns=\"http://arxiv.org/OAI/arXiv/\"><id>{id}</id><created>{c}</created><title>{t}</title>{doi}\
         <abstract>{ab}</abstract></arXiv></metadata></record>",
        id = a.arxiv_id,
        c = a.created,
        t = a.title,
        ab = a.abstract_text
    )
}

/// Serves `/oai` (two records per page), `/works` and `/embed` for `articles`.
pub fn standard_handler(articles: Vec<FixtureArticle>) -> Arc<Handler> {
    Arc::new(move |req: &FixtureRequest| match req.path.as_str() {
        "/oai" => {
            let (month, page) = match req.query.get("resumptionToken") {
                Some(t) => {
                    let (m, p) = t.split_once('|').unwrap_or((t, "0"));
                    (m.to_string(), p.parse::<usize>().unwrap_or(0))
                }
                None => (req.query.get("from").map(|f| f[..7].to_string()).unwrap_or_default(), 0),
            };
            let in_month: Vec<&FixtureArticle> = articles.iter().filter(|a| a.created.starts_with(&month)).collect();
            if in_month.is_empty() {
                return (200, "<OAI-PMH><error code=\"noRecordsMatch\">none</error></OAI-PMH>".into());
            }
            let chunk: String = in_month.iter().skip(page * 2).take(2).map(|a| oai_record(a)).collect();
            let more = (page + 1) * 2 < in_month.len();
            let token = if more {
                format!("<resumptionToken>{month}|{}</resumptionToken>", page + 1)
            } else {
                "<resumptionToken/>".to_string()
            };
            (200, format!("<OAI-PMH><ListRecords>{chunk}{token}</ListRecords></OAI-PMH>"))
        }
        "/works" => {
            let filter = req.query.get("filter").cloned().unwrap_or_default();
            let Some(dois) = filter.strip_prefix("doi:") else {
                return (200, json!({"results": []}).to_string());
            };
            let results: Vec<_> = dois
                .split('|')
                .filter_map(|d| {
                    articles.iter().find_map(|a| {
                        let doi = a
                            .doi
                            .clone()
                            .unwrap_or_else(|| format!("10.48550/arxiv.{}", a.arxiv_id))
                            .to_lowercase();
                        (doi == d && a.cited_by_count.is_some()).then(|| {
                            json!({"doi": format!("https://doi.org/{doi}"), "ids": {}, "cited_by_count": a.cited_by_count})
                        })
                    })
                })
                .collect();
            (200, json!({ "results": results }).to_string())
        }
        "/embed" => {
            let v: serde_json::Value = match serde_json::from_slice(&req.body) {
                Ok(v) => v,
                Err(_) => return (400, "bad json".into()),
            };
            let vectors: Vec<Vec<f32>> = v["texts"]
                .as_array()
                .map(|t| t.iter().map(|s| fixture_vector(s.as_str().unwrap_or(""))).collect())
                .unwrap_or_default();
            (200, json!({ "vectors": vectors }).to_string())
        }
        _ => (404, "not found".into()),
    })
}
