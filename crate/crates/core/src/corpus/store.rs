//! Binary vector store with a JSON-lines metadata sidecar.
//!
//! `vectors.lsc`: magic `LSCV`, u32 version (1), u32 dim, u64 count, then
//! `count * dim` little-endian f32 values row-major in `(published, id)` order.
//! `meta.jsonl`: one object per article in the same order.
//! `corpus.json`: optional manifest carrying the metric and provenance.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{validate_article, Article, Corpus, Source};
use crate::error::{Error, Result};
use crate::spatial::MetricKind;

pub const VECTORS_FILE: &str = "vectors.lsc";
pub const META_FILE: &str = "meta.jsonl";
pub const MANIFEST_FILE: &str = "corpus.json";

const MAGIC: &[u8; 4] = b"LSCV";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Serialize, Deserialize)]
struct MetaRecord {
    id: String,
    #[serde(with = "ymd")]
    published: NaiveDate,
    citations: u64,
    has_citation_data: bool,
    source: Source,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    dim: usize,
    count: u64,
    metric: MetricKind,
    provenance: String,
}

mod ymd {
    use chrono::NaiveDate;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &NaiveDate, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&d.format("%Y-%m-%d"))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
        let s = String::deserialize(d)?;
        NaiveDate::parse_from_str(&s, "%Y-%m-%d").map_err(serde::de::Error::custom)
    }
}

fn malformed(path: &Path, detail: impl Into<String>) -> Error {
    Error::MalformedStore {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Writes `corpus` into the directory `store_path`, creating it if needed.
/// The output bytes depend only on the corpus.
pub fn store_write(corpus: &Corpus, store_path: impl AsRef<Path>) -> Result<()> {
    let dir = store_path.as_ref();
    for a in corpus.articles() {
        validate_article(a, corpus.dim())?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut vectors = Vec::with_capacity(HEADER_LEN + corpus.len() * corpus.dim() * 4);
    vectors.extend_from_slice(MAGIC);
    vectors.extend_from_slice(&VERSION.to_le_bytes());
    vectors.extend_from_slice(&(corpus.dim() as u32).to_le_bytes());
    vectors.extend_from_slice(&(corpus.len() as u64).to_le_bytes());
    for a in corpus.articles() {
        for x in &a.coords {
            vectors.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_file(&dir.join(VECTORS_FILE), &vectors)?;

    let meta_path = dir.join(META_FILE);
    let file = fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut w = BufWriter::new(file);
    for a in corpus.articles() {
        let rec = MetaRecord {
            id: a.id.clone(),
            published: a.published,
            citations: a.citations,
            has_citation_data: a.has_citation_data,
            source: a.source,
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(&meta_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&meta_path, e))?;

    let manifest = Manifest {
        dim: corpus.dim(),
        count: corpus.len() as u64,
        metric: corpus.metric(),
        provenance: corpus.provenance().to_string(),
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    write_file(&dir.join(MANIFEST_FILE), &bytes)
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_corpus(store_path: impl AsRef<Path>) -> Result<Corpus> {
    let dir = store_path.as_ref();
    let vec_path = dir.join(VECTORS_FILE);
    let bytes = fs::read(&vec_path).map_err(|e| Error::io(&vec_path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(malformed(&vec_path, format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(malformed(&vec_path, "bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(malformed(&vec_path, format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let expected = (count as u128) * (dim as u128) * 4 + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(malformed(
            &vec_path,
            format!("header declares {count} x {dim} values but payload has {} bytes", bytes.len() - HEADER_LEN),
        ));
    }

    let man_path = dir.join(MANIFEST_FILE);
    let (metric, provenance) = if man_path.exists() {
        let raw = fs::read(&man_path).map_err(|e| Error::io(&man_path, e))?;
        let m: Manifest = serde_json::from_slice(&raw).map_err(|e| malformed(&man_path, e.to_string()))?;
        if m.dim != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: m.dim,
                context: format!("{MANIFEST_FILE} vs {VECTORS_FILE}"),
            });
        }
        if m.count != count {
            return Err(malformed(&man_path, format!("manifest count {} != vector count {count}", m.count)));
        }
        (m.metric, m.provenance)
    } else {
        (MetricKind::default(), String::new())
    };

    let meta_path = dir.join(META_FILE);
    let file = fs::File::open(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let mut articles = Vec::with_capacity(count as usize);
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&meta_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: MetaRecord = serde_json::from_str(&line)
            .map_err(|e| malformed(&meta_path, format!("line {}: {e}: {line}", lineno + 1)))?;
        if articles.len() as u64 >= count {
            return Err(malformed(
                &meta_path,
                format!("more records than the {count} vectors (extra record {:?})", rec.id),
            ));
        }
        let coords: Vec<f32> = values.by_ref().take(dim).collect();
        articles.push(Article {
            id: rec.id,
            coords,
            published: rec.published,
            citations: rec.citations,
            source: rec.source,
            has_citation_data: rec.has_citation_data,
        });
    }
    if articles.len() as u64 != count {
        return Err(malformed(
            &meta_path,
            format!("{} records for {count} vectors", articles.len()),
        ));
    }
    Corpus::new(dim, metric, articles, provenance)
}
