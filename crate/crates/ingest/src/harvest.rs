//! Metadata harvesting from arXiv (OAI-PMH) and PubMed (E-utilities).
//!
//! Output goes to `<out>/<source>/<YYYY-MM>.jsonl`, one record per line
//! sorted by id. A `<YYYY-MM>.done` marker is written after the month's
//! file, so an interrupted run resumes at the first unfinished month and
//! re-runs over finished months fetch nothing.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::NaiveDate;
use citescope_core::{Source, YearMonth};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::http::{write_atomic, HttpClient};
use crate::xml::{squash, walk};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRecord {
    /// `arxiv:<id>` or `pmid:<id>`.
    pub id: String,
    pub source: Source,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    /// First-upload date.
    pub published: NaiveDate,
    pub doi: Option<String>,
}

impl MetadataRecord {
    /// The text handed to the embedding model.
    pub fn embedding_text(&self) -> String {
        format!("{}\n\n{}", self.title, self.abstract_text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarvestConfig {
    pub arxiv_endpoint: String,
    pub eutils_endpoint: String,
    pub eutils_api_key: Option<String>,
    /// Pause after each request that went to the network.
    pub request_delay: Duration,
    pub efetch_batch: usize,
}

impl Default for HarvestConfig {
    fn default() -> Self {
        Self {
            arxiv_endpoint: "https://export.arxiv.org/oai2".into(),
            eutils_endpoint: "https://eutils.ncbi.nlm.nih.gov/entrez/eutils".into(),
            eutils_api_key: None,
            request_delay: Duration::from_secs(3),
            efetch_batch: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarvestStats {
    pub months_fetched: usize,
    pub months_already_done: usize,
    pub new_records: usize,
    /// Months that failed permanently; they stay unmarked for the next run.
    pub failed_months: Vec<(YearMonth, String)>,
}

fn month_file(out: &Path, source: Source, month: YearMonth) -> (PathBuf, PathBuf) {
    let dir = out.join(source.as_str());
    (dir.join(format!("{month}.jsonl")), dir.join(format!("{month}.done")))
}

fn arxiv_set(source: Source) -> Option<&'static str> {
    match source {
        Source::ArxivCs => Some("cs"),
        Source::ArxivPhysics => Some("physics"),
        Source::ArxivMath => Some("math"),
        _ => None,
    }
}

/// Harvests every month in `[from, to]`; an empty range yields nothing.
pub fn fetch_metadata(
    client: &HttpClient,
    cfg: &HarvestConfig,
    source: Source,
    from: YearMonth,
    to: YearMonth,
    out: &Path,
) -> Result<HarvestStats> {
    if source == Source::Synthetic {
        return Err(Error::Invalid("synthetic corpora are generated, not harvested".into()));
    }
    let mut stats = HarvestStats::default();
    if to < from {
        return Ok(stats);
    }
    for month in from.through(to) {
        let (file, done) = month_file(out, source, month);
        if done.exists() {
            stats.months_already_done += 1;
            continue;
        }
        let fetched = match source {
            Source::PubMed => fetch_pubmed_month(client, cfg, month),
            _ => fetch_arxiv_month(client, cfg, source, month),
        };
        let records = match fetched {
            Ok(r) => r,
            Err(e @ (Error::Io { .. } | Error::Invalid(_))) => return Err(e),
            Err(e) => {
                warn!("{source} {month}: {e}; skipping");
                stats.failed_months.push((month, e.to_string()));
                continue;
            }
        };
        let mut by_id: BTreeMap<String, MetadataRecord> = BTreeMap::new();
        for r in records {
            by_id.entry(r.id.clone()).or_insert(r);
        }
        let mut lines = Vec::new();
        for r in by_id.values() {
            serde_json::to_writer(&mut lines, r)?;
            lines.push(b'\n');
        }
        write_atomic(&file, &lines)?;
        write_atomic(&done, b"")?;
        info!("{source} {month}: {} records", by_id.len());
        stats.months_fetched += 1;
        stats.new_records += by_id.len();
    }
    Ok(stats)
}

/// Reads harvested records for `[from, to]`, first occurrence of an id winning.
pub fn load_metadata(out: &Path, source: Source, from: YearMonth, to: YearMonth) -> Result<Vec<MetadataRecord>> {
    let mut seen = std::collections::HashSet::new();
    let mut all = Vec::new();
    if to < from {
        return Ok(all);
    }
    for month in from.through(to) {
        let (file, done) = month_file(out, source, month);
        if !done.exists() {
            continue;
        }
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        for (i, line) in text.lines().enumerate() {
            let r: MetadataRecord = serde_json::from_str(line)
                .map_err(|e| Error::parse(format!("{}:{}", file.display(), i + 1), e))?;
            if seen.insert(r.id.clone()) {
                all.push(r);
            }
        }
    }
    Ok(all)
}

fn pause(client: &HttpClient, cfg: &HarvestConfig, from_cache: bool) {
    if !from_cache && client.mode() == crate::http::Mode::Live && !cfg.request_delay.is_zero() {
        std::thread::sleep(cfg.request_delay);
    }
}

fn url_with(base: &str, params: &[(&str, &str)]) -> Result<String> {
    url::Url::parse_with_params(base, params)
        .map(String::from)
        .map_err(|e| Error::Invalid(format!("endpoint {base}: {e}")))
}

fn fetch_arxiv_month(
    client: &HttpClient,
    cfg: &HarvestConfig,
    source: Source,
    month: YearMonth,
) -> Result<Vec<MetadataRecord>> {
    let set = arxiv_set(source).expect("arXiv source");
    let first = month.first_day().format("%Y-%m-%d").to_string();
    let last = (month.add_months(1).first_day() - chrono::Duration::days(1))
        .format("%Y-%m-%d")
        .to_string();
    let mut url = url_with(
        &cfg.arxiv_endpoint,
        &[
            ("verb", "ListRecords"),
            ("metadataPrefix", "arXiv"),
            ("set", set),
            ("from", &first),
            ("until", &last),
        ],
    )?;
    let mut out = Vec::new();
    loop {
        let page = client.get(&url)?;
        pause(client, cfg, page.from_cache);
        let body = String::from_utf8_lossy(&page.body);
        let (records, token) = parse_oai_page(&body, source)?;
        out.extend(records);
        match token {
            Some(t) => url = url_with(&cfg.arxiv_endpoint, &[("verb", "ListRecords"), ("resumptionToken", &t)])?,
            None => return Ok(out),
        }
    }
}

/// Parses one ListRecords page: records plus the resumption token, if any.
pub fn parse_oai_page(xml: &str, source: Source) -> Result<(Vec<MetadataRecord>, Option<String>)> {
    #[derive(Default)]
    struct Cur {
        deleted: bool,
        id: Option<String>,
        created: Option<String>,
        title: Option<String>,
        abstract_text: Option<String>,
        doi: Option<String>,
    }
    let mut records = Vec::new();
    let mut token = None;
    let mut cur = Cur::default();
    walk(xml, "OAI-PMH response", |c| {
        match c.name {
            "error" => {
                let code = c.attr("code").unwrap_or("");
                if code != "noRecordsMatch" {
                    return Err(Error::parse("OAI-PMH response", format!("{code}: {}", c.text.trim())));
                }
            }
            "resumptionToken" => {
                let t = c.text.trim();
                token = (!t.is_empty()).then(|| t.to_string());
            }
            "header" if c.attr("status") == Some("deleted") => cur.deleted = true,
            "id" if c.under(&["arXiv"]) => cur.id = Some(c.text.trim().to_string()),
            "created" if c.under(&["arXiv"]) => cur.created = Some(c.text.trim().to_string()),
            "title" if c.under(&["arXiv"]) => cur.title = Some(squash(c.text)),
            "abstract" if c.under(&["arXiv"]) => cur.abstract_text = Some(squash(c.text)),
            "doi" if c.under(&["arXiv"]) => cur.doi = c.text.split_whitespace().next().map(str::to_lowercase),
            "record" => {
                let done = std::mem::take(&mut cur);
                if done.deleted {
                    return Ok(());
                }
                let id = done.id.ok_or_else(|| Error::parse("OAI-PMH record", "missing <id>"))?;
                let created = done
                    .created
                    .ok_or_else(|| Error::parse(format!("OAI-PMH record {id}"), "missing <created>"))?;
                let published = NaiveDate::parse_from_str(&created, "%Y-%m-%d")
                    .map_err(|e| Error::parse(format!("OAI-PMH record {id}"), e))?;
                records.push(MetadataRecord {
                    id: format!("arxiv:{id}"),
                    source,
                    title: done.title.unwrap_or_default(),
                    abstract_text: done.abstract_text.unwrap_or_default(),
                    published,
                    doi: done.doi,
                });
            }
            _ => {}
        }
        Ok(())
    })?;
    Ok((records, token))
}

#[derive(Deserialize)]
struct ESearch {
    esearchresult: ESearchResult,
}

#[derive(Deserialize)]
struct ESearchResult {
    count: String,
    idlist: Vec<String>,
}

const ESEARCH_CAP: usize = 9_999;

fn fetch_pubmed_month(client: &HttpClient, cfg: &HarvestConfig, month: YearMonth) -> Result<Vec<MetadataRecord>> {
    let mut out = Vec::new();
    let base = cfg.eutils_endpoint.trim_end_matches('/');
    let key = cfg.eutils_api_key.clone().unwrap_or_default();
    // one search per day keeps each result list under the esearch cap
    for day in 1..=month.days() {
        let date = month.first_day() + chrono::Duration::days(day as i64 - 1);
        let d = date.format("%Y/%m/%d").to_string();
        let mut params = vec![
            ("db", "pubmed"),
            ("datetype", "edat"),
            ("mindate", d.as_str()),
            ("maxdate", d.as_str()),
            ("retmax", "9999"),
            ("retmode", "json"),
        ];
        if !key.is_empty() {
            params.push(("api_key", key.as_str()));
        }
        let page = client.get(&url_with(&format!("{base}/esearch.fcgi"), &params)?)?;
        pause(client, cfg, page.from_cache);
        let search: ESearch = serde_json::from_slice(&page.body).map_err(|e| Error::parse("esearch response", e))?;
        let count: usize = search.esearchresult.count.parse().unwrap_or(0);
        if count > ESEARCH_CAP {
            warn!("pubmed {d}: {count} articles, only the first {ESEARCH_CAP} are harvested");
        }
        for ids in search.esearchresult.idlist.chunks(cfg.efetch_batch.max(1)) {
            let joined = ids.join(",");
            let mut params = vec![("db", "pubmed"), ("id", joined.as_str()), ("retmode", "xml")];
            if !key.is_empty() {
                params.push(("api_key", key.as_str()));
            }
            let page = client.get(&url_with(&format!("{base}/efetch.fcgi"), &params)?)?;
            pause(client, cfg, page.from_cache);
            out.extend(parse_pubmed_articles(&String::from_utf8_lossy(&page.body), date)?);
        }
    }
    Ok(out)
}

/// Parses an efetch `PubmedArticleSet`; `published` is the Entrez date searched.
pub fn parse_pubmed_articles(xml: &str, published: NaiveDate) -> Result<Vec<MetadataRecord>> {
    #[derive(Default)]
    struct Cur {
        pmid: Option<String>,
        title: String,
        abstract_parts: Vec<String>,
        doi: Option<String>,
    }
    let mut out = Vec::new();
    let mut cur = Cur::default();
    walk(xml, "PubMed efetch response", |c| {
        match c.name {
            "PMID" if c.under(&["PubmedArticle", "MedlineCitation"]) => cur.pmid = Some(c.text.trim().to_string()),
            "ArticleTitle" if c.under(&["MedlineCitation", "Article"]) => cur.title = squash(c.text),
            "AbstractText" if c.under(&["MedlineCitation", "Article", "Abstract"]) => {
                cur.abstract_parts.push(squash(c.text))
            }
            "ArticleId" if c.under(&["PubmedArticle", "PubmedData", "ArticleIdList"]) && c.attr("IdType") == Some("doi") => {
                cur.doi = Some(c.text.trim().to_lowercase())
            }
            "PubmedArticle" => {
                let done = std::mem::take(&mut cur);
                let pmid = done.pmid.ok_or_else(|| Error::parse("PubmedArticle", "missing PMID"))?;
                out.push(MetadataRecord {
                    id: format!("pmid:{pmid}"),
                    source: Source::PubMed,
                    title: done.title,
                    abstract_text: done.abstract_parts.join(" "),
                    published,
                    doi: done.doi,
                });
            }
            _ => {}
        }
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const OAI: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<OAI-PMH xmlns="http://www.openarchives.org/OAI/2.0/">
<ListRecords>
<record><header><identifier>oai:arXiv.org:1001.0001</identifier><datestamp>2010-01-05</datestamp></header>
<metadata><arXiv xmlns="http://arxiv.org/OAI/arXiv/"><id>1001.0001</id><created>2010-01-02</created>
<title>Deep
  things</title><doi>10.1000/ABC 10.1000/def</doi><abstract>  We study &amp; find.
</abstract></arXiv></metadata></record>
<record><header status="deleted"><identifier>oai:arXiv.org:1001.0002</identifier></header></record>
<resumptionToken cursor="0" completeListSize="3">tok|1001</resumptionToken>
</ListRecords></OAI-PMH>"#;

    #[test]
    fn oai_page() {
        let (recs, token) = parse_oai_page(OAI, Source::ArxivCs).unwrap();
        assert_eq!(token.as_deref(), Some("tok|1001"));
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.id, "arxiv:1001.0001");
        assert_eq!(r.title, "Deep things");
        assert_eq!(r.abstract_text, "We study & find.");
        assert_eq!(r.doi.as_deref(), Some("10.1000/abc"));
        assert_eq!(r.published, NaiveDate::from_ymd_opt(2010, 1, 2).unwrap());
        assert_eq!(r.embedding_text(), "Deep things\n\nWe study & find.");
    }

    #[test]
    fn oai_errors() {
        let empty = r#"<OAI-PMH><error code="noRecordsMatch">none</error></OAI-PMH>"#;
        assert_eq!(parse_oai_page(empty, Source::ArxivCs).unwrap(), (vec![], None));
        let bad = r#"<OAI-PMH><error code="badArgument">no</error></OAI-PMH>"#;
        assert!(parse_oai_page(bad, Source::ArxivCs).is_err());
        let last = r#"<OAI-PMH><ListRecords><resumptionToken completeListSize="3"/></ListRecords></OAI-PMH>"#;
        assert_eq!(parse_oai_page(last, Source::ArxivCs).unwrap().1, None);
    }

    #[test]
    fn pubmed_set() {
        let xml = r#"<PubmedArticleSet><PubmedArticle><MedlineCitation><PMID Version="1">42</PMID>
<Article><ArticleTitle>A <i>title</i></ArticleTitle><Abstract><AbstractText Label="A">One.</AbstractText>
<AbstractText Label="B">Two.</AbstractText></Abstract></Article>
<CommentsCorrectionsList><CommentsCorrections><PMID>7</PMID></CommentsCorrections></CommentsCorrectionsList>
</MedlineCitation><PubmedData><ArticleIdList><ArticleId IdType="pubmed">42</ArticleId>
<ArticleId IdType="doi">10.5/X</ArticleId></ArticleIdList>
<ReferenceList><Reference><ArticleIdList><ArticleId IdType="doi">10.9/ref</ArticleId></ArticleIdList></Reference></ReferenceList>
</PubmedData></PubmedArticle></PubmedArticleSet>"#;
        let day = NaiveDate::from_ymd_opt(2012, 3, 4).unwrap();
        let recs = parse_pubmed_articles(xml, day).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].id, "pmid:42");
        assert_eq!(recs[0].title, "A title");
        assert_eq!(recs[0].abstract_text, "One. Two.");
        assert_eq!(recs[0].doi.as_deref(), Some("10.5/x"));
        assert_eq!(recs[0].published, day);
    }
}
