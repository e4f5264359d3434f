use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use citescope_core::backtest::{
    compare, grid_search, read_report_csv, roc_points, run_backtest, write_heat_csv, write_report_csv,
    write_summary_json, BacktestParams, BacktestReport, Comparison, ReportRow, SummaryDoc,
};
use citescope_core::corpus::{load_corpus, store_write, synth_corpus, GroundTruth, SynthSpec};
use citescope_core::metrics::{log_fit, uplift_at, LogFit};
use citescope_core::predict::{HotspotParams, PredictorConfig, PredictorKind};
use citescope_core::scoring::{ScoringMethod, ScoringParams};
use citescope_core::{MetricKind, Source, YearMonth};
use citescope_ingest::{EmbedConfig, HarvestConfig, IngestPlan, Mode, OpenAlexConfig, RetryPolicy};
use log::{info, warn};
use serde::Serialize;

use crate::args::{parse_grid, BacktestArgs, GridArgs, IngestArgs, ReportArgs, RunArgs, SynthArgs};
use crate::svg::{roc_svg, Series};

/// A bad flag value or combination; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Some grid cells failed; exits with status 3.
#[derive(Debug)]
pub struct PartialFailure(pub usize);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} grid cell(s) failed", self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn month(flag: &str, v: &str) -> Result<YearMonth> {
    v.parse().map_err(|e| usage(format!("--{flag} {v:?}: {e}")))
}

fn metric(v: &str) -> Result<MetricKind> {
    v.parse().map_err(|e| usage(format!("--metric: {e}")))
}

fn scorer(v: &str) -> Result<ScoringMethod> {
    match v {
        "cluster" | "cluster-aware" => Ok(ScoringMethod::ClusterAware),
        "naive" => Ok(ScoringMethod::Naive),
        other => Err(usage(format!("--scorer must be cluster or naive, got {other:?}"))),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn buffered(path: &Path) -> Result<BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// Records the resolved settings of a run, seed included, as a config
/// file that reproduces it.
pub fn write_resolved<T: Serialize>(dir: &Path, command: &str, jobs: usize, args: &T) -> Result<()> {
    let mut root = toml::Table::new();
    root.insert("jobs".into(), toml::Value::Integer(jobs as i64));
    root.insert(command.into(), toml::Value::try_from(args).context("serializing resolved config")?);
    let text = toml::to_string(&root).context("serializing resolved config")?;
    info!("resolved config:\n{text}");
    write(&dir.join("config.resolved.toml"), text)
}

pub fn ingest(a: &IngestArgs, jobs: usize) -> Result<()> {
    let sources = a
        .source
        .iter()
        .map(|s| s.parse::<Source>().map_err(|e| usage(format!("--source: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if sources.contains(&Source::Synthetic) {
        return Err(usage("--source synthetic is produced by `citescope synth`, not ingest"));
    }
    let (from, to) = (month("from", &a.from)?, month("to", &a.to)?);
    if to < from {
        return Err(usage(format!("--to {to} precedes --from {from}")));
    }
    let work_dir = a.work.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".work");
        PathBuf::from(p)
    });
    let plan = IngestPlan {
        sources,
        from,
        to,
        work_dir,
        out: a.out.clone(),
        metric: metric(&a.metric)?,
        mode: if a.offline { Mode::Offline } else { Mode::Live },
        retry: RetryPolicy {
            max_attempts: a.retries.max(1),
            base_delay: Duration::from_millis(a.backoff_ms),
            ..RetryPolicy::default()
        },
        timeout: Duration::from_secs(a.timeout_s),
        harvest: HarvestConfig {
            arxiv_endpoint: a.arxiv_endpoint.clone(),
            eutils_endpoint: a.eutils_endpoint.clone(),
            eutils_api_key: a.eutils_api_key.clone(),
            request_delay: Duration::from_millis(a.request_delay_ms),
            ..HarvestConfig::default()
        },
        openalex: OpenAlexConfig {
            endpoint: a.openalex_endpoint.clone(),
            mailto: a.mailto.clone(),
            concurrency: a.concurrency.max(1),
            ..OpenAlexConfig::default()
        },
        embed: EmbedConfig {
            endpoint: a.embed_endpoint.clone(),
            model_tag: a.model_tag.clone(),
            batch_size: a.embed_batch.max(1),
        },
    };
    let report = citescope_ingest::run_ingest(&plan)?;
    for f in &report.failed_months {
        warn!("month not harvested: {f}");
    }
    write_resolved(&a.out, "ingest", jobs, a)?;
    info!(
        "{} records, {} citation counts found, {} missing, {} embedding calls, {} network calls",
        report.records, report.citations_found, report.citations_missing, report.embedding_calls, report.network_calls
    );
    println!(
        "store {}: {} articles (dim {}), {} without citation data, {} dropped without embedding",
        a.out.display(),
        report.store.written,
        report.store.dim,
        report.store.without_citations,
        report.store.dropped_no_embedding
    );
    if !report.failed_months.is_empty() {
        bail!("{} month(s) failed to harvest; rerun to resume", report.failed_months.len());
    }
    Ok(())
}

/// Births spread evenly over the months in which a whole cluster span fits.
fn default_births(from: YearMonth, to: YearMonth, span: u32, n: usize) -> Vec<YearMonth> {
    let room = (from.months_until(to) + 1 - span as i64).max(1);
    (0..n)
        .map(|i| from.add_months(((i as f64 + 0.5) * room as f64 / n as f64).floor() as i64))
        .collect()
}

pub fn synth(a: &SynthArgs, jobs: usize) -> Result<()> {
    let (start, end) = (month("from", &a.from)?, month("to", &a.to)?);
    let births = if a.births.is_empty() {
        default_births(start, end, a.cluster_span, a.n_clusters)
    } else {
        a.births.iter().map(|b| month("births", b)).collect::<Result<_>>()?
    };
    let spec = SynthSpec {
        dim: a.dim,
        n_background: a.n_background,
        n_clusters: a.n_clusters,
        cluster_size: a.cluster_size,
        cluster_radius: a.cluster_radius,
        cluster_birth_months: births,
        cluster_span_months: a.cluster_span,
        start,
        end,
        citation_law: a.citation_law,
        boost_in_clusters: a.boost,
        missing_citation_rate: a.missing_rate,
        metric: metric(&a.metric)?,
        seed: a.seed,
    };
    let corpus = synth_corpus(&spec).map_err(|e| usage(e.to_string()))?;
    store_write(&corpus, &a.out)?;
    let truth = GroundTruth::from_provenance(corpus.provenance()).context("synthetic corpus lacks ground truth")?;
    let mut text = serde_json::to_string_pretty(&truth)?;
    text.push('\n');
    write(&a.out.join("truth.json"), text)?;
    write_resolved(&a.out, "synth", jobs, a)?;
    println!("store {}: {} articles, {} planted clusters", a.out.display(), corpus.len(), truth.clusters.len());
    Ok(())
}

fn predictor_configs(r: &RunArgs) -> Result<Vec<PredictorConfig>> {
    if r.predictor.is_empty() {
        return Err(usage("--predictor needs at least one name"));
    }
    let mut out: Vec<PredictorConfig> = Vec::new();
    for name in &r.predictor {
        let kind = match name.as_str() {
            "baseline" => PredictorKind::Baseline,
            "baseline-top" => PredictorKind::BaselineTrend,
            "hotspot" => PredictorKind::Hotspot,
            "file" => match &r.predictions {
                Some(p) => PredictorKind::FromFile(p.clone()),
                None => return Err(usage("--predictor file requires --predictions")),
            },
            other => {
                return Err(usage(format!(
                    "unknown predictor {other:?}; expected baseline, baseline-top, hotspot or file"
                )))
            }
        };
        if out.iter().any(|c| c.kind == kind) {
            return Err(usage(format!("predictor {name} listed twice")));
        }
        out.push(PredictorConfig {
            kind,
            n_ratio: r.n_ratio,
            jitter_sigma: r.jitter,
            top_p_for_trend: None,
            hotspot: HotspotParams {
                eps: r.hotspot_eps,
                recent_window_months: r.hotspot_window,
                n_keep: None,
            },
        });
    }
    if r.predictions.is_some() && !r.predictor.iter().any(|p| p == "file") {
        warn!("--predictions is ignored without --predictor file");
    }
    Ok(out)
}

fn base_params(r: &RunArgs, eps: f64, top_p: f64) -> Result<BacktestParams> {
    let params = BacktestParams {
        cutoff_start: month("from", &r.from)?,
        cutoff_end: month("to", &r.to)?,
        scoring: ScoringParams {
            eps,
            top_p,
            horizon_months: r.horizon,
            method: scorer(&r.scorer)?,
        },
        predictor: PredictorConfig::default(),
        seed: r.seed,
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    Ok(params)
}

/// Compares every non-baseline report against the baseline report with
/// the same eps and top-P.
fn comparisons(reports: &[&BacktestReport], method: ScoringMethod) -> Result<Vec<Comparison>> {
    let mut out = Vec::new();
    for alg in reports.iter().filter(|r| r.params.predictor.kind != PredictorKind::Baseline) {
        let base = reports.iter().find(|b| {
            b.params.predictor.kind == PredictorKind::Baseline
                && b.params.scoring.eps == alg.params.scoring.eps
                && b.params.scoring.top_p == alg.params.scoring.top_p
        });
        if let Some(base) = base {
            out.push(compare(alg, base, method)?);
        }
    }
    Ok(out)
}

fn report_warnings(doc: &SummaryDoc) {
    for w in &doc.warnings {
        eprintln!("warning: {w}");
    }
}

fn chart_title(method: ScoringMethod, eps: f64, top_p: f64, horizon: u32) -> String {
    format!("ROC by month ({} scoring, eps = {eps}, top-{top_p}%, {horizon}-month horizon)", method.as_str())
}

pub fn backtest(a: &BacktestArgs, jobs: usize) -> Result<()> {
    let configs = predictor_configs(&a.run)?;
    let base = base_params(&a.run, a.eps, a.top_p)?;
    let method = base.scoring.method;
    let corpus = load_corpus(&a.run.store).with_context(|| format!("loading store {}", a.run.store.display()))?;
    let mut reports = Vec::new();
    for config in configs {
        let params = BacktestParams {
            predictor: config,
            ..base.clone()
        };
        reports.push(run_backtest(&corpus, &params)?);
    }
    let refs: Vec<&BacktestReport> = reports.iter().collect();

    create_dir(&a.run.out)?;
    let mut csv = Vec::new();
    write_report_csv(&refs, &mut csv)?;
    write(&a.run.out.join("report.csv"), csv)?;

    let doc = SummaryDoc::new(&refs, comparisons(&refs, method)?);
    write_summary_json(&doc, buffered(&a.run.out.join("summary.json"))?)?;

    let series: Vec<Series> = reports
        .iter()
        .map(|r| Series {
            label: r.predictor_tag.clone(),
            points: roc_points(&r.months, method),
            fit: r.summary.fit(method).copied(),
        })
        .collect();
    let title = chart_title(method, a.eps, a.top_p, a.run.horizon);
    write(&a.run.out.join("roc.svg"), roc_svg(&title, &series))?;
    write_resolved(&a.run.out, "backtest", jobs, a)?;

    for r in &reports {
        for s in &r.skipped {
            info!("{}: skipped {}: {}", r.predictor_tag, s.cutoff, s.reason);
        }
        let fit = r
            .summary
            .fit(method)
            .map(|f| format!("tpr = {:.4} ln(fpr) + {:.4}", f.a, f.b))
            .unwrap_or_else(|| "no fit".into());
        println!("{}: {} months scored, {} skipped, {fit}", r.predictor_tag, r.months.len(), r.skipped.len());
    }
    report_warnings(&doc);
    Ok(())
}

pub fn grid(a: &GridArgs, jobs: usize) -> Result<()> {
    let configs = predictor_configs(&a.run)?;
    let eps = parse_grid(&a.eps).map_err(|e| usage(format!("--eps: {e}")))?;
    let top_p = parse_grid(&a.top_p).map_err(|e| usage(format!("--top-p: {e}")))?;
    let base = base_params(&a.run, eps[0], top_p[0])?;
    let method = base.scoring.method;
    let corpus = load_corpus(&a.run.store).with_context(|| format!("loading store {}", a.run.store.display()))?;
    let result = grid_search(&corpus, &base, &top_p, &eps, &configs)?;

    create_dir(&a.run.out)?;
    let ok: Vec<&BacktestReport> = result.cells.iter().filter_map(|c| c.outcome.as_ref().ok()).collect();
    let mut csv = Vec::new();
    write_report_csv(&ok, &mut csv)?;
    write(&a.run.out.join("cells.csv"), csv)?;
    let mut heat = Vec::new();
    write_heat_csv(&result, &mut heat)?;
    write(&a.run.out.join("heat.csv"), heat)?;
    let doc = SummaryDoc::new(&ok, comparisons(&ok, method)?);
    write_summary_json(&doc, buffered(&a.run.out.join("summary.json"))?)?;
    write_resolved(&a.run.out, "grid", jobs, a)?;

    println!(
        "{} cells over {} cutoffs: {} ok, {} failed",
        result.cells.len(),
        result.cutoff_stats.len(),
        ok.len(),
        result.failed_cells()
    );
    for c in result.cells.iter() {
        if let Err(e) = &c.outcome {
            eprintln!("cell {} top_p={} eps={} failed: {e}", c.predictor, c.top_p, c.eps);
        }
    }
    report_warnings(&doc);
    match result.failed_cells() {
        0 => Ok(()),
        n => Err(PartialFailure(n).into()),
    }
}

#[derive(Debug, Serialize)]
struct RowMeans {
    tpr: Option<f64>,
    fpr: Option<f64>,
    precision: Option<f64>,
    accuracy: Option<f64>,
    f1: Option<f64>,
    mcc: Option<f64>,
    amplification: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SeriesSummary {
    predictor: String,
    eps: f64,
    top_p: f64,
    n_months: usize,
    fit: Option<LogFit>,
    mean: RowMeans,
    /// Uplift over the baseline series at the baseline's median positive FPR.
    uplift_at_median_baseline_fpr: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CsvSummary {
    source: String,
    scorer: &'static str,
    series: Vec<SeriesSummary>,
    warnings: Vec<String>,
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = rows.filter_map(|x| *x).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median_positive(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = v.flatten().filter(|x| *x > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

pub fn report(a: &ReportArgs, jobs: usize) -> Result<()> {
    let method = scorer(&a.scorer)?;
    let rows = read_report_csv(&a.csv).with_context(|| format!("reading {}", a.csv.display()))?;
    let out = match &a.out {
        Some(o) => o.clone(),
        None => a.csv.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let mut groups: Vec<((String, f64, f64), Vec<&ReportRow>)> = Vec::new();
    for r in rows.iter().filter(|r| r.scorer == method.as_str()) {
        let key = (r.predictor.clone(), r.eps, r.top_p);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    if groups.is_empty() {
        bail!("{} has no {} rows", a.csv.display(), method.as_str());
    }

    let fits: Vec<Option<LogFit>> = groups
        .iter()
        .map(|(_, g)| log_fit(&g.iter().map(|r| (r.fpr, r.tpr)).collect::<Vec<_>>()))
        .collect();
    let mixed_cells = groups.iter().any(|((_, e, t), _)| (*e, *t) != (groups[0].0 .1, groups[0].0 .2));
    let mut series = Vec::new();
    let mut chart = Vec::new();
    for (i, ((predictor, eps, top_p), g)) in groups.iter().enumerate() {
        let baseline = groups
            .iter()
            .position(|((p, e, t), _)| p == "baseline" && e == eps && t == top_p)
            .filter(|&b| b != i);
        let uplift = baseline.and_then(|b| {
            let x = median_positive(groups[b].1.iter().map(|r| r.fpr))?;
            uplift_at(fits[i].as_ref()?, fits[b].as_ref()?, x).ok()
        });
        series.push(SeriesSummary {
            predictor: predictor.clone(),
            eps: *eps,
            top_p: *top_p,
            n_months: g.len(),
            fit: fits[i],
            mean: RowMeans {
                tpr: mean_of(g.iter().map(|r| &r.tpr)),
                fpr: mean_of(g.iter().map(|r| &r.fpr)),
                precision: mean_of(g.iter().map(|r| &r.precision)),
                accuracy: mean_of(g.iter().map(|r| &r.accuracy)),
                f1: mean_of(g.iter().map(|r| &r.f1)),
                mcc: mean_of(g.iter().map(|r| &r.mcc)),
                amplification: mean_of(g.iter().map(|r| &r.amplification)),
            },
            uplift_at_median_baseline_fpr: uplift,
        });
        let label = if mixed_cells {
            format!("{predictor} eps={eps} top-{top_p}%")
        } else {
            predictor.clone()
        };
        chart.push(Series {
            label,
            points: g.iter().map(|r| (r.fpr, r.tpr)).collect(),
            fit: fits[i],
        });
    }
    let mut warnings: Vec<String> = rows.iter().flat_map(|r| r.warnings()).map(str::to_string).collect();
    warnings.sort();
    warnings.dedup();

    create_dir(&out)?;
    let summary = CsvSummary {
        source: a.csv.display().to_string(),
        scorer: method.as_str(),
        series,
        warnings,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write(&out.join("report-summary.json"), text)?;
    let title = format!("ROC by month ({} scoring)", method.as_str());
    write(&out.join("roc.svg"), roc_svg(&title, &chart))?;
    write_resolved(&out, "report", jobs, a)?;
    for s in &summary.series {
        println!(
            "{} eps={} top_p={}: {} months, fit {}",
            s.predictor,
            s.eps,
            s.top_p,
            s.n_months,
            s.fit.map(|f| format!("{:.4} ln(fpr) + {:.4}", f.a, f.b)).unwrap_or_else(|| "none".into())
        );
    }
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
