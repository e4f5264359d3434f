use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Walk-forward backtests of latent-space predictions of highly cited research.
#[derive(Debug, Parser)]
#[command(name = "citescope", version, about)]
pub struct Cli {
    /// Worker threads for month and cell evaluation [default: available cores]
    #[arg(long, global = true, env = "CITESCOPE_JOBS")]
    pub jobs: Option<usize>,

    /// TOML file of defaults: top-level `key = value` pairs or
    /// `[<subcommand>]` tables, keys named like the long flags. Flags and
    /// CITESCOPE_* variables take precedence.
    #[arg(long, global = true, env = "CITESCOPE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Log more (repeat for debug output)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Harvest metadata, citation counts and embeddings into a store
    Ingest(IngestArgs),
    /// Generate a synthetic store with planted clusters
    Synth(SynthArgs),
    /// Run a monthly walk-forward backtest
    Backtest(BacktestArgs),
    /// Run backtests over a grid of top-P and eps values
    Grid(GridArgs),
    /// Summarize a report CSV and redraw its ROC chart
    Report(ReportArgs),
}

pub const SUBCOMMANDS: [&str; 5] = ["ingest", "synth", "backtest", "grid", "report"];

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    /// Sources: arxiv-cs, arxiv-physics, arxiv-math, pubmed (comma separated)
    #[arg(long, env = "CITESCOPE_SOURCE", value_delimiter = ',', required = true)]
    pub source: Vec<String>,
    /// First month to harvest (YYYY-MM)
    #[arg(long, env = "CITESCOPE_FROM")]
    pub from: String,
    /// Last month to harvest (YYYY-MM)
    #[arg(long, env = "CITESCOPE_TO")]
    pub to: String,
    /// Store directory to write
    #[arg(long, env = "CITESCOPE_OUT")]
    pub out: PathBuf,
    /// Directory for harvested metadata and caches [default: <out>.work]
    #[arg(long, env = "CITESCOPE_WORK")]
    pub work: Option<PathBuf>,
    /// Serve everything from the caches; fail on a miss
    #[arg(long, env = "CITESCOPE_OFFLINE")]
    pub offline: bool,
    /// Embedding provider endpoint (POST {model_tag, texts} -> {vectors})
    #[arg(long, env = "CITESCOPE_EMBED_ENDPOINT")]
    pub embed_endpoint: String,
    /// Model tag sent to the embedding provider
    #[arg(long, env = "CITESCOPE_MODEL_TAG")]
    pub model_tag: String,
    #[arg(long, env = "CITESCOPE_EMBED_BATCH", default_value_t = 64)]
    pub embed_batch: usize,
    /// Contact address for the OpenAlex polite pool
    #[arg(long, env = "CITESCOPE_MAILTO")]
    pub mailto: Option<String>,
    #[arg(long, env = "CITESCOPE_ARXIV_ENDPOINT", default_value = "https://export.arxiv.org/oai2")]
    pub arxiv_endpoint: String,
    #[arg(
        long,
        env = "CITESCOPE_EUTILS_ENDPOINT",
        default_value = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils"
    )]
    pub eutils_endpoint: String,
    #[arg(long, env = "CITESCOPE_EUTILS_API_KEY")]
    pub eutils_api_key: Option<String>,
    #[arg(long, env = "CITESCOPE_OPENALEX_ENDPOINT", default_value = "https://api.openalex.org/works")]
    pub openalex_endpoint: String,
    /// Concurrent OpenAlex requests
    #[arg(long, env = "CITESCOPE_CONCURRENCY", default_value_t = 4)]
    pub concurrency: usize,
    /// Pause after each uncached metadata request, in milliseconds
    #[arg(long, env = "CITESCOPE_REQUEST_DELAY_MS", default_value_t = 3000)]
    pub request_delay_ms: u64,
    /// Attempts per request before giving up
    #[arg(long, env = "CITESCOPE_RETRIES", default_value_t = 6)]
    pub retries: u32,
    /// First retry delay in milliseconds, doubled on each attempt
    #[arg(long, env = "CITESCOPE_BACKOFF_MS", default_value_t = 500)]
    pub backoff_ms: u64,
    #[arg(long, env = "CITESCOPE_TIMEOUT_S", default_value_t = 120)]
    pub timeout_s: u64,
    /// Distance for the store: euclidean-on-unit-norm or cosine
    #[arg(long, env = "CITESCOPE_METRIC", default_value = "euclidean-on-unit-norm")]
    pub metric: String,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// Store directory to write
    #[arg(long, env = "CITESCOPE_OUT")]
    pub out: PathBuf,
    #[arg(long, env = "CITESCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, env = "CITESCOPE_DIM", default_value_t = 3)]
    pub dim: usize,
    #[arg(long, env = "CITESCOPE_N_BACKGROUND", default_value_t = 2000)]
    pub n_background: usize,
    #[arg(long, env = "CITESCOPE_N_CLUSTERS", default_value_t = 0)]
    pub n_clusters: usize,
    #[arg(long, env = "CITESCOPE_CLUSTER_SIZE", default_value_t = 50)]
    pub cluster_size: usize,
    #[arg(long, env = "CITESCOPE_CLUSTER_RADIUS", default_value_t = 0.02)]
    pub cluster_radius: f64,
    /// Birth month of each cluster (YYYY-MM, comma separated); uniform over the span when omitted
    #[arg(long, env = "CITESCOPE_BIRTHS", value_delimiter = ',')]
    pub births: Vec<String>,
    /// Months over which a cluster's members appear
    #[arg(long, env = "CITESCOPE_CLUSTER_SPAN", default_value_t = 24)]
    pub cluster_span: u32,
    /// First month of the corpus (YYYY-MM)
    #[arg(long, env = "CITESCOPE_FROM", default_value = "2008-01")]
    pub from: String,
    /// Last month of the corpus (YYYY-MM)
    #[arg(long, env = "CITESCOPE_TO", default_value = "2016-12")]
    pub to: String,
    /// Pareto exponent of citation counts
    #[arg(long, env = "CITESCOPE_CITATION_LAW", default_value_t = 1.5)]
    pub citation_law: f64,
    /// Citation scale factor for cluster members
    #[arg(long, env = "CITESCOPE_BOOST", default_value_t = 5.0)]
    pub boost: f64,
    /// Share of articles without citation data
    #[arg(long, env = "CITESCOPE_MISSING_RATE", default_value_t = 0.0)]
    pub missing_rate: f64,
    #[arg(long, env = "CITESCOPE_METRIC", default_value = "euclidean-on-unit-norm")]
    pub metric: String,
}

/// Options shared by `backtest` and `grid`.
#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunArgs {
    /// Store directory to read
    #[arg(long, env = "CITESCOPE_STORE")]
    pub store: PathBuf,
    /// Output directory
    #[arg(long, env = "CITESCOPE_OUT")]
    pub out: PathBuf,
    /// First cutoff month (YYYY-MM)
    #[arg(long, env = "CITESCOPE_FROM", default_value = "2010-01")]
    pub from: String,
    /// Last cutoff month (YYYY-MM)
    #[arg(long, env = "CITESCOPE_TO", default_value = "2024-12")]
    pub to: String,
    /// Test window length in months
    #[arg(long, env = "CITESCOPE_HORIZON", default_value_t = 24)]
    pub horizon: u32,
    /// Predictors: baseline, baseline-top, hotspot, file (comma separated)
    #[arg(long, env = "CITESCOPE_PREDICTOR", value_delimiter = ',', default_value = "baseline")]
    pub predictor: Vec<String>,
    /// Predictions file or directory of <YYYY-MM>.lscp files for the `file` predictor
    #[arg(long, env = "CITESCOPE_PREDICTIONS")]
    pub predictions: Option<PathBuf>,
    #[arg(long, env = "CITESCOPE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Train articles per prediction
    #[arg(long, env = "CITESCOPE_N_RATIO", default_value_t = 100.0)]
    pub n_ratio: f64,
    /// Gaussian jitter added to baseline samples
    #[arg(long, env = "CITESCOPE_JITTER", default_value_t = 0.0)]
    pub jitter: f64,
    /// Months of recent growth the hotspot predictor looks at
    #[arg(long, env = "CITESCOPE_HOTSPOT_WINDOW", default_value_t = 12)]
    pub hotspot_window: u32,
    /// Neighbourhood radius of the hotspot predictor [default: the scoring eps]
    #[arg(long, env = "CITESCOPE_HOTSPOT_EPS")]
    pub hotspot_eps: Option<f64>,
    /// Scorer for fits, comparisons and the chart: cluster or naive
    #[arg(long, env = "CITESCOPE_SCORER", default_value = "cluster")]
    pub scorer: String,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct BacktestArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Ball radius in latent space
    #[arg(long, env = "CITESCOPE_EPS", default_value_t = 0.035)]
    pub eps: f64,
    /// Target percentile
    #[arg(long, env = "CITESCOPE_TOP_P", default_value_t = 15.0)]
    pub top_p: f64,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub run: RunArgs,
    /// Radii: a list `a,b,c` or a range `start:end:step`
    #[arg(long, env = "CITESCOPE_EPS", default_value = "0.02,0.035,0.075")]
    pub eps: String,
    /// Percentiles: a list or a range `start:end:step`
    #[arg(long, env = "CITESCOPE_TOP_P", default_value = "1:20:1")]
    pub top_p: String,
}

#[derive(Debug, Args, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Report CSV written by `backtest` or `grid`
    #[arg(long, env = "CITESCOPE_CSV")]
    pub csv: PathBuf,
    /// Directory for the redrawn chart and summary [default: next to the CSV]
    #[arg(long, env = "CITESCOPE_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, env = "CITESCOPE_SCORER", default_value = "cluster")]
    pub scorer: String,
}

/// Parses `a,b,c`, `start:end:step` (inclusive) or a single number.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err("empty grid".into());
    }
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, step] = parts[..] else {
            return Err(format!("range {spec:?} must be start:end:step"));
        };
        let (a, b, step) = (num(a)?, num(b)?, num(step)?);
        if !(step > 0.0) || b < a {
            return Err(format!("range {spec:?} needs start <= end and a positive step"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize + 1;
        // round away float drift such as 0.1 * 3 = 0.30000000000000004
        return Ok((0..n).map(|i| ((a + i as f64 * step) * 1e9).round() / 1e9).collect());
    }
    spec.split(',').map(num).collect()
}

/// Arguments a config file contributes, as `--key=value` pairs for keys
/// not already given on the command line or through the environment.
/// Top-level keys apply to every subcommand that has the flag; keys in a
/// `[<subcommand>]` table apply to that subcommand only. `accepts(sub, key)`
/// tells whether `sub` has the flag `--key`.
pub fn config_args(
    text: &str,
    subcommand: &str,
    argv: &[String],
    accepts: impl Fn(&str, &str) -> bool,
) -> Result<Vec<String>, String> {
    let table: toml::Table = text.parse().map_err(|e| format!("config: {e}"))?;
    let mut merged: Vec<(String, toml::Value)> = Vec::new();
    let mut put = |k: &str, v: &toml::Value| {
        merged.retain(|(key, _)| key != k);
        merged.push((k.to_string(), v.clone()));
    };
    for (k, v) in &table {
        if v.is_table() {
            if !SUBCOMMANDS.contains(&k.as_str()) {
                return Err(format!("config: unknown section [{k}]"));
            }
            continue;
        }
        if !SUBCOMMANDS.iter().any(|s| accepts(s, k)) {
            return Err(format!("config: unknown key {k:?}"));
        }
        if accepts(subcommand, k) {
            put(k, v);
        }
    }
    if let Some(toml::Value::Table(section)) = table.get(subcommand) {
        for (k, v) in section {
            put(k, v);
        }
    }
    let mut out = Vec::new();
    for (key, value) in merged {
        if key == "config" {
            continue;
        }
        let flag = format!("--{key}");
        let given = argv.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        let env = format!("CITESCOPE_{}", key.to_uppercase().replace('-', "_"));
        if given || std::env::var_os(&env).is_some() {
            continue;
        }
        let scalar = |v: &toml::Value| -> Result<String, String> {
            match v {
                toml::Value::String(s) => Ok(s.clone()),
                toml::Value::Integer(i) => Ok(i.to_string()),
                toml::Value::Float(f) => Ok(f.to_string()),
                toml::Value::Boolean(b) => Ok(b.to_string()),
                other => Err(format!("config key {key}: unsupported value {other}")),
            }
        };
        match &value {
            toml::Value::Boolean(true) => out.push(flag),
            toml::Value::Boolean(false) => {}
            toml::Value::Array(items) => {
                let joined = items.iter().map(scalar).collect::<Result<Vec<_>, _>>()?.join(",");
                out.push(format!("{flag}={joined}"));
            }
            v => out.push(format!("{flag}={}", scalar(v)?)),
        }
    }
    Ok(out)
}

/// Long flag names a subcommand accepts, globals included.
pub fn long_flags(subcommand: &str) -> Vec<String> {
    use clap::CommandFactory;
    let root = Cli::command();
    let mut names: Vec<String> = root.get_arguments().filter_map(|a| a.get_long().map(str::to_string)).collect();
    if let Some(sub) = root.find_subcommand(subcommand) {
        names.extend(sub.get_arguments().filter_map(|a| a.get_long().map(str::to_string)));
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1:20:1").unwrap().len(), 20);
        assert_eq!(parse_grid("0.02,0.035,0.075").unwrap(), vec![0.02, 0.035, 0.075]);
        assert_eq!(parse_grid("0.1:0.3:0.1").unwrap(), vec![0.1, 0.2, 0.3]);
        assert_eq!(parse_grid("15").unwrap(), vec![15.0]);
        assert!(parse_grid("").is_err());
        assert!(parse_grid("5:1:1").is_err());
        assert!(parse_grid("1:2").is_err());
        assert!(parse_grid("1,x").is_err());
    }

    #[test]
    fn config_values_fill_gaps_only() {
        let text = "seed = 3\neps = 0.5\n[backtest]\neps = 0.04\npredictor = [\"baseline\", \"hotspot\"]\n[grid]\neps = \"0.1,0.2\"\n";
        let argv: Vec<String> = ["citescope", "backtest", "--seed", "9"].iter().map(|s| s.to_string()).collect();
        let accepts = |sub: &str, key: &str| long_flags(sub).iter().any(|f| f == key);
        let extra = config_args(text, "backtest", &argv, accepts).unwrap();
        assert_eq!(extra, vec!["--eps=0.04", "--predictor=baseline,hotspot"]);
        let grid = config_args(text, "grid", &[], accepts).unwrap();
        assert!(grid.contains(&"--eps=0.1,0.2".to_string()));
        // seed is not an ingest flag, so the top-level value is left out
        assert!(config_args(text, "ingest", &[], accepts).unwrap().is_empty());
        assert!(config_args("eps = [", "grid", &[], accepts).is_err());
        assert!(config_args("bogus = 1", "grid", &[], accepts).is_err());
        assert!(config_args("[bogus]\neps = 1", "grid", &[], accepts).is_err());
    }
}
