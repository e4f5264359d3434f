use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use citescope_core::backtest::read_report_csv;
use citescope_core::corpus::load_corpus;
use citescope_core::predict::BIAS_WARNING;
use citescope_ingest::fixture::{standard_handler, ten_articles, FixtureServer};
use tempfile::TempDir;

fn citescope(args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_citescope"));
    for (k, _) in std::env::vars() {
        if k.starts_with("CITESCOPE_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).output().expect("run citescope")
}

fn ok(args: &[&str]) -> Output {
    let out = citescope(args);
    assert!(
        out.status.success(),
        "citescope {args:?} failed with {:?}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// The resolved config without its `out` line, which names the run's own directory.
fn resolved_without_out(dir: &Path) -> String {
    let text = fs::read_to_string(dir.join("config.resolved.toml")).unwrap();
    text.lines().filter(|l| !l.starts_with("out = ")).collect::<Vec<_>>().join("\n")
}

fn synth_store(dir: &Path, seed: &str) {
    ok(&["synth", "--out", p(dir), "--seed", seed, "--n-background", "1500", "--from", "2008-01", "--to", "2014-12"]);
}

fn ingest_args<'a>(url: &'a str, out: &'a str, work: &'a str) -> Vec<String> {
    [
        "ingest",
        "--source",
        "arxiv-cs",
        "--from",
        "2010-01",
        "--to",
        "2010-02",
        "--out",
        out,
        "--work",
        work,
        "--model-tag",
        "fixture-v1",
        "--request-delay-ms",
        "0",
        "--backoff-ms",
        "5",
        "--retries",
        "2",
        "--timeout-s",
        "5",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([
        format!("--arxiv-endpoint={url}/oai"),
        format!("--openalex-endpoint={url}/works"),
        format!("--embed-endpoint={url}/embed"),
    ])
    .collect()
}

#[test]
fn ingest_fixture_then_warm_rerun_without_network() {
    let tmp = TempDir::new().unwrap();
    let (out, work) = (tmp.path().join("store"), tmp.path().join("work"));
    let mut server = FixtureServer::start(standard_handler(ten_articles())).unwrap();
    let url = server.url().to_string();
    let args = ingest_args(&url, p(&out), p(&work));
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    ok(&argv);
    let corpus = load_corpus(&out).unwrap();
    assert_eq!(corpus.len(), 10);
    assert_eq!(corpus.articles().iter().filter(|a| !a.has_citation_data).count(), 1);
    assert!(out.join("config.resolved.toml").exists());
    let first = fs::read(out.join("meta.jsonl")).unwrap();

    server.shutdown();
    ok(&argv);
    assert_eq!(fs::read(out.join("meta.jsonl")).unwrap(), first);

    let mut offline = argv.clone();
    offline.push("--offline");
    ok(&offline);
}

#[test]
fn ingest_without_out_is_a_usage_error() {
    let out = citescope(&["ingest", "--source", "arxiv-cs", "--from", "2010-01", "--to", "2010-02"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic_and_loads() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--out", p(d), "--seed", "11", "--n-background", "300", "--n-clusters", "2", "--cluster-size", "20"]);
    }
    for f in ["vectors.lsc", "meta.jsonl", "corpus.json", "truth.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(resolved_without_out(&a), resolved_without_out(&b));
    let corpus = load_corpus(&a).unwrap();
    assert_eq!(corpus.len(), 340);

    let resolved = fs::read_to_string(a.join("config.resolved.toml")).unwrap();
    assert!(resolved.contains("seed = 11"), "{resolved}");

    let empty = tmp.path().join("empty");
    ok(&["synth", "--out", p(&empty), "--n-background", "50"]);
    let truth: serde_json::Value = serde_json::from_slice(&fs::read(empty.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["clusters"], serde_json::json!([]));
}

#[test]
fn synth_rejects_invalid_spec() {
    let tmp = TempDir::new().unwrap();
    let out = citescope(&["synth", "--out", p(&tmp.path().join("s")), "--dim", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn backtest_with_standard_parameters_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    synth_store(&store, "3");
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec![
            "backtest", "--store", p(&store), "--out", p(out), "--eps", "0.035", "--top-p", "15", "--horizon", "24",
            "--from", "2010-01", "--to", "2012-12", "--seed", "7",
        ];
        args.extend_from_slice(extra);
        ok(&args)
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a, &["--predictor", "baseline"]);
    run(&b, &["--predictor", "baseline"]);
    for f in ["report.csv", "summary.json", "roc.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(resolved_without_out(&a), resolved_without_out(&b));
    let rows = read_report_csv(a.join("report.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 36);
    assert!(rows.iter().all(|r| r.eps == 0.035 && r.top_p == 15.0 && r.predictor == "baseline"));
    let svg = fs::read_to_string(a.join("roc.svg")).unwrap();
    assert!(svg.contains("<circle") && svg.contains("#d62728") && svg.contains("log scale"));

    let c = tmp.path().join("c");
    let out = run(&c, &["--predictor", "baseline,baseline-top"]);
    let rows = read_report_csv(c.join("report.csv")).unwrap();
    assert!(rows
        .iter()
        .filter(|r| r.predictor == "baseline-top")
        .all(|r| r.warnings().contains(&BIAS_WARNING)));
    assert!(String::from_utf8_lossy(&out.stderr).contains("BIASED BASELINE"));
    let summary = fs::read_to_string(c.join("summary.json")).unwrap();
    assert!(summary.contains("BIASED BASELINE"));
    assert!(summary.contains("\"comparisons\": ["));
}

#[test]
fn backtest_usage_errors() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    synth_store(&store, "1");
    let out = tmp.path().join("o");
    let base = ["backtest", "--store", p(&store), "--out", p(&out)];
    let code = |extra: &[&str]| {
        let mut a = base.to_vec();
        a.extend_from_slice(extra);
        citescope(&a).status.code()
    };
    assert_eq!(code(&["--predictor", "file"]), Some(2));
    assert_eq!(code(&["--predictor", "oracle"]), Some(2));
    assert_eq!(code(&["--eps", "-1"]), Some(2));
    assert_eq!(code(&["--top-p", "0"]), Some(2));
    assert_eq!(code(&["--from", "2012-01", "--to", "2011-01"]), Some(2));
    assert_eq!(code(&["--scorer", "fuzzy"]), Some(2));
    assert_eq!(code(&["--no-such-flag"]), Some(2));
    // a valid range that the corpus cannot serve is a runtime error
    assert_eq!(code(&["--from", "2030-01", "--to", "2030-02"]), Some(1));
    let missing = citescope(&["backtest", "--store", p(&tmp.path().join("nope")), "--out", p(&out)]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn grid_range_shape_and_single_cell_consistency() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    synth_store(&store, "5");
    let common = ["--store", p(&store), "--from", "2010-01", "--to", "2010-06", "--seed", "2"];

    let g = tmp.path().join("g");
    let mut args = vec!["grid", "--out", p(&g), "--top-p", "1:20:1", "--eps", "0.02,0.035,0.075"];
    args.extend_from_slice(&common);
    ok(&args);
    let heat = fs::read_to_string(g.join("heat.csv")).unwrap();
    // header plus 60 cells for each scorer
    assert_eq!(heat.lines().count(), 1 + 2 * 60);
    let rows = read_report_csv(g.join("cells.csv")).unwrap();
    assert_eq!(rows.len(), 60 * 6 * 2);

    let (one, bt) = (tmp.path().join("one"), tmp.path().join("bt"));
    let mut args = vec!["grid", "--out", p(&one), "--top-p", "15", "--eps", "0.035"];
    args.extend_from_slice(&common);
    ok(&args);
    let mut args = vec!["backtest", "--out", p(&bt), "--top-p", "15", "--eps", "0.035"];
    args.extend_from_slice(&common);
    ok(&args);
    assert_eq!(fs::read(one.join("cells.csv")).unwrap(), fs::read(bt.join("report.csv")).unwrap());

    let empty = citescope(&["grid", "--out", p(&one), "--eps", "", "--store", p(&store)]);
    assert_eq!(empty.status.code(), Some(2));
}

#[test]
fn grid_with_a_failing_cell_exits_three() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    synth_store(&store, "8");
    let bad = tmp.path().join("bad.lscp");
    fs::write(&bad, "this is not a predictions file\n").unwrap();
    let out = tmp.path().join("g");
    let res = citescope(&[
        "grid", "--store", p(&store), "--out", p(&out), "--from", "2010-01", "--to", "2010-03", "--top-p", "10,15",
        "--eps", "0.035", "--predictor", "baseline,file", "--predictions", p(&bad),
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    let rows = read_report_csv(out.join("cells.csv")).unwrap();
    assert_eq!(rows.len(), 2 * 3 * 2);
    assert!(rows.iter().all(|r| r.predictor == "baseline"));
    let heat = fs::read_to_string(out.join("heat.csv")).unwrap();
    assert_eq!(heat.lines().filter(|l| l.contains("failed")).count(), 4);
}

#[test]
fn report_redraws_chart_from_csv() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    synth_store(&store, "4");
    let bt = tmp.path().join("bt");
    ok(&[
        "backtest", "--store", p(&store), "--out", p(&bt), "--from", "2010-01", "--to", "2011-12", "--predictor",
        "baseline,hotspot",
    ]);
    let r = tmp.path().join("r");
    ok(&["report", "--csv", p(&bt.join("report.csv")), "--out", p(&r)]);
    let svg = fs::read_to_string(r.join("roc.svg")).unwrap();
    assert!(svg.contains("baseline") && svg.contains("hotspot"));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(r.join("report-summary.json")).unwrap()).unwrap();
    assert_eq!(summary["series"].as_array().unwrap().len(), 2);
    assert_eq!(summary["series"][0]["n_months"], 24);

    let bogus = tmp.path().join("bogus.csv");
    fs::write(&bogus, "a,b\n1,2\n").unwrap();
    assert_eq!(citescope(&["report", "--csv", p(&bogus)]).status.code(), Some(1));
}

#[test]
fn config_file_fills_unset_flags_and_flags_win() {
    let tmp = TempDir::new().unwrap();
    let store = tmp.path().join("store");
    synth_store(&store, "6");
    let cfg = tmp.path().join("c.toml");
    fs::write(
        &cfg,
        format!(
            "seed = 99\n[backtest]\nstore = {:?}\nfrom = \"2010-01\"\nto = \"2010-04\"\neps = 0.05\n",
            p(&store)
        ),
    )
    .unwrap();
    let out = tmp.path().join("o");
    ok(&["backtest", "--config", p(&cfg), "--out", p(&out), "--eps", "0.04"]);
    let resolved: toml::Table = fs::read_to_string(out.join("config.resolved.toml")).unwrap().parse().unwrap();
    let bt = resolved["backtest"].as_table().unwrap();
    assert_eq!(bt["seed"].as_integer(), Some(99));
    assert_eq!(bt["eps"].as_float(), Some(0.04));
    assert_eq!(bt["to"].as_str(), Some("2010-04"));

    // the resolved file reproduces the run
    let again = tmp.path().join("again");
    ok(&["backtest", "--config", p(&out.join("config.resolved.toml")), "--out", p(&again)]);
    assert_eq!(fs::read(out.join("report.csv")).unwrap(), fs::read(again.join("report.csv")).unwrap());

    fs::write(&cfg, "[backtest]\nbogus = 1\n").unwrap();
    assert_eq!(citescope(&["backtest", "--config", p(&cfg), "--out", p(&out)]).status.code(), Some(2));
}

#[test]
fn help_lists_flags_and_unknown_flags_fail() {
    let out = ok(&["backtest", "--help"]);
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--store", "--out", "--eps", "--top-p", "--horizon", "--from", "--to", "--predictor", "--predictions", "--seed",
        "--n-ratio", "--jitter", "--hotspot-window", "--scorer", "--jobs", "--config",
    ] {
        assert!(help.contains(flag), "{flag} missing from help");
    }
    let top = String::from_utf8_lossy(&ok(&["--help"]).stdout).to_string();
    for sub in ["ingest", "synth", "backtest", "grid", "report"] {
        assert!(top.contains(sub));
    }
    assert_eq!(citescope(&["synth", "--out", "x", "--bogus"]).status.code(), Some(2));
    assert_eq!(citescope(&["frobnicate"]).status.code(), Some(2));
}
