use std::sync::atomic::{AtomicUsize, Ordering};

use chrono::NaiveDate;
use citescope_core::backtest::{
    compare, grid_search, read_report_csv, run_backtest, run_backtest_with, run_month, write_report_csv,
    BacktestParams,
};
use citescope_core::corpus::{synth_corpus, GroundTruth, SynthSpec, TrainView};
use citescope_core::predict::{
    write_predictions, PredictContext, Predictor, PredictorConfig, PredictorKind, BIAS_WARNING,
};
use citescope_core::scoring::{PredictionSet, ScoringMethod, ScoringParams};
use citescope_core::spatial::distance;
use citescope_core::{Article, Corpus, Error, MetricKind, Source, YearMonth};

fn ym(y: i32, m: u32) -> YearMonth {
    YearMonth::new(y, m).unwrap()
}

fn params(from: YearMonth, to: YearMonth, kind: PredictorKind) -> BacktestParams {
    BacktestParams {
        cutoff_start: from,
        cutoff_end: to,
        scoring: ScoringParams::default(),
        predictor: PredictorConfig::with_kind(kind),
        seed: 7,
    }
}

fn uniform(seed: u64, n: usize) -> Corpus {
    synth_corpus(&SynthSpec {
        dim: 3,
        n_background: n,
        n_clusters: 0,
        start: ym(2008, 1),
        end: ym(2016, 12),
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
}

#[test]
fn months_without_citation_data_have_no_targets() {
    let c = uniform(1, 800);
    let arts = c
        .articles()
        .iter()
        .cloned()
        .map(|mut a| {
            a.has_citation_data = a.published < NaiveDate::from_ymd_opt(2012, 1, 1).unwrap();
            a
        })
        .collect();
    let c = Corpus::new(3, MetricKind::EuclideanOnUnitNorm, arts, "").unwrap();
    let p = BacktestParams {
        scoring: ScoringParams {
            horizon_months: 12,
            ..ScoringParams::default()
        },
        ..params(ym(2013, 1), ym(2013, 1), PredictorKind::Baseline)
    };
    let m = run_month(&c, ym(2013, 1), &p).unwrap();
    assert_eq!(m.n_targets, 0);
    assert_eq!(m.metrics_naive.tpr, None);
    assert_eq!(m.metrics_cluster.tpr, None);
    assert!(m.n_test > 0);
}

/// Scores a month by hand, straight from the definitions.
fn oracle_labels(test: &[Article], targets: &[bool], preds: &[Vec<f32>], eps: f64) -> [(u64, u64, u64, u64); 2] {
    let n = test.len();
    let d = |a: &[f32], b: &[f32]| distance(a, b, MetricKind::EuclideanOnUnitNorm).unwrap();
    let in_ball = |p: &Vec<f32>, i: usize| d(p, &test[i].coords) <= eps;
    let covered: Vec<bool> = (0..n).map(|i| preds.iter().any(|p| in_ball(p, i))).collect();
    let mut naive = (0, 0, 0, 0);
    let mut cluster = (0, 0, 0, 0);
    for i in 0..n {
        match (covered[i], targets[i]) {
            (true, true) => naive.0 += 1,
            (true, false) => naive.1 += 1,
            (false, true) => naive.2 += 1,
            (false, false) => naive.3 += 1,
        }
        let shares_ball_with_older_target = preds.iter().any(|p| {
            in_ball(p, i) && (0..n).any(|t| targets[t] && in_ball(p, t) && test[t].published < test[i].published)
        });
        let near_older_uncovered_target = (0..n).any(|t| {
            targets[t] && !covered[t] && d(&test[t].coords, &test[i].coords) <= eps && test[t].published < test[i].published
        });
        match (covered[i], targets[i]) {
            (true, true) => cluster.0 += 1,
            (true, false) if shares_ball_with_older_target => cluster.0 += 1,
            (true, false) => cluster.1 += 1,
            (false, true) => cluster.2 += 1,
            (false, false) if near_older_uncovered_target => cluster.2 += 1,
            (false, false) => cluster.3 += 1,
        }
    }
    [naive, cluster]
}

#[test]
fn file_predictions_at_true_centers_match_hand_scoring() {
    let spec = SynthSpec {
        dim: 3,
        n_background: 24,
        n_clusters: 1,
        cluster_size: 20,
        cluster_radius: 0.03,
        cluster_birth_months: vec![ym(2014, 3)],
        cluster_span_months: 12,
        start: ym(2012, 1),
        end: ym(2016, 12),
        seed: 5,
        ..SynthSpec::default()
    };
    let c = synth_corpus(&spec).unwrap();
    assert!(c.len() <= 50);
    let truth = GroundTruth::from_provenance(c.provenance()).unwrap();
    let cutoff = ym(2014, 1);

    let dir = tempfile::tempdir().unwrap();
    let mut set = PredictionSet::new(cutoff, "truth");
    set.coords = truth.clusters.iter().map(|k| k.center.clone()).collect();
    write_predictions(&set, 3, dir.path().join("2014-01.lscp")).unwrap();

    let mut p = params(cutoff, cutoff, PredictorKind::FromFile(dir.path().to_path_buf()));
    p.scoring.eps = 0.08;
    let m = run_month(&c, cutoff, &p).unwrap();

    let split = c.split_at(cutoff, 24).unwrap();
    let test = split.test.articles();
    // sort-based target oracle per month
    let mut targets = vec![false; test.len()];
    let mut months: Vec<YearMonth> = test.iter().map(|a| a.month()).collect();
    months.dedup();
    for month in months {
        let mut ranked: Vec<usize> = (0..test.len())
            .filter(|&i| test[i].month() == month && test[i].has_citation_data)
            .collect();
        ranked.sort_by(|&a, &b| test[b].citations.cmp(&test[a].citations).then(test[a].id.cmp(&test[b].id)));
        let k = (0.15 * ranked.len() as f64).ceil() as usize;
        for &i in &ranked[..k] {
            targets[i] = true;
        }
    }
    let [naive, cluster] = oracle_labels(test, &targets, &set.coords, 0.08);
    let c_n = &m.counts_naive;
    let c_c = &m.counts_cluster;
    assert_eq!((c_n.tp, c_n.fp, c_n.fn_, c_n.tn), naive);
    assert_eq!((c_c.tp, c_c.fp, c_c.fn_, c_c.tn), cluster);
    assert_eq!(m.n_targets, targets.iter().filter(|&&t| t).count());
    assert_eq!(m.n_predictions, 1);
    assert!(c_n.tp + c_n.fp > 0, "the true center covers part of the cluster");
}

#[test]
fn month_results_are_deterministic() {
    let c = uniform(2, 1500);
    let mut p = params(ym(2012, 1), ym(2012, 1), PredictorKind::Hotspot);
    p.predictor.n_ratio = 50.0;
    let a = serde_json::to_vec(&run_month(&c, ym(2012, 1), &p).unwrap()).unwrap();
    let b = serde_json::to_vec(&run_month(&c, ym(2012, 1), &p).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cutoff_counting_and_skips() {
    let c = uniform(3, 1200);
    let r = run_backtest(&c, &params(ym(2012, 1), ym(2012, 3), PredictorKind::Baseline)).unwrap();
    assert_eq!(r.months.len(), 3);
    assert!(r.skipped.is_empty());
    assert_eq!(r.summary.n_months, 3);

    // the last two windows run past 2016-12
    let r = run_backtest(&c, &params(ym(2015, 1), ym(2015, 3), PredictorKind::Baseline)).unwrap();
    assert_eq!(r.months.len(), 1);
    assert_eq!(r.skipped.len(), 2);
    assert_eq!(r.skipped[0].cutoff, ym(2015, 2));

    let err = run_backtest(&c, &params(ym(2016, 1), ym(2016, 3), PredictorKind::Baseline)).unwrap_err();
    assert!(matches!(err, Error::NoValidCutoffs));

    let bad = params(ym(2013, 3), ym(2013, 1), PredictorKind::Baseline);
    assert!(run_backtest(&c, &bad).is_err());
}

#[test]
fn months_are_independent_of_processing_order() {
    let c = uniform(4, 1500);
    let p = params(ym(2011, 1), ym(2012, 6), PredictorKind::Baseline);
    let r = run_backtest(&c, &p).unwrap();
    let mut cutoffs = p.cutoffs();
    cutoffs.reverse();
    let mut singles: Vec<_> = cutoffs.iter().map(|&t| run_month(&c, t, &p).unwrap()).collect();
    singles.reverse();
    assert_eq!(r.months, singles);

    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = pool.install(|| run_backtest(&c, &p)).unwrap();
    assert_eq!(serial, r);
}

#[test]
fn later_articles_do_not_change_a_month() {
    let c = uniform(5, 1500);
    let cutoff = ym(2012, 1);
    let mut p = params(cutoff, cutoff, PredictorKind::Hotspot);
    p.scoring.horizon_months = 12;
    let full = run_month(&c, cutoff, &p).unwrap();
    let horizon_end = cutoff.add_months(12).first_day();
    let early: Vec<Article> = c.articles().iter().filter(|a| a.published < horizon_end).cloned().collect();
    let mut shuffled: Vec<Article> = early.clone();
    let mut extra: Vec<Article> = (0..300)
        .map(|i| Article {
            id: format!("late{i:04}"),
            coords: vec![0.3, 0.4, 0.5 + i as f32 * 0.001],
            published: NaiveDate::from_ymd_opt(2016, 6, 1).unwrap(),
            citations: 10_000,
            source: Source::Synthetic,
            has_citation_data: true,
        })
        .collect();
    shuffled.append(&mut extra);
    let with_future = Corpus::new(3, MetricKind::EuclideanOnUnitNorm, shuffled, "").unwrap();
    let trimmed = Corpus::new(3, MetricKind::EuclideanOnUnitNorm, early, "").unwrap();
    assert_eq!(run_month(&with_future, cutoff, &p).unwrap(), full);
    // the trimmed corpus ends inside the window's last month, so compare directly
    let split = trimmed.split_at(cutoff, 12).unwrap();
    assert_eq!(split.test.len(), full.n_test);
}

#[test]
fn single_cell_grid_equals_direct_run() {
    let c = uniform(6, 1500);
    let p = params(ym(2011, 1), ym(2011, 12), PredictorKind::Baseline);
    let direct = run_backtest(&c, &p).unwrap();
    let grid = grid_search(&c, &p, &[15.0], &[0.035], &[p.predictor.clone()]).unwrap();
    assert_eq!(grid.cells.len(), 1);
    assert_eq!(grid.cells[0].outcome.as_ref().unwrap(), &direct);
}

#[test]
fn grid_cell_count_and_shared_indexes() {
    let c = uniform(7, 1500);
    let p = params(ym(2011, 1), ym(2011, 6), PredictorKind::Baseline);
    let preds = [
        PredictorConfig::with_kind(PredictorKind::Baseline),
        PredictorConfig::with_kind(PredictorKind::Hotspot),
    ];
    let g = grid_search(&c, &p, &[5.0, 15.0], &[0.02, 0.035, 0.075], &preds).unwrap();
    assert_eq!(g.cells.len(), 12);
    assert_eq!(g.failed_cells(), 0);
    assert_eq!(g.cutoff_stats.len(), 6);
    for s in &g.cutoff_stats {
        assert!(s.test_index_builds <= 1 && s.train_index_builds <= 1, "{s:?}");
        assert_eq!(s.test_index_builds, 1);
    }
    assert!(grid_search(&c, &p, &[], &[0.02], &preds).is_err());
}

#[test]
fn failing_cell_does_not_abort_others() {
    let c = uniform(8, 1200);
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("2011-01.lscp"), "#lscp v1 dim=3 cutoff=2011-01 tag=x\n1 2\n").unwrap();
    let p = params(ym(2011, 1), ym(2011, 2), PredictorKind::Baseline);
    let preds = [
        PredictorConfig::with_kind(PredictorKind::Baseline),
        PredictorConfig::with_kind(PredictorKind::FromFile(dir.path().to_path_buf())),
    ];
    let g = grid_search(&c, &p, &[15.0], &[0.035], &preds).unwrap();
    assert_eq!(g.failed_cells(), 1);
    assert!(g.cells[0].outcome.is_ok());
    let err = g.cells[1].outcome.as_ref().unwrap_err();
    assert!(err.contains("2011-01"), "{err}");
}

#[test]
fn cluster_precision_falls_once_eps_exceeds_cluster_radius() {
    // structure at small scale: many tight clusters of highly cited work
    // over a dense, mostly uncited background
    let radius = 0.01;
    let births: Vec<YearMonth> = (0..40).map(|i| ym(2012, 1).add_months(i % 24)).collect();
    let c = synth_corpus(&SynthSpec {
        dim: 3,
        n_background: 6000,
        n_clusters: 40,
        cluster_size: 25,
        cluster_radius: radius,
        cluster_birth_months: births,
        cluster_span_months: 6,
        boost_in_clusters: 20.0,
        start: ym(2008, 1),
        end: ym(2016, 12),
        seed: 11,
        ..SynthSpec::default()
    })
    .unwrap();
    let truth = GroundTruth::from_provenance(c.provenance()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cutoffs: Vec<YearMonth> = ym(2012, 1).through(ym(2012, 6)).collect();
    for &t in &cutoffs {
        let mut set = PredictionSet::new(t, "truth");
        set.coords = truth.born_within(t, 24).map(|k| k.center.clone()).collect();
        write_predictions(&set, 3, dir.path().join(format!("{t}.lscp"))).unwrap();
    }
    let p = params(ym(2012, 1), ym(2012, 6), PredictorKind::FromFile(dir.path().to_path_buf()));
    let eps_grid = [0.01, 0.02, 0.05, 0.1, 0.2];
    let g = grid_search(&c, &p, &[15.0], &eps_grid, &[p.predictor.clone()]).unwrap();
    let prec: Vec<f64> = g
        .cells
        .iter()
        .map(|cell| cell.outcome.as_ref().unwrap().summary.mean_cluster.precision.unwrap())
        .collect();
    assert!(prec[3] < prec[1] && prec[4] < prec[3], "{prec:?}");
}

#[test]
fn comparing_a_report_with_itself() {
    let c = uniform(9, 2000);
    let r = run_backtest(&c, &params(ym(2010, 1), ym(2012, 12), PredictorKind::Baseline)).unwrap();
    let cmp = compare(&r, &r, ScoringMethod::ClusterAware).unwrap();
    assert!(cmp.deltas.iter().all(|d| d.d_fpr.unwrap_or(0.0) == 0.0 && d.d_tpr.unwrap_or(0.0) == 0.0));
    if let Some(u) = &cmp.uplift_at_median {
        if let Some(v) = u.uplift {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
    assert!(cmp.uplift_table.iter().filter_map(|u| u.uplift).all(|v| (v - 1.0).abs() < 1e-12));

    let shorter = run_backtest(&c, &params(ym(2010, 1), ym(2012, 6), PredictorKind::Baseline)).unwrap();
    assert!(matches!(compare(&r, &shorter, ScoringMethod::Naive), Err(Error::Incomparable(_))));
    let mut other = params(ym(2010, 1), ym(2012, 12), PredictorKind::Baseline);
    other.scoring.eps = 0.05;
    let other = run_backtest(&c, &other).unwrap();
    assert!(compare(&r, &other, ScoringMethod::Naive).is_err());
}

#[test]
fn baseline_against_reseeded_baseline_has_no_systematic_uplift() {
    let c = uniform(10, 4000);
    let mut above = 0;
    let mut defined = 0;
    for seed in 0..20u64 {
        let mut a = params(ym(2010, 1), ym(2013, 12), PredictorKind::Baseline);
        a.seed = 1000 + seed;
        a.predictor.n_ratio = 20.0;
        let mut b = a.clone();
        b.seed = 2000 + seed;
        let ra = run_backtest(&c, &a).unwrap();
        let rb = run_backtest(&c, &b).unwrap();
        let cmp = compare(&ra, &rb, ScoringMethod::Naive).unwrap();
        if let Some(u) = cmp.uplift_at_median.and_then(|u| u.uplift) {
            defined += 1;
            if u > 1.0 {
                above += 1;
            }
        }
    }
    // two-sided sign test at roughly the 0.5% level
    assert!(defined >= 15, "{defined}");
    let lo = defined / 2 - defined / 3;
    assert!(above >= lo && above <= defined - lo, "{above} of {defined} above 1");
}

struct Taint<'p> {
    inner: Box<dyn Predictor>,
    reads: &'p AtomicUsize,
}

impl Predictor for Taint<'_> {
    fn tag(&self) -> String {
        self.inner.tag()
    }

    fn predict(&self, train: &TrainView<'_>, ctx: &PredictContext) -> citescope_core::Result<PredictionSet> {
        let future_start = train.cutoff().first_day();
        let tainted = train
            .articles()
            .iter()
            .filter(|a| a.published >= future_start || a.id.starts_with("SENTINEL"))
            .count();
        let index = train.index();
        let index_tainted = (0..index.len())
            .filter(|&i| train.articles()[i].published >= future_start)
            .count();
        self.reads.fetch_add(tainted + index_tainted, Ordering::Relaxed);
        assert_eq!(index.len(), train.len());
        self.inner.predict(train, ctx)
    }
}

#[test]
fn predictors_never_see_the_future() {
    let base = uniform(12, 2000);
    let cutoff = ym(2012, 1);
    // flag the first cutoff's test window and move it to an isolated region
    let window_end = cutoff.add_months(24).first_day();
    let arts: Vec<Article> = base
        .articles()
        .iter()
        .cloned()
        .map(|mut a| {
            if a.published >= cutoff.first_day() && a.published < window_end {
                a.id = format!("SENTINEL-{}", a.id);
                a.coords = vec![0.0, 0.0, -1.0];
                a.coords[0] = (a.citations % 7) as f32 * 1e-3;
            }
            a
        })
        .collect();
    let c = Corpus::new(3, MetricKind::EuclideanOnUnitNorm, arts, "").unwrap();

    let reads = AtomicUsize::new(0);
    for kind in [PredictorKind::Baseline, PredictorKind::BaselineTrend, PredictorKind::Hotspot] {
        let p = params(ym(2010, 1), cutoff, kind.clone());
        let taint = Taint {
            inner: p.predictor.build().unwrap(),
            reads: &reads,
        };
        let r = run_backtest_with(&c, &p, &taint).unwrap();
        assert_eq!(r.months.len(), 25);
    }
    assert_eq!(reads.load(Ordering::Relaxed), 0);
}

#[test]
fn report_csv_round_trips_and_marks_bias() {
    let c = uniform(13, 1500);
    let p = params(ym(2011, 1), ym(2011, 4), PredictorKind::BaselineTrend);
    let r = run_backtest(&c, &p).unwrap();
    assert!(r.summary.warnings.iter().any(|w| w == BIAS_WARNING));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let mut buf = Vec::new();
    write_report_csv(&[&r], &mut buf).unwrap();
    std::fs::write(&path, &buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with(
        "cutoff,predictor,scorer,eps,top_p,n_train,n_test,n_targets,n_predictions,tp,fp,fn,tn,tpr,fpr,precision,recall,f1,mcc,accuracy,amplification,warnings\n"
    ));
    let rows = read_report_csv(&path).unwrap();
    assert_eq!(rows.len(), 8);
    assert_eq!(rows[0].eps, 0.035);
    assert_eq!(rows[0].top_p, 15.0);
    assert!(rows.iter().all(|row| row.warnings().contains(&BIAS_WARNING)));
    assert_eq!(rows[1].scorer, "cluster");
    assert_eq!(rows[1].tp, r.months[0].counts_cluster.tp);
}
