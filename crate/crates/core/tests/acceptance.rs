//! One PASS / FAIL / SKIPPED line per acceptance criterion.
//!
//! Exits 0 unless `BAYAL_ACCEPTANCE_STRICT=1` is set, in which case any
//! FAIL makes the process exit 1. Dataset files are read from
//! `BAYAL_BUPA_PATH` and `BAYAL_WDBC_PATH`, falling back to the repository
//! `data/` directory.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bayal::cli::{self, ExperimentConfig, Method, Scenario, UnevenDesign};
use bayal::data::{load_dataset, DatasetFormat};
use bayal::eval::{LearningCurve, StudyResult};

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Skipped,
}

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, status: Status, detail: impl AsRef<str>) {
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => {
                self.failed += 1;
                "FAIL"
            }
            Status::Skipped => "SKIPPED",
        };
        println!("criterion {id:<3} {tag:<7} {}", detail.as_ref());
    }
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn curve<'a>(study: &'a StudyResult, method: &str) -> &'a LearningCurve {
    study.curves.iter().find(|c| c.method == method).expect("method present")
}

fn error_at(c: &LearningCurve, n: usize) -> f64 {
    c.at(n).map_or(f64::NAN, |p| p.mean_error)
}

fn data_path(env: &str, file: &str) -> PathBuf {
    std::env::var_os(env)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(file))
}

fn synthetic_comparison(report: &mut Report) {
    let t = Instant::now();
    let cfg = ExperimentConfig {
        scenario: Scenario::Synthetic,
        methods: vec![Method::Proposed, Method::Adsl],
        reps: 100,
        budget: 30,
        ..ExperimentConfig::default()
    };
    let (study, _, _) = cli::run_study(&cfg).expect("synthetic study");
    let secs = t.elapsed().as_secs_f64();
    let (prop, adsl) = (curve(&study, "proposed"), curve(&study, "adsl"));

    // 1: proposed <= ADSL for n >= 10, strictly lower on at least half of 5..=30.
    let worse: Vec<usize> = (10..=30).filter(|&n| error_at(prop, n) > error_at(adsl, n)).collect();
    let strictly = (5..=30).filter(|&n| error_at(prop, n) < error_at(adsl, n)).count();
    let detail = format!(
        "proposed > adsl at n={worse:?}; strictly lower at {strictly}/26 stages; n=30 {:.5} vs {:.5}; {secs:.1}s",
        error_at(prop, 30),
        error_at(adsl, 30)
    );
    report.line("1", status(worse.is_empty() && strictly >= 13), detail);

    // 2: smoothed proposed distance non-increasing over 5..=30, and stage 30
    // below stage 5 for both methods.
    let dist = |c: &LearningCurve, n: usize| c.at(n).and_then(|p| p.mean_dist).unwrap_or(f64::NAN);
    let raw: Vec<f64> = (5..=30).map(|n| dist(prop, n)).collect();
    let smooth: Vec<f64> = raw.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    let rises: Vec<usize> = smooth
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0])
        .map(|(k, _)| k + 7)
        .collect();
    let drop_prop = dist(prop, 30) < dist(prop, 5);
    let drop_adsl = dist(adsl, 30) < dist(adsl, 5);
    report.line(
        "2",
        status(rises.is_empty() && drop_prop && drop_adsl),
        format!(
            "smoothed rises centred at n={rises:?}; proposed {:.1}->{:.1}; adsl {:.1}->{:.1}",
            dist(prop, 5),
            dist(prop, 30),
            dist(adsl, 5),
            dist(adsl, 30)
        ),
    );

    // 7: k_n bound and variation over the proposed runs.
    let mut max_k = 0;
    let mut varies = false;
    for rep in &study.outcomes {
        if let Some(out) = &rep[0] {
            let ks: Vec<usize> = out.records.iter().map(|r| r.k_n).collect();
            max_k = max_k.max(ks.iter().copied().max().unwrap_or(0));
            varies |= ks.windows(2).any(|w| w[0] != w[1]);
        }
    }
    report.line(
        "7",
        status(max_k <= 12 && varies),
        format!("max k_n {max_k} (bound 12), varies within a replication: {varies}"),
    );
}

fn warm_start_effect(report: &mut Report) {
    let t = Instant::now();
    let base = ExperimentConfig {
        scenario: Scenario::Synthetic,
        points_per_level: 10,
        reps: 100,
        ..ExperimentConfig::default()
    };
    let mut at15 = Vec::new();
    let mut n0_20 = f64::NAN;
    for n0 in [5, 10, 15, 20] {
        let cfg = ExperimentConfig {
            methods: vec![Method::Proposed],
            n0,
            budget: 30 - n0,
            ..base.clone()
        };
        let (study, _, _) = cli::run_study(&cfg).expect("warm-start study");
        let c = curve(&study, "proposed");
        at15.push(error_at(c, 15.max(n0)));
        if n0 == 20 {
            n0_20 = error_at(c, 20).min(error_at(c, 21));
        }
    }
    let cfg = ExperimentConfig {
        methods: vec![Method::Adsl],
        n0: 0,
        budget: 30,
        ..base
    };
    let (study, _, _) = cli::run_study(&cfg).expect("adsl study");
    let adsl30 = error_at(curve(&study, "adsl"), 30);
    let decreasing = at15.windows(2).all(|w| w[1] < w[0]);
    let matches = n0_20 <= adsl30;
    report.line(
        "3",
        status(decreasing && matches),
        format!(
            "error at n=max(15,n0) for n0=5,10,15,20: {:.4} {:.4} {:.4} {:.4}; n0=20 best of n=20,21 {n0_20:.4} vs adsl n=30 {adsl30:.4}; {:.1}s",
            at15[0],
            at15[1],
            at15[2],
            at15[3],
            t.elapsed().as_secs_f64()
        ),
    );
}

fn uneven_groups(report: &mut Report) {
    let t = Instant::now();
    let base = ExperimentConfig {
        scenario: Scenario::Uneven,
        uneven_design: UnevenDesign::Levels,
        reps: 20,
        budget: 100,
        gamma: 0.8,
        ..ExperimentConfig::default()
    };
    let decoupled = ExperimentConfig {
        methods: vec![Method::Proposed],
        omega: 0.5,
        ..base.clone()
    };
    let coupled = ExperimentConfig {
        methods: vec![Method::Adsl, Method::Proposed],
        omega: 0.8,
        ..base
    };
    let (a, _, _) = cli::run_study(&decoupled).expect("decoupled study");
    let (b, _, _) = cli::run_study(&coupled).expect("coupled study");
    let e_dec = error_at(curve(&a, "proposed"), 100);
    let e_adsl = error_at(curve(&b, "adsl"), 100);
    let e_prop_coupled = error_at(curve(&b, "proposed"), 100);
    report.line(
        "4",
        status(e_dec < 0.045 && e_adsl > 0.035),
        format!(
            "n=100: proposed(0.5,0.8) {e_dec:.4} (< 0.04 +/- 0.005); adsl coupled 0.8 {e_adsl:.4} (> 0.04 +/- 0.005); proposed coupled {e_prop_coupled:.4}; {:.1}s",
            t.elapsed().as_secs_f64()
        ),
    );
}

fn real_data(report: &mut Report) {
    let bupa = data_path("BAYAL_BUPA_PATH", "bupa.data");
    match load_dataset(&bupa, DatasetFormat::Bupa) {
        Ok((pool, meta)) => report.line(
            "5a",
            status(pool.len() == 345 && meta.p == 6),
            format!("bupa n={} p={} positives={}", pool.len(), meta.p, meta.positives),
        ),
        Err(e) => report.line("5a", Status::Skipped, format!("bupa not available ({e})")),
    }

    let wdbc = data_path("BAYAL_WDBC_PATH", "wdbc.data");
    let Ok((pool, meta)) = load_dataset(&wdbc, DatasetFormat::Wdbc) else {
        report.line("5b", Status::Skipped, format!("wdbc not available at {}", wdbc.display()));
        report.line("5c", Status::Skipped, "wdbc not available");
        return;
    };
    report.line(
        "5b",
        status(pool.len() == 569 && meta.p == 30 && meta.positives == 212),
        format!("wdbc n={} p={} positives={}", pool.len(), meta.p, meta.positives),
    );

    let t = Instant::now();
    let base = ExperimentConfig {
        scenario: Scenario::Wdbc,
        wdbc_path: wdbc,
        reps: 20,
        ..ExperimentConfig::default()
    };
    let proposed = ExperimentConfig {
        methods: vec![Method::Proposed],
        n0: 30,
        budget: 60,
        ..base.clone()
    };
    let adsl = ExperimentConfig {
        methods: vec![Method::Adsl],
        n0: 0,
        budget: 150,
        ..base
    };
    let (a, _, _) = cli::run_study(&proposed).expect("wdbc proposed");
    let (b, _, _) = cli::run_study(&adsl).expect("wdbc adsl");
    let e90 = error_at(curve(&a, "proposed"), 90);
    let e150 = error_at(curve(&b, "adsl"), 150);
    report.line(
        "5c",
        status(e90 <= e150),
        format!(
            "wdbc proposed n0=30 at n=90 {e90:.4} vs adsl at n=150 {e150:.4} over 20 reps; {:.1}s",
            t.elapsed().as_secs_f64()
        ),
    );
}

fn property_suite(report: &mut Report) {
    let t = Instant::now();
    let checks = [
        ("fisher vs hessian", common::fisher_vs_hessian(40, 101)),
        ("gradient vs differences", common::gradient_vs_differences(40, 102)),
        ("importance weights", common::importance_weight_checks(103)),
        ("determinant monotonicity", common::determinant_monotonicity(100, 104)),
        ("adsl exhaustive", common::adsl_matches_exhaustive(200, 105)),
        ("determinism", common::end_to_end_determinism()),
    ];
    let phi = common::phi_one_dimensional(4000, 106);
    let phi_ok = (phi.estimate - phi.quadrature).abs() <= 2.0 * phi.standard_error;
    let mut all = phi_ok;
    let mut parts = Vec::new();
    for (name, c) in &checks {
        all &= c.passed;
        parts.push(format!("{name}: {} ({})", if c.passed { "ok" } else { "FAIL" }, c.detail));
    }
    parts.push(format!(
        "phi p=1: {} ({:.5} vs quadrature {:.5}, se {:.5})",
        if phi_ok { "ok" } else { "FAIL" },
        phi.estimate,
        phi.quadrature,
        phi.standard_error
    ));
    report.line("6", status(all), format!("{:.1}s", t.elapsed().as_secs_f64()));
    for p in parts {
        println!("              {p}");
    }
}

fn main() -> ExitCode {
    let mut report = Report { failed: 0 };
    synthetic_comparison(&mut report);
    warm_start_effect(&mut report);
    uneven_groups(&mut report);
    real_data(&mut report);
    property_suite(&mut report);
    println!("{} failing", report.failed);
    let strict = std::env::var("BAYAL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && report.failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
