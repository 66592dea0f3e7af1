//! Metrics, replication orchestration and learning-curve aggregation.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::baseline::{run_adsl, AdslConfig};
use crate::design::{run_active_learning, sub_seed, EngineConfig, Pool, RunOutcome};
use crate::inference::PriorSpec;
use crate::model::{boundary_distance, classify, logit, BetaVector, ClassifierRule, ModelError, ThetaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorScope {
    /// Every pool point, labeled or not.
    #[default]
    FullPool,
    /// Only points that are still unlabeled.
    Unlabeled,
}

/// `(gamma FP + (1 - gamma) FN) / N` over the whole pool.
pub fn misclassification_error(beta: &BetaVector, rule: &ClassifierRule, pool: &Pool) -> f64 {
    misclassification_error_on(beta, rule, pool, ErrorScope::FullPool)
}

pub fn misclassification_error_on(beta: &BetaVector, rule: &ClassifierRule, pool: &Pool, scope: ErrorScope) -> f64 {
    let (mut fp, mut fn_, mut n) = (0usize, 0usize, 0usize);
    for (i, (x, &y)) in pool.features().iter().zip(pool.true_labels()).enumerate() {
        if scope == ErrorScope::Unlabeled && pool.is_labeled(i) {
            continue;
        }
        n += 1;
        match (classify(beta.prob(x), rule), y) {
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    if n == 0 {
        return 0.0;
    }
    weighted_error(fp, fn_, n, rule.gamma())
}

pub fn weighted_error(fp: usize, fn_: usize, n: usize, gamma: f64) -> f64 {
    (gamma * fp as f64 + (1.0 - gamma) * fn_ as f64) / n as f64
}

pub const DEFAULT_GRID_POINTS: usize = 61;

/// Sum of squared perpendicular distances from the estimated level-`level`
/// boundary to `grid_points` points spread along the true boundary with
/// `x1` evenly spaced on `[-3, 3]`.
pub fn boundary_dist_metric(
    beta_hat: &BetaVector,
    theta_true: &ThetaParams,
    level: f64,
    grid_points: usize,
) -> Result<f64, ModelError> {
    let w = theta_true.weights();
    if w.len() != 2 || beta_hat.dim() != 2 {
        return Err(ModelError::DimensionMismatch {
            expected: 2,
            found: if w.len() != 2 { w.len() } else { beta_hat.dim() },
        });
    }
    if w[1] == 0.0 {
        return Err(ModelError::DegenerateBoundary);
    }
    let offset = theta_true.mu() + theta_true.sigma() * logit(level);
    let mut total = 0.0;
    for i in 0..grid_points {
        let x1 = if grid_points == 1 {
            0.0
        } else {
            -3.0 + 6.0 * i as f64 / (grid_points - 1) as f64
        };
        let x2 = (offset - w[0] * x1) / w[1];
        total += boundary_distance(beta_hat, level, &[x1, x2])?.powi(2);
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub enum MethodKind {
    Proposed(EngineConfig),
    Adsl(AdslConfig),
}

#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: String,
    pub kind: MethodKind,
    /// Used for the error metric and, for the proposed engine, the
    /// uncertainty level.
    pub rule: ClassifierRule,
    pub n0: usize,
    pub budget: usize,
}

/// One replication's inputs, shared by every method.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub pool: Pool,
    pub prior: PriorSpec,
    /// Known truth for the boundary metric (synthetic scenarios).
    pub theta_true: Option<ThetaParams>,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub scope: ErrorScope,
    pub grid_points: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            scope: ErrorScope::FullPool,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// One row of the per-replication table. Stage 0 is the warm-start
/// estimate; rows after an early stop repeat the final estimate and have no
/// `k_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub method: String,
    pub replication: usize,
    pub stage: usize,
    pub n_labeled: usize,
    pub error: f64,
    pub dist: Option<f64>,
    pub k_n: Option<usize>,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n_labeled: usize,
    pub mean_error: f64,
    pub mean_dist: Option<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningCurve {
    pub method: String,
    pub stages: Vec<CurvePoint>,
    pub excluded: usize,
}

impl LearningCurve {
    pub fn at(&self, n_labeled: usize) -> Option<&CurvePoint> {
        self.stages.iter().find(|s| s.n_labeled == n_labeled)
    }
}

#[derive(Debug, Clone)]
pub struct Exclusion {
    pub method: String,
    pub replication: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub rows: Vec<ReplicationRow>,
    pub curves: Vec<LearningCurve>,
    pub exclusions: Vec<Exclusion>,
    /// Raw outcomes in `[replication][method]` order, `None` when excluded.
    pub outcomes: Vec<Vec<Option<RunOutcome>>>,
}

/// Seed of replication `r` derived from a study seed.
pub fn replication_seed(study_seed: u64, r: usize) -> u64 {
    sub_seed(study_seed, 0x5EED_0000 + r as u64)
}

/// Runs every method on every replication.
///
/// `make` builds the pool and prior for a replication seed. All methods see
/// a copy of the same pool and the same run seed, hence the same warm start
/// when their `n0` agree.
pub fn run_replications<E: std::fmt::Display>(
    make: impl Fn(u64) -> Result<Replicate, E>,
    methods: &[MethodSpec],
    seeds: &[u64],
    options: &EvalOptions,
) -> Result<StudyResult, E> {
    let mut rows = Vec::new();
    let mut exclusions = Vec::new();
    let mut outcomes = Vec::with_capacity(seeds.len());
    for (r, &seed) in seeds.iter().enumerate() {
        let rep = make(seed)?;
        let mut per_method = Vec::with_capacity(methods.len());
        for method in methods {
            let mut pool = rep.pool.reset();
            let result = match &method.kind {
                MethodKind::Proposed(cfg) => {
                    run_active_learning(&mut pool, &rep.prior, &method.rule, method.budget, method.n0, cfg, seed)
                }
                MethodKind::Adsl(cfg) => run_adsl(&mut pool, &rep.prior, cfg, method.budget, method.n0, seed),
            };
            match result {
                Ok(outcome) => {
                    rows.extend(outcome_rows(method, r, &outcome, &rep, &pool, options));
                    per_method.push(Some(outcome));
                }
                Err(e) => {
                    exclusions.push(Exclusion {
                        method: method.name.clone(),
                        replication: r,
                        reason: e.to_string(),
                    });
                    per_method.push(None);
                }
            }
        }
        outcomes.push(per_method);
    }
    let names: Vec<String> = methods.iter().map(|m| m.name.clone()).collect();
    let curves = curves_from_rows(&rows, &names, &exclusions);
    Ok(StudyResult {
        rows,
        curves,
        exclusions,
        outcomes,
    })
}

fn outcome_rows(
    method: &MethodSpec,
    replication: usize,
    outcome: &RunOutcome,
    rep: &Replicate,
    final_pool: &Pool,
    options: &EvalOptions,
) -> Vec<ReplicationRow> {
    // Unlabeled-only errors need the labeled set as it stood at each stage.
    let order = final_pool.labeled_idx();
    let metric = |beta: &BetaVector, n_labeled: usize| -> (f64, Option<f64>) {
        let error = match options.scope {
            ErrorScope::FullPool => misclassification_error(beta, &method.rule, &rep.pool),
            ErrorScope::Unlabeled => {
                let mut snapshot = rep.pool.reset();
                for &i in &order[..n_labeled.min(order.len())] {
                    snapshot.query(i).expect("indices come from a valid run");
                }
                misclassification_error_on(beta, &method.rule, &snapshot, ErrorScope::Unlabeled)
            }
        };
        let dist = rep
            .theta_true
            .as_ref()
            .and_then(|t| boundary_dist_metric(beta, t, method.rule.gamma(), options.grid_points).ok());
        (error, dist)
    };
    let row = |stage, n_labeled, beta: &BetaVector, k_n, fallback_used| {
        let (error, dist) = metric(beta, n_labeled);
        ReplicationRow {
            method: method.name.clone(),
            replication,
            stage,
            n_labeled,
            error,
            dist,
            k_n,
            fallback_used,
        }
    };

    let mut rows = vec![row(0, method.n0, &outcome.initial_estimate, None, false)];
    for rec in &outcome.records {
        rows.push(row(rec.stage, rec.n_labeled, &rec.estimate, Some(rec.k_n), rec.fallback_used));
    }
    let last = outcome
        .records
        .last()
        .map_or(&outcome.initial_estimate, |r| &r.estimate);
    let last_labeled = outcome.records.last().map_or(method.n0, |r| r.n_labeled);
    for stage in outcome.records.len() + 1..=method.budget {
        let (error, dist) = metric(last, last_labeled);
        rows.push(ReplicationRow {
            method: method.name.clone(),
            replication,
            stage,
            n_labeled: method.n0 + stage,
            error,
            dist,
            k_n: None,
            fallback_used: false,
        });
    }
    rows
}

/// Pointwise means over replications, one curve per method name in the
/// given order. Sums run in row order.
pub fn curves_from_rows(rows: &[ReplicationRow], methods: &[String], exclusions: &[Exclusion]) -> Vec<LearningCurve> {
    methods
        .iter()
        .map(|name| {
            let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| &r.method == name).collect();
            let max_stage = mine.iter().map(|r| r.stage).max();
            let mut stages = Vec::new();
            if let Some(max_stage) = max_stage {
                for stage in 0..=max_stage {
                    let at: Vec<&&ReplicationRow> = mine.iter().filter(|r| r.stage == stage).collect();
                    if at.is_empty() {
                        continue;
                    }
                    let k = at.len() as f64;
                    let mean_error = at.iter().map(|r| r.error).sum::<f64>() / k;
                    let mean_dist = if at.iter().all(|r| r.dist.is_some()) {
                        Some(at.iter().map(|r| r.dist.unwrap_or(0.0)).sum::<f64>() / k)
                    } else {
                        None
                    };
                    stages.push(CurvePoint {
                        n_labeled: at[0].n_labeled,
                        mean_error,
                        mean_dist,
                        replications: at.len(),
                    });
                }
            }
            LearningCurve {
                method: name.clone(),
                stages,
                excluded: exclusions.iter().filter(|e| &e.method == name).count(),
            }
        })
        .collect()
}

/// Decimal rendering with 12 significant digits.
pub fn fmt_sig(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { format!("{v}") };
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-6..=15).contains(&exp) {
        return format!("{v:.11e}");
    }
    let decimals = (11 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub const REPLICATION_HEADER: &str = "method,replication,stage,n_labeled,error,dist,k_n,fallback_used";
pub const CURVE_HEADER: &str = "method,n_labeled,mean_error,mean_dist,replications,excluded";

/// Values are written in shortest round-trip form, so parsing them back
/// recovers the exact doubles.
pub fn replications_csv(rows: &[ReplicationRow]) -> String {
    let mut out = String::from(REPLICATION_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            r.replication,
            r.stage,
            r.n_labeled,
            r.error,
            r.dist.map(|d| d.to_string()).unwrap_or_default(),
            r.k_n.map(|k| k.to_string()).unwrap_or_default(),
            u8::from(r.fallback_used)
        )
        .expect("writing to a String");
    }
    out
}

pub fn curves_csv(curves: &[LearningCurve]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for c in curves {
        for s in &c.stages {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                c.method,
                s.n_labeled,
                s.mean_error,
                s.mean_dist.map(|d| d.to_string()).unwrap_or_default(),
                s.replications,
                c.excluded
            )
            .expect("writing to a String");
        }
    }
    out
}

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing or unexpected header")]
    Header,
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn parse_replications_csv(text: &str) -> Result<Vec<ReplicationRow>, CsvError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(REPLICATION_HEADER) {
        return Err(CsvError::Header);
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line_no = k + 2;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CsvError::Parse { line: line_no, message };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("{s:?}: {e}")));
        let real = |s: &str| s.parse::<f64>().map_err(|e| err(format!("{s:?}: {e}")));
        rows.push(ReplicationRow {
            method: f[0].to_string(),
            replication: int(f[1])?,
            stage: int(f[2])?,
            n_labeled: int(f[3])?,
            error: real(f[4])?,
            dist: if f[5].is_empty() { None } else { Some(real(f[5])?) },
            k_n: if f[6].is_empty() { None } else { Some(int(f[6])?) },
            fallback_used: f[7] == "1",
        });
    }
    Ok(rows)
}

pub fn read_replications_csv(path: &Path) -> Result<Vec<ReplicationRow>, CsvError> {
    parse_replications_csv(&fs::read_to_string(path)?)
}
