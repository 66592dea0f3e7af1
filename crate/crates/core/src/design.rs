//! The selection engine: uncertainty ranking, D-efficiency screening of the
//! candidate set, Bayesian D-optimal choice among candidates, and the
//! sequential learning loop that ties them together.
//!
//! One stage of [`run_active_learning`] does the following:
//!
//! 1. Estimate θ by MAP on the labeled points (prior median when none).
//! 2. Stop if every unlabeled point is classified with certainty.
//! 3. If the estimate is uninformative (all probabilities near one end, a
//!    collapsed scale, or a failed optimizer), query the point nearest the
//!    estimated boundary instead.
//! 4. Otherwise rank unlabeled points by `|F̂(x) - omega|`, keep the top
//!    `k_n` ([`candidate_set`]) and query the one maximizing the
//!    importance-weighted expected log-determinant ([`select_next`]).

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::inference::{
    importance_weights, map_fit, prior_median, sample_prior, Criterion, InferenceError, LabeledSet,
    MapSettings, PriorSamplePool, PriorSpec,
};
use crate::linalg;
use crate::model::{
    augmented, boundary_distance, fisher_information, logistic_variance, theta_to_beta, BetaVector,
    ClassifierRule, ModelError, ThetaParams,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error("no unlabeled points remain")]
    EmptyPool,
    #[error("pool index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("pool index {0} is already labeled")]
    AlreadyLabeled(usize),
    #[error("pool is invalid: {0}")]
    InvalidPool(String),
    #[error("n0 + budget = {requested} exceeds the pool size {available}")]
    BudgetTooLarge { requested: usize, available: usize },
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("design degenerate: every candidate yields a singular information matrix")]
    DesignDegenerate,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Features, hidden labels, and the labeled/unlabeled partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    features: Vec<Vec<f64>>,
    true_labels: Vec<u8>,
    labeled: Vec<bool>,
    labeled_idx: Vec<usize>,
    initial_idx: Vec<usize>,
}

impl Pool {
    pub fn new(features: Vec<Vec<f64>>, true_labels: Vec<u8>) -> Result<Self, DesignError> {
        if features.is_empty() {
            return Err(DesignError::InvalidPool("no points".into()));
        }
        if features.len() != true_labels.len() {
            return Err(DesignError::InvalidPool(format!(
                "{} feature rows but {} labels",
                features.len(),
                true_labels.len()
            )));
        }
        let p = features[0].len();
        if p == 0 {
            return Err(DesignError::InvalidPool("zero features".into()));
        }
        if let Some(i) = features.iter().position(|r| r.len() != p) {
            return Err(DesignError::InvalidPool(format!("row {i} has a different width")));
        }
        if let Some(i) = true_labels.iter().position(|y| *y > 1) {
            return Err(DesignError::InvalidPool(format!("label of row {i} is not 0/1")));
        }
        let n = features.len();
        Ok(Self {
            features,
            true_labels,
            labeled: vec![false; n],
            labeled_idx: Vec::new(),
            initial_idx: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Feature dimension `p`.
    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn feature(&self, idx: usize) -> &[f64] {
        &self.features[idx]
    }

    pub fn true_labels(&self) -> &[u8] {
        &self.true_labels
    }

    pub fn labeled_idx(&self) -> &[usize] {
        &self.labeled_idx
    }

    pub fn initial_idx(&self) -> &[usize] {
        &self.initial_idx
    }

    pub fn is_labeled(&self, idx: usize) -> bool {
        self.labeled[idx]
    }

    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.labeled[i]).collect()
    }

    pub fn n_unlabeled(&self) -> usize {
        self.len() - self.labeled_idx.len()
    }

    /// Reveals the label of `idx` and moves it to the labeled set.
    pub fn query(&mut self, idx: usize) -> Result<u8, DesignError> {
        if idx >= self.len() {
            return Err(DesignError::IndexOutOfRange(idx));
        }
        if self.labeled[idx] {
            return Err(DesignError::AlreadyLabeled(idx));
        }
        self.labeled[idx] = true;
        self.labeled_idx.push(idx);
        Ok(self.true_labels[idx])
    }

    /// Labels `n0` points drawn uniformly without replacement.
    pub fn warm_start(&mut self, n0: usize, seed: u64) -> Result<(), DesignError> {
        if n0 > self.n_unlabeled() {
            return Err(DesignError::BudgetTooLarge {
                requested: n0,
                available: self.n_unlabeled(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unlabeled = self.unlabeled();
        let picks = rand::seq::index::sample(&mut rng, unlabeled.len(), n0);
        for k in picks.iter() {
            let idx = unlabeled[k];
            self.query(idx)?;
            self.initial_idx.push(idx);
        }
        Ok(())
    }

    /// Labeled points in query order.
    pub fn labeled_set(&self) -> LabeledSet {
        let rows = self
            .labeled_idx
            .iter()
            .map(|&i| (self.features[i].clone(), self.true_labels[i]))
            .collect();
        LabeledSet::from_rows(rows).expect("pool rows are validated on construction")
    }

    /// The same points with every label hidden again.
    pub fn reset(&self) -> Self {
        Self {
            features: self.features.clone(),
            true_labels: self.true_labels.clone(),
            labeled: vec![false; self.len()],
            labeled_idx: Vec::new(),
            initial_idx: Vec::new(),
        }
    }
}

/// `|F̂(x) - omega|` for each unlabeled point, in pool order.
pub fn uncertainty_scores(beta: &BetaVector, pool: &Pool, omega: f64) -> Vec<(usize, f64)> {
    pool.unlabeled()
        .into_iter()
        .map(|i| (i, (beta.prob(pool.feature(i)) - omega).abs()))
        .collect()
}

/// Screened candidates, most uncertain first.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
    pub k_n: usize,
}

impl Candidates {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub const DEFAULT_EFFICIENCY_THRESHOLD: f64 = 0.8;

/// Default candidate cap: four times the number of model parameters.
pub fn default_k_cap(p: usize) -> usize {
    4 * (p + 1)
}

/// Top-`k_n` unlabeled points by uncertainty, with `k_n` chosen by relative
/// local D-efficiency against the top-`k_cap` set.
pub fn candidate_set(beta: &BetaVector, pool: &Pool, omega: f64, k_cap: usize) -> Result<Candidates, DesignError> {
    candidate_set_with(beta, pool, omega, k_cap, DEFAULT_EFFICIENCY_THRESHOLD)
}

pub fn candidate_set_with(
    beta: &BetaVector,
    pool: &Pool,
    omega: f64,
    k_cap: usize,
    threshold: f64,
) -> Result<Candidates, DesignError> {
    if beta.dim() != pool.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: pool.dim(),
            found: beta.dim(),
        }
        .into());
    }
    let mut ranked = uncertainty_scores(beta, pool, omega);
    if ranked.is_empty() {
        return Err(DesignError::EmptyPool);
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let q = beta.dim() + 1;
    let cap = k_cap.max(1).min(ranked.len());
    let k_n = if ranked.len() <= q {
        ranked.len()
    } else {
        efficient_size(beta, pool, &ranked[..cap], q, threshold)
    };
    ranked.truncate(k_n);
    Ok(Candidates {
        indices: ranked.iter().map(|r| r.0).collect(),
        scores: ranked.iter().map(|r| r.1).collect(),
        k_n,
    })
}

/// Smallest `k ≥ q` whose top-k set reaches `threshold` relative D-efficiency
/// against the full `top` set; `top.len()` when none does.
fn efficient_size(beta: &BetaVector, pool: &Pool, top: &[(usize, f64)], q: usize, threshold: f64) -> usize {
    let cap = top.len();
    if cap <= q {
        return cap;
    }
    let mut prefix = vec![0.0; q * q];
    let mut prefix_logdets = Vec::with_capacity(cap);
    for &(idx, _) in top {
        let x = pool.feature(idx);
        linalg::add_outer(&mut prefix, q, logistic_variance(beta.linear_predictor(x)), &augmented(x));
        prefix_logdets.push(linalg::logdet_psd(&prefix, q));
    }
    let Some(full) = prefix_logdets[cap - 1] else {
        return cap;
    };
    for k in q..cap {
        if let Some(ld) = prefix_logdets[k - 1] {
            if ((ld - full) / q as f64).exp() >= threshold {
                return k;
            }
        }
    }
    cap
}

/// Evaluates `Σ_u r_u logdet(I_u(base) + I_u(x))` for many single-point
/// additions `x`, factoring each base matrix once.
///
/// When the unweighted base design has full rank, prior draws whose weighted
/// base information still fails the pivot rule (very steep draws whose
/// Fisher weights underflow at most rows) are left out and the remaining
/// weights renormalized, so every candidate is scored on the same draws.
pub struct CriterionEvaluator<'a> {
    pool: &'a PriorSamplePool,
    dim: usize,
    terms: Vec<BaseTerm>,
    excluded: usize,
}

enum BaseTerm {
    /// Cholesky factor and log-determinant of a nonsingular base.
    Factored { index: usize, weight: f64, factor: Vec<f64>, logdet: f64 },
    /// Raw base matrix, singular on its own.
    Singular { index: usize, weight: f64, matrix: Vec<f64> },
}

impl<'a> CriterionEvaluator<'a> {
    pub fn new<R: AsRef<[f64]>>(pool: &'a PriorSamplePool, base: &[R]) -> Self {
        let dim = pool.dim() + 1;
        let xs: Vec<Vec<f64>> = base.iter().map(|r| augmented(r.as_ref())).collect();
        let mut design = vec![0.0; dim * dim];
        for xt in &xs {
            linalg::add_outer(&mut design, dim, 1.0, xt);
        }
        let full_rank = linalg::logdet_psd(&design, dim).is_some();

        let mut terms = Vec::new();
        let mut excluded = 0;
        for (index, (beta, &r)) in pool.samples().iter().zip(pool.weights()).enumerate() {
            if r == 0.0 {
                continue;
            }
            let mut matrix = vec![0.0; dim * dim];
            for xt in &xs {
                linalg::add_outer(&mut matrix, dim, logistic_variance(beta.linear_predictor(&xt[1..])), xt);
            }
            let mut factor = matrix.clone();
            match linalg::cholesky_logdet(&mut factor, dim) {
                Some(logdet) => terms.push(BaseTerm::Factored {
                    index,
                    weight: r,
                    factor,
                    logdet,
                }),
                None if full_rank => excluded += 1,
                None => terms.push(BaseTerm::Singular { index, weight: r, matrix }),
            }
        }
        if excluded > 0 {
            let total: f64 = terms.iter().map(BaseTerm::weight).sum();
            for t in &mut terms {
                t.rescale(1.0 / total);
            }
        }
        Self {
            pool,
            dim,
            terms,
            excluded,
        }
    }

    /// Prior draws left out because of numerical singularity.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    /// Criterion over the base rows plus `x`.
    pub fn with_point(&self, x: &[f64]) -> Criterion {
        if self.terms.is_empty() {
            return Criterion::Singular;
        }
        let xt = augmented(x);
        let mut work = vec![0.0; self.dim];
        let mut scratch = Vec::new();
        let mut total = 0.0;
        for term in &self.terms {
            let (weight, logdet) = match term {
                BaseTerm::Factored {
                    index,
                    weight,
                    factor,
                    logdet,
                } => {
                    let v = logistic_variance(self.pool.samples()[*index].linear_predictor(x));
                    work.copy_from_slice(&xt);
                    let q = linalg::forward_solve_norm2(factor, self.dim, &mut work);
                    // matrix determinant lemma
                    (*weight, logdet + (v * q).ln_1p())
                }
                BaseTerm::Singular { index, weight, matrix } => {
                    let v = logistic_variance(self.pool.samples()[*index].linear_predictor(x));
                    scratch.clear();
                    scratch.extend_from_slice(matrix);
                    linalg::add_outer(&mut scratch, self.dim, v, &xt);
                    match linalg::cholesky_logdet(&mut scratch, self.dim) {
                        Some(ld) => (*weight, ld),
                        None => return Criterion::Singular,
                    }
                }
            };
            total += weight * logdet;
        }
        Criterion::Finite(total)
    }
}

impl BaseTerm {
    fn weight(&self) -> f64 {
        match self {
            BaseTerm::Factored { weight, .. } | BaseTerm::Singular { weight, .. } => *weight,
        }
    }

    fn rescale(&mut self, by: f64) {
        match self {
            BaseTerm::Factored { weight, .. } | BaseTerm::Singular { weight, .. } => *weight *= by,
        }
    }
}

/// The outcome of [`select_next`].
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub criterion: Option<Criterion>,
    /// Whether the labeled information matrix was singular, so every
    /// candidate was evaluated on top of the whole candidate set.
    pub augmented: bool,
}

/// Picks the candidate maximizing the Bayesian D-criterion.
///
/// `estimate` decides the branch: if the information matrix of the labeled
/// points at `estimate` is singular, the criterion is evaluated over the
/// labeled points, all candidates, and the candidate itself. `pool_samples`
/// must already carry the importance weights for the labeled data.
pub fn select_next(
    estimate: &BetaVector,
    pool: &Pool,
    candidates: &Candidates,
    pool_samples: &PriorSamplePool,
) -> Result<Selection, DesignError> {
    if candidates.is_empty() {
        return Err(DesignError::NoCandidates);
    }
    if candidates.len() == 1 {
        return Ok(Selection {
            index: candidates.indices[0],
            criterion: None,
            augmented: false,
        });
    }
    let mut base: Vec<&[f64]> = pool.labeled_idx().iter().map(|&i| pool.feature(i)).collect();
    let singular = fisher_information(estimate, &base)?.is_singular();
    if singular {
        base.extend(candidates.indices.iter().map(|&i| pool.feature(i)));
    }
    let evaluator = CriterionEvaluator::new(pool_samples, &base);

    let mut best: Option<(usize, Criterion)> = None;
    for &idx in &candidates.indices {
        let value = evaluator.with_point(pool.feature(idx));
        // Candidates arrive ordered by (uncertainty, index), so keeping the
        // first maximum implements the tie-breaking rule.
        if best.is_none_or(|(_, b)| value.cmp_total(b).is_gt()) {
            best = Some((idx, value));
        }
    }
    let (index, value) = best.expect("candidates are nonempty");
    if !value.is_finite() {
        return Err(DesignError::DesignDegenerate);
    }
    Ok(Selection {
        index,
        criterion: Some(value),
        augmented: singular,
    })
}

/// Index of the unlabeled point closest to the level-`level` boundary.
pub(crate) fn nearest_to_boundary(beta: &BetaVector, pool: &Pool, level: f64) -> Result<usize, DesignError> {
    let mut best: Option<(usize, f64)> = None;
    for i in pool.unlabeled() {
        let d = boundary_distance(beta, level, pool.feature(i))?;
        if best.is_none_or(|(_, b)| d < b) {
            best = Some((i, d));
        }
    }
    best.map(|b| b.0).ok_or(DesignError::EmptyPool)
}

/// Settings of the proposed engine.
#[derive(Debug, Clone)]
pub struct EngineConfig {
    /// Number of prior draws in the Monte-Carlo pool.
    pub m_prior: usize,
    /// Candidate cap; `None` means four times the parameter count.
    pub k_cap: Option<usize>,
    pub efficiency_threshold: f64,
    /// Distance from 0 or 1 below which probabilities count as uninformative.
    pub fallback_threshold: f64,
    /// Distance from 0 or 1 below which a prediction counts as certain.
    pub stop_tolerance: f64,
    /// A MAP scale below `collapse_ratio · sigma0` marks a collapsed estimate.
    pub collapse_ratio: f64,
    pub map: MapSettings,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            m_prior: 1000,
            k_cap: None,
            efficiency_threshold: DEFAULT_EFFICIENCY_THRESHOLD,
            fallback_threshold: 1e-3,
            stop_tolerance: 1e-9,
            collapse_ratio: 1e-3,
            map: MapSettings::default(),
        }
    }
}

/// One query of a learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub chosen_idx: usize,
    /// Labeled points after this query.
    pub n_labeled: usize,
    /// Estimate refitted after the query was labeled.
    pub estimate: BetaVector,
    /// Criterion of the chosen point; `None` when no criterion was evaluated.
    pub criterion_value: Option<Criterion>,
    pub fallback_used: bool,
    pub k_n: usize,
    /// Whether the criterion was evaluated in augmented mode.
    pub augmented: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// Estimate from the warm-start points alone (prior median when none).
    pub initial_estimate: BetaVector,
    pub records: Vec<StageRecord>,
    pub stopped_early: bool,
}

/// A failed run with everything recorded up to the failure.
#[derive(Debug, Clone)]
pub struct RunError {
    pub source: DesignError,
    pub partial: Option<RunOutcome>,
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let done = self.partial.as_ref().map_or(0, |p| p.records.len());
        write!(f, "{} (after {done} stages)", self.source)
    }
}

impl std::error::Error for RunError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

impl From<DesignError> for RunError {
    fn from(source: DesignError) -> Self {
        Self { source, partial: None }
    }
}

pub(crate) mod streams {
    pub const WARM_START: u64 = 1;
    pub const PRIOR_POOL: u64 = 2;
    pub const MAP_STARTS: u64 = 3;
}

/// Independent sub-seed for one use of a run seed (splitmix64 finalizer).
pub(crate) fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// MAP fitting with fixed multi-start points shared by every stage of a run.
pub(crate) struct StageEstimator<'a> {
    prior: &'a PriorSpec,
    settings: MapSettings,
    median: ThetaParams,
    random_starts: Vec<ThetaParams>,
}

pub(crate) struct StageEstimate {
    pub theta: ThetaParams,
    pub converged: bool,
}

impl<'a> StageEstimator<'a> {
    pub fn new(prior: &'a PriorSpec, settings: MapSettings, seed: u64) -> Result<Self, DesignError> {
        let draws = sample_prior(
            prior,
            settings.median_draws.max(1) + settings.random_starts,
            sub_seed(seed, streams::MAP_STARTS),
        )?;
        let (median_draws, random) = draws.thetas().split_at(settings.median_draws.max(1));
        let median = prior_median(median_draws).ok_or(InferenceError::EmptyPool)?;
        Ok(Self {
            prior,
            settings,
            median,
            random_starts: random.to_vec(),
        })
    }

    pub fn fit(&self, data: &LabeledSet, previous: Option<&ThetaParams>) -> Result<StageEstimate, DesignError> {
        if data.is_empty() {
            return Ok(StageEstimate {
                theta: self.median.clone(),
                converged: true,
            });
        }
        let mut starts: Vec<ThetaParams> = previous.into_iter().cloned().collect();
        starts.push(self.median.clone());
        starts.extend(self.random_starts.iter().cloned());
        let fit = map_fit(data, self.prior, &starts, &self.settings).map_err(|e| match e {
            crate::inference::MapError::Inference(i) => DesignError::Inference(i),
            other => DesignError::InvalidPool(other.to_string()),
        })?;
        Ok(StageEstimate {
            theta: fit.theta,
            converged: fit.converged,
        })
    }
}

pub(crate) fn check_budget(pool: &Pool, n0: usize, budget: usize) -> Result<(), DesignError> {
    if !pool.labeled_idx().is_empty() {
        return Err(DesignError::InvalidPool("pool already has labeled points".into()));
    }
    if n0 + budget > pool.len() {
        return Err(DesignError::BudgetTooLarge {
            requested: n0 + budget,
            available: pool.len(),
        });
    }
    Ok(())
}

/// Runs the proposed sequential procedure for up to `budget` queries after
/// labeling `n0` random warm-start points. Deterministic given `seed`.
pub fn run_active_learning(
    pool: &mut Pool,
    prior: &PriorSpec,
    rule: &ClassifierRule,
    budget: usize,
    n0: usize,
    config: &EngineConfig,
    seed: u64,
) -> Result<RunOutcome, RunError> {
    check_budget(pool, n0, budget)?;
    if prior.dim() != pool.dim() {
        return Err(DesignError::from(ModelError::DimensionMismatch {
            expected: pool.dim(),
            found: prior.dim(),
        })
        .into());
    }
    pool.warm_start(n0, sub_seed(seed, streams::WARM_START))?;
    let samples = sample_prior(prior, config.m_prior, sub_seed(seed, streams::PRIOR_POOL))
        .map_err(DesignError::from)?;
    let estimator = StageEstimator::new(prior, config.map.clone(), seed)?;
    let k_cap = config.k_cap.unwrap_or_else(|| default_k_cap(pool.dim()));
    let omega = rule.omega();

    let mut estimate = estimator.fit(&pool.labeled_set(), None)?;
    let mut outcome = RunOutcome {
        initial_estimate: theta_to_beta(&estimate.theta),
        records: Vec::with_capacity(budget),
        stopped_early: false,
    };

    for stage in 1..=budget {
        let fail = |source: DesignError, outcome: RunOutcome| RunError {
            source,
            partial: Some(outcome),
        };
        let beta = theta_to_beta(&estimate.theta);
        let probs: Vec<f64> = pool
            .unlabeled()
            .into_iter()
            .map(|i| beta.prob(pool.feature(i)))
            .collect();
        if probs.is_empty() {
            break;
        }
        let (lo, hi) = probs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
        let collapsed = estimate.theta.sigma() < config.collapse_ratio * prior.sigma0;
        let one_sided = lo > 1.0 - config.fallback_threshold || hi < config.fallback_threshold;
        let fallback = !estimate.converged || collapsed || one_sided;

        if !fallback
            && probs
                .iter()
                .all(|&p| p < config.stop_tolerance || p > 1.0 - config.stop_tolerance)
        {
            outcome.stopped_early = true;
            break;
        }

        let (chosen, criterion_value, k_n, augmented) = if fallback {
            match nearest_to_boundary(&beta, pool, omega) {
                Ok(i) => (i, None, 1, false),
                Err(e) => return Err(fail(e, outcome)),
            }
        } else {
            let candidates = match candidate_set_with(&beta, pool, omega, k_cap, config.efficiency_threshold) {
                Ok(c) => c,
                Err(e) => return Err(fail(e, outcome)),
            };
            let weighted = match importance_weights(&samples, &pool.labeled_set()) {
                Ok(w) => w,
                Err(e) => return Err(fail(e.into(), outcome)),
            };
            match select_next(&beta, pool, &candidates, &weighted) {
                Ok(sel) => (sel.index, sel.criterion, candidates.k_n, sel.augmented),
                Err(e) => return Err(fail(e, outcome)),
            }
        };

        if let Err(e) = pool.query(chosen) {
            return Err(fail(e, outcome));
        }
        estimate = match estimator.fit(&pool.labeled_set(), Some(&estimate.theta)) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, outcome)),
        };
        outcome.records.push(StageRecord {
            stage,
            chosen_idx: chosen,
            n_labeled: pool.labeled_idx().len(),
            estimate: theta_to_beta(&estimate.theta),
            criterion_value,
            fallback_used: fallback,
            k_n,
            augmented,
        });
    }
    Ok(outcome)
}
