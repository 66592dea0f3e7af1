//! The distance-screened, locally D-optimal comparator (ADSL).
//!
//! Each stage keeps the `k0` unlabeled points nearest the estimated
//! boundary and queries the one maximizing `det I(β̂; labeled ∪ {x})`.

use crate::design::{check_budget, streams, sub_seed, DesignError, Pool, RunError, RunOutcome, StageEstimator, StageRecord};
use crate::inference::{mle_estimate, Criterion, LabeledSet, MapSettings, PriorSpec};
use crate::model::{boundary_distance, check_open_unit, fisher_information, theta_to_beta, BetaVector, ModelError, ThetaParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdslEstimator {
    /// Logistic MLE, with the MAP estimate whenever the MLE does not exist.
    MleWithMapFallback,
    Map,
}

#[derive(Debug, Clone)]
pub struct AdslConfig {
    pub k0: usize,
    pub estimator: AdslEstimator,
    /// Probability level of the boundary used for distance screening.
    pub omega: f64,
    /// Classification cut-off.
    pub gamma: f64,
    pub map: MapSettings,
}

impl Default for AdslConfig {
    fn default() -> Self {
        Self {
            k0: 20,
            estimator: AdslEstimator::MleWithMapFallback,
            omega: 0.5,
            gamma: 0.5,
            map: MapSettings::default(),
        }
    }
}

impl AdslConfig {
    pub fn validate(&self) -> Result<(), DesignError> {
        if self.k0 == 0 {
            return Err(DesignError::InvalidPool("k0 must be at least 1".into()));
        }
        check_open_unit("omega", self.omega)?;
        check_open_unit("gamma", self.gamma)?;
        Ok(())
    }
}

/// The `k0` unlabeled points closest to the level-`level` boundary, nearest
/// first, ties by index.
pub fn adsl_candidates(beta: &BetaVector, pool: &Pool, level: f64, k0: usize) -> Result<Vec<usize>, DesignError> {
    let unlabeled = pool.unlabeled();
    if unlabeled.is_empty() {
        return Err(DesignError::EmptyPool);
    }
    let mut ranked = Vec::with_capacity(unlabeled.len());
    for i in unlabeled {
        ranked.push((i, boundary_distance(beta, level, pool.feature(i))?));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(ranked.into_iter().take(k0).map(|r| r.0).collect())
}

/// Local D-optimal choice among distance-ordered `candidates`.
///
/// Returns the chosen index and its log-determinant, or `None` when every
/// candidate leaves the information matrix singular and the nearest
/// candidate is returned instead.
pub fn adsl_select_scored(
    beta: &BetaVector,
    pool: &Pool,
    candidates: &[usize],
) -> Result<(usize, Option<f64>), DesignError> {
    let first = *candidates.first().ok_or(DesignError::NoCandidates)?;
    let base: Vec<&[f64]> = pool.labeled_idx().iter().map(|&i| pool.feature(i)).collect();
    let base_info = fisher_information(beta, &base)?;
    let mut best: Option<(usize, f64)> = None;
    for &idx in candidates {
        let mut info = base_info.clone();
        info.add_point(beta, pool.feature(idx));
        if let Some(ld) = info.logdet() {
            if best.is_none_or(|(_, b)| ld > b) {
                best = Some((idx, ld));
            }
        }
    }
    Ok(match best {
        Some((idx, ld)) => (idx, Some(ld)),
        None => (first, None),
    })
}

pub fn adsl_select(beta: &BetaVector, pool: &Pool, candidates: &[usize]) -> Result<usize, DesignError> {
    adsl_select_scored(beta, pool, candidates).map(|r| r.0)
}

fn adsl_estimate(
    data: &LabeledSet,
    estimator: AdslEstimator,
    map: &StageEstimator<'_>,
    previous: Option<&ThetaParams>,
) -> Result<(BetaVector, Option<ThetaParams>), DesignError> {
    if estimator == AdslEstimator::MleWithMapFallback && !data.is_empty() {
        if let Ok(beta) = mle_estimate(data, None) {
            return Ok((beta, None));
        }
    }
    let fit = map.fit(data, previous)?;
    Ok((theta_to_beta(&fit.theta), Some(fit.theta)))
}

/// Runs ADSL for up to `budget` queries after `n0` random warm-start labels.
///
/// Warm starts use the same seed stream as the proposed engine, so both
/// methods start from identical labeled sets for a given seed. The prior is
/// needed only for MAP estimates.
pub fn run_adsl(
    pool: &mut Pool,
    prior: &PriorSpec,
    config: &AdslConfig,
    budget: usize,
    n0: usize,
    seed: u64,
) -> Result<RunOutcome, RunError> {
    config.validate()?;
    check_budget(pool, n0, budget)?;
    if prior.dim() != pool.dim() {
        return Err(DesignError::from(ModelError::DimensionMismatch {
            expected: pool.dim(),
            found: prior.dim(),
        })
        .into());
    }
    pool.warm_start(n0, sub_seed(seed, streams::WARM_START))?;
    let map = StageEstimator::new(prior, config.map.clone(), seed)?;

    let (mut beta, mut theta) = adsl_estimate(&pool.labeled_set(), config.estimator, &map, None)?;
    let mut outcome = RunOutcome {
        initial_estimate: beta.clone(),
        records: Vec::with_capacity(budget),
        stopped_early: false,
    };
    for stage in 1..=budget {
        let step = adsl_candidates(&beta, pool, config.omega, config.k0)
            .and_then(|c| adsl_select_scored(&beta, pool, &c).map(|s| (s, c.len())))
            .and_then(|((idx, ld), k)| pool.query(idx).map(|_| (idx, ld, k)));
        let (chosen, logdet, k) = match step {
            Ok(v) => v,
            Err(source) => {
                return Err(RunError {
                    source,
                    partial: Some(outcome),
                })
            }
        };
        match adsl_estimate(&pool.labeled_set(), config.estimator, &map, theta.as_ref()) {
            Ok((b, t)) => {
                beta = b;
                theta = t;
            }
            Err(source) => {
                return Err(RunError {
                    source,
                    partial: Some(outcome),
                })
            }
        }
        outcome.records.push(StageRecord {
            stage,
            chosen_idx: chosen,
            n_labeled: pool.labeled_idx().len(),
            estimate: beta.clone(),
            criterion_value: Some(logdet.map_or(Criterion::Singular, Criterion::Finite)),
            fallback_used: logdet.is_none(),
            k_n: k,
            augmented: false,
        });
    }
    Ok(outcome)
}
