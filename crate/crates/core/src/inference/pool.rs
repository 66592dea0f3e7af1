use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};

use super::{log_likelihood, InferenceError, LabeledSet, PriorSpec};
use crate::linalg;
use crate::model::{augmented, theta_to_beta, BetaVector, ThetaParams};

/// Value of the Bayesian D-criterion.
///
/// `Singular` stands for `-∞` (some positively weighted information matrix
/// is singular) and orders below every finite value.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Criterion {
    Singular,
    Finite(f64),
}

impl Criterion {
    pub fn value(self) -> f64 {
        match self {
            Criterion::Singular => f64::NEG_INFINITY,
            Criterion::Finite(v) => v,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Criterion::Finite(_))
    }

    pub(crate) fn cmp_total(self, other: Self) -> Ordering {
        match (self, other) {
            (Criterion::Singular, Criterion::Singular) => Ordering::Equal,
            (Criterion::Singular, _) => Ordering::Less,
            (_, Criterion::Singular) => Ordering::Greater,
            (Criterion::Finite(a), Criterion::Finite(b)) => a.total_cmp(&b),
        }
    }
}

/// Draws from the prior on θ (and their β images) with importance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSamplePool {
    thetas: Vec<ThetaParams>,
    samples: Vec<BetaVector>,
    weights: Vec<f64>,
}

impl PriorSamplePool {
    /// A pool of fixed samples with uniform weights.
    pub fn from_thetas(thetas: Vec<ThetaParams>) -> Result<Self, InferenceError> {
        if thetas.is_empty() {
            return Err(InferenceError::EmptyPool);
        }
        let samples = thetas.iter().map(theta_to_beta).collect();
        let m = thetas.len();
        Ok(Self {
            thetas,
            samples,
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[BetaVector] {
        &self.samples
    }

    pub fn thetas(&self) -> &[ThetaParams] {
        &self.thetas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Feature dimension `p`.
    pub fn dim(&self) -> usize {
        self.samples[0].dim()
    }

    /// Replaces the weights by the normalized `exp(log_weights)`.
    pub fn with_log_weights(&self, log_weights: &[f64]) -> Result<Self, InferenceError> {
        assert_eq!(log_weights.len(), self.len());
        let max = log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(InferenceError::DegenerateWeights);
        }
        let mut weights: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(InferenceError::DegenerateWeights);
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self {
            thetas: self.thetas.clone(),
            samples: self.samples.clone(),
            weights,
        })
    }
}

/// `m` independent draws of `(mu, sigma, w)` from the prior; uniform weights.
pub fn sample_prior(prior: &PriorSpec, m: usize, seed: u64) -> Result<PriorSamplePool, InferenceError> {
    prior.validate()?;
    if m == 0 {
        return Err(InferenceError::EmptyPool);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(prior.mu0, prior.sigma_mu2.sqrt())
        .map_err(|e| InferenceError::InvalidPrior(e.to_string()))?;
    let exp = Exp::new(1.0 / prior.sigma0).map_err(|e| InferenceError::InvalidPrior(e.to_string()))?;
    let gammas: Vec<Gamma<f64>> = prior
        .alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0))
        .collect::<Result<_, _>>()
        .map_err(|e| InferenceError::InvalidPrior(e.to_string()))?;

    let mut thetas = Vec::with_capacity(m);
    while thetas.len() < m {
        let mu = normal.sample(&mut rng);
        let sigma = exp.sample(&mut rng);
        let mut w: Vec<f64> = gammas.iter().map(|g| g.sample(&mut rng)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        // A draw on the boundary of the support (underflowed weight or scale)
        // has no β image; redraw it.
        if let Ok(theta) = ThetaParams::new(mu, sigma, w) {
            thetas.push(theta);
        }
    }
    PriorSamplePool::from_thetas(thetas)
}

/// Log-likelihood of `data` under every sample of the pool.
pub fn log_likelihoods(pool: &PriorSamplePool, data: &LabeledSet) -> Vec<f64> {
    pool.samples.iter().map(|b| log_likelihood(b, data)).collect()
}

/// Reweights the pool by the likelihood of `data`: `r_u ∝ L(β_u)`.
///
/// Computed on the log scale with a max shift. Empty data gives uniform
/// weights.
pub fn importance_weights(pool: &PriorSamplePool, data: &LabeledSet) -> Result<PriorSamplePool, InferenceError> {
    if pool.is_empty() {
        return Err(InferenceError::EmptyPool);
    }
    data.check_dim(pool.dim())?;
    pool.with_log_weights(&log_likelihoods(pool, data))
}

/// `Σ_u r_u · logdet I(β_u; X)`.
///
/// Terms with zero weight carry no mass and are skipped. Any positively
/// weighted singular matrix makes the whole criterion [`Criterion::Singular`].
pub fn bayes_d_criterion<R: AsRef<[f64]>>(pool: &PriorSamplePool, rows: &[R]) -> Criterion {
    let n = pool.dim() + 1;
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| augmented(r.as_ref())).collect();
    let mut total = 0.0;
    let mut info = vec![0.0; n * n];
    for (beta, &r) in pool.samples.iter().zip(&pool.weights) {
        if r == 0.0 {
            continue;
        }
        info.iter_mut().for_each(|v| *v = 0.0);
        for xt in &xs {
            let v = crate::model::logistic_variance(beta.linear_predictor(&xt[1..]));
            linalg::add_outer(&mut info, n, v, xt);
        }
        match linalg::cholesky_logdet(&mut info, n) {
            Some(ld) => total += r * ld,
            None => return Criterion::Singular,
        }
    }
    Criterion::Finite(total)
}
