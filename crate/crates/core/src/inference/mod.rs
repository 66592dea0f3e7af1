//! Priors, posterior mode estimation, the logistic MLE, and the Monte-Carlo
//! machinery behind the Bayesian D-optimality criterion.

mod mle;
mod pool;
mod posterior;

pub use mle::{mle_estimate, mle_estimate_with, MleError, MleSettings};
pub use pool::{
    bayes_d_criterion, importance_weights, log_likelihoods, sample_prior, Criterion,
    PriorSamplePool,
};
pub use posterior::{
    log_posterior, log_posterior_at, map_estimate, map_fit, prior_median, MapError, MapFit,
    MapSettings, PosteriorObjective,
};

use thiserror::Error;

use crate::model::{logistic, softplus, BetaVector, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("prior sample pool is empty")]
    EmptyPool,
    #[error("all importance weights underflow to zero")]
    DegenerateWeights,
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Hyperparameters of the independent priors
/// `mu ~ Normal(mu0, sigma_mu2)`, `sigma ~ Exponential(mean sigma0)` and
/// `w ~ Dirichlet(alpha)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub mu0: f64,
    pub sigma_mu2: f64,
    pub sigma0: f64,
    pub alpha: Vec<f64>,
}

impl PriorSpec {
    pub fn new(mu0: f64, sigma_mu2: f64, sigma0: f64, alpha: Vec<f64>) -> Result<Self, InferenceError> {
        let spec = Self {
            mu0,
            sigma_mu2,
            sigma0,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), InferenceError> {
        if !self.mu0.is_finite() {
            return Err(InferenceError::InvalidPrior(format!("mu0 = {}", self.mu0)));
        }
        if !(self.sigma_mu2 > 0.0 && self.sigma_mu2.is_finite()) {
            return Err(InferenceError::InvalidPrior(format!(
                "sigma_mu2 = {}",
                self.sigma_mu2
            )));
        }
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return Err(InferenceError::InvalidPrior(format!("sigma0 = {}", self.sigma0)));
        }
        if self.alpha.is_empty() {
            return Err(InferenceError::InvalidPrior("empty alpha".into()));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(InferenceError::InvalidPrior(format!("alpha entry {a}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }
}

/// Labeled observations `(x_i, y_i)` with a common feature dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    dim: Option<usize>,
    xs: Vec<Vec<f64>>,
    ys: Vec<u8>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_rows(rows: Vec<(Vec<f64>, u8)>) -> Result<Self, InferenceError> {
        let mut set = Self::new();
        for (x, y) in rows {
            set.push(x, y)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, x: Vec<f64>, y: u8) -> Result<(), InferenceError> {
        if y > 1 {
            return Err(InferenceError::InvalidLabel(y));
        }
        match self.dim {
            Some(d) if d != x.len() => {
                return Err(ModelError::DimensionMismatch {
                    expected: d,
                    found: x.len(),
                }
                .into())
            }
            _ => self.dim = Some(x.len()),
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    /// Feature dimension, `None` for an empty set.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn labels(&self) -> &[u8] {
        &self.ys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], u8)> {
        self.xs.iter().map(Vec::as_slice).zip(self.ys.iter().copied())
    }

    pub(crate) fn check_dim(&self, p: usize) -> Result<(), ModelError> {
        match self.dim {
            Some(d) if d != p => Err(ModelError::DimensionMismatch {
                expected: p,
                found: d,
            }),
            _ => Ok(()),
        }
    }
}

/// Bernoulli log-likelihood of one observation at linear predictor `t`.
#[inline]
pub(crate) fn bernoulli_loglik(t: f64, y: u8) -> f64 {
    if y == 1 {
        -softplus(-t)
    } else {
        -softplus(t)
    }
}

/// Bernoulli log-likelihood of `data` under `beta`.
pub fn log_likelihood(beta: &BetaVector, data: &LabeledSet) -> f64 {
    data.iter()
        .map(|(x, y)| bernoulli_loglik(beta.linear_predictor(x), y))
        .sum()
}

#[inline]
pub(crate) fn residual(t: f64, y: u8) -> f64 {
    f64::from(y) - logistic(t)
}
