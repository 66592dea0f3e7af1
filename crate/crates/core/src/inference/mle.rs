use thiserror::Error;

use super::{bernoulli_loglik, LabeledSet};
use crate::linalg;
use crate::model::{augmented, logistic, logistic_variance, BetaVector};

#[derive(Debug, Clone, Copy)]
pub struct MleSettings {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Coefficient magnitude treated as divergence.
    pub max_coef: f64,
}

impl Default for MleSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-6,
            max_coef: 1e6,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MleError {
    #[error("no labeled data")]
    Empty,
    #[error("data are completely separated; the MLE does not exist")]
    Separated { last: BetaVector },
    #[error("Newton iterations diverged")]
    Diverged { last: BetaVector },
    #[error("information matrix is singular; the MLE is not identifiable")]
    Singular { last: BetaVector },
}

impl MleError {
    pub fn last_iterate(&self) -> Option<&BetaVector> {
        match self {
            MleError::Empty => None,
            MleError::Separated { last } | MleError::Diverged { last } | MleError::Singular { last } => Some(last),
        }
    }
}

/// Unconstrained logistic maximum-likelihood estimate by damped Newton steps.
pub fn mle_estimate(data: &LabeledSet, init: Option<&BetaVector>) -> Result<BetaVector, MleError> {
    mle_estimate_with(data, init, MleSettings::default())
}

pub fn mle_estimate_with(
    data: &LabeledSet,
    init: Option<&BetaVector>,
    settings: MleSettings,
) -> Result<BetaVector, MleError> {
    let p = data.dim().ok_or(MleError::Empty)?;
    let n = p + 1;
    let rows: Vec<(Vec<f64>, u8)> = data.iter().map(|(x, y)| (augmented(x), y)).collect();
    let mut beta = match init {
        Some(b) if b.dim() == p => b.to_vec(),
        _ => vec![0.0; n],
    };

    let loglik = |b: &[f64]| -> f64 {
        rows.iter()
            .map(|(xt, y)| bernoulli_loglik(dot(xt, b), *y))
            .sum()
    };
    let mut current = loglik(&beta);

    for _ in 0..settings.max_iter {
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n * n];
        let mut perfect = true;
        for (xt, y) in &rows {
            let t = dot(xt, &beta);
            let r = f64::from(*y) - logistic(t);
            perfect &= r.abs() < 1e-8;
            for (g, x) in grad.iter_mut().zip(xt) {
                *g += r * x;
            }
            linalg::add_outer(&mut hess, n, logistic_variance(t), xt);
        }
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if perfect {
            return Err(MleError::Separated {
                last: BetaVector::from_slice(&beta),
            });
        }
        if linalg::cholesky_logdet(&mut hess, n).is_none() {
            return Err(MleError::Singular {
                last: BetaVector::from_slice(&beta),
            });
        }
        let mut step = grad.clone();
        linalg::cholesky_solve(&hess, n, &mut step);
        // On separated data the gradient vanishes while Newton steps stay
        // large, so both must be small.
        let scale = 1.0 + beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        let smax = step.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if gnorm <= settings.grad_tol && smax <= 1e-6 * scale {
            return Ok(BetaVector::from_slice(&beta));
        }

        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let value = loglik(&trial);
            if value >= current - 1e-12 * current.abs() {
                beta = trial;
                current = value;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || beta.iter().any(|b| b.abs() > settings.max_coef || !b.is_finite()) {
            return Err(MleError::Diverged {
                last: BetaVector::from_slice(&beta),
            });
        }
    }
    Err(MleError::Diverged {
        last: BetaVector::from_slice(&beta),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
