use thiserror::Error;

use super::{bernoulli_loglik, residual, sample_prior, InferenceError, LabeledSet, PriorSpec};
use crate::model::{ThetaParams, WEIGHT_SUM_TOL};
use crate::optim::{self, BfgsSettings};

/// Unnormalized log posterior of `theta`, dropping constants free of θ.
///
/// Returns `None` when θ lies outside the support of the prior (or does not
/// match the data dimension).
pub fn log_posterior(theta: &ThetaParams, data: &LabeledSet, prior: &PriorSpec) -> Option<f64> {
    log_posterior_at(theta.mu(), theta.sigma(), theta.weights(), data, prior)
}

/// [`log_posterior`] on raw components, for points that may be out of support.
pub fn log_posterior_at(
    mu: f64,
    sigma: f64,
    weights: &[f64],
    data: &LabeledSet,
    prior: &PriorSpec,
) -> Option<f64> {
    let p = weights.len();
    if p != prior.dim() || data.check_dim(p).is_err() {
        return None;
    }
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return None;
    }
    let in_simplex = weights
        .iter()
        .all(|&w| (w > 0.0 && w < 1.0) || (p == 1 && w == 1.0));
    let sum: f64 = weights.iter().sum();
    if !in_simplex || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return None;
    }

    let loglik: f64 = data
        .iter()
        .map(|(x, y)| {
            let z: f64 = weights.iter().zip(x).map(|(w, v)| w * v).sum();
            bernoulli_loglik((z - mu) / sigma, y)
        })
        .sum();
    let log_dirichlet: f64 = prior
        .alpha
        .iter()
        .zip(weights)
        .map(|(a, w)| (a - 1.0) * w.ln())
        .sum();
    let log_prior = -(mu - prior.mu0).powi(2) / (2.0 * prior.sigma_mu2) - sigma / prior.sigma0
        + log_dirichlet;
    Some(loglik + log_prior)
}

/// The log posterior over the unconstrained coordinates
/// `η = (mu, ln sigma, v_1..v_p)` with `w = softmax(v)`.
#[derive(Debug, Clone, Copy)]
pub struct PosteriorObjective<'a> {
    pub data: &'a LabeledSet,
    pub prior: &'a PriorSpec,
}

impl<'a> PosteriorObjective<'a> {
    pub fn new(data: &'a LabeledSet, prior: &'a PriorSpec) -> Self {
        Self { data, prior }
    }

    pub fn dim(&self) -> usize {
        self.prior.dim() + 2
    }

    /// Centered log-ratio coordinates of θ.
    pub fn eta_from_theta(theta: &ThetaParams) -> Vec<f64> {
        let logs: Vec<f64> = theta.weights().iter().map(|w| w.ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let mut eta = Vec::with_capacity(logs.len() + 2);
        eta.push(theta.mu());
        eta.push(theta.sigma().ln());
        eta.extend(logs.iter().map(|l| l - mean));
        eta
    }

    /// Components `(mu, sigma, w, ln w)` at η.
    fn unpack(eta: &[f64]) -> (f64, f64, Vec<f64>, Vec<f64>) {
        let v = &eta[2..];
        let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = vmax + v.iter().map(|x| (x - vmax).exp()).sum::<f64>().ln();
        let log_w: Vec<f64> = v.iter().map(|x| x - lse).collect();
        let w = log_w.iter().map(|l| l.exp()).collect();
        (eta[0], eta[1].exp(), w, log_w)
    }

    pub fn theta_from_eta(eta: &[f64]) -> Option<ThetaParams> {
        let (mu, sigma, w, _) = Self::unpack(eta);
        ThetaParams::new(mu, sigma, w).ok()
    }

    /// Log posterior at η; writes its gradient with respect to η.
    pub fn value_grad(&self, eta: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.prior.dim();
        debug_assert_eq!(eta.len(), p + 2);
        let (mu, sigma, w, log_w) = Self::unpack(eta);
        if !(sigma > 0.0 && sigma.is_finite()) {
            grad.iter_mut().for_each(|g| *g = f64::NAN);
            return f64::NEG_INFINITY;
        }

        let mut value = 0.0;
        let mut g_mu = 0.0;
        let mut g_s = 0.0;
        let mut g_w = vec![0.0; p];
        for (x, y) in self.data.iter() {
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
            let t = (z - mu) / sigma;
            value += bernoulli_loglik(t, y);
            let r = residual(t, y);
            g_mu -= r / sigma;
            g_s -= r * t;
            for (gj, xj) in g_w.iter_mut().zip(x) {
                *gj += r * xj / sigma;
            }
        }

        let prior = self.prior;
        value += -(mu - prior.mu0).powi(2) / (2.0 * prior.sigma_mu2) - sigma / prior.sigma0;
        g_mu -= (mu - prior.mu0) / prior.sigma_mu2;
        g_s -= sigma / prior.sigma0;

        let alpha_excess: f64 = prior.alpha.iter().map(|a| a - 1.0).sum();
        value += prior
            .alpha
            .iter()
            .zip(&log_w)
            .map(|(a, l)| (a - 1.0) * l)
            .sum::<f64>();

        let w_dot_g: f64 = w.iter().zip(&g_w).map(|(a, b)| a * b).sum();
        grad[0] = g_mu;
        grad[1] = g_s;
        for k in 0..p {
            grad[2 + k] =
                w[k] * (g_w[k] - w_dot_g) + (prior.alpha[k] - 1.0) - w[k] * alpha_excess;
        }
        value
    }
}

/// The MAP search keeps `ln sigma >= ln sigma0 - SIGMA_FLOOR_LOG_RATIO`.
pub const SIGMA_FLOOR_LOG_RATIO: f64 = 30.0;

#[derive(Debug, Clone)]
pub struct MapSettings {
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Random prior draws used as extra starting points.
    pub random_starts: usize,
    /// Prior draws used to form the prior-median start.
    pub median_draws: usize,
    pub seed: u64,
}

impl Default for MapSettings {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            random_starts: 4,
            median_draws: 1000,
            seed: 0,
        }
    }
}

/// Result of a multi-start MAP search.
#[derive(Debug, Clone)]
pub struct MapFit {
    pub theta: ThetaParams,
    pub log_posterior: f64,
    /// Sup-norm of the gradient in the unconstrained coordinates.
    pub grad_norm: f64,
    pub converged: bool,
}

#[derive(Debug, Error, Clone)]
pub enum MapError {
    #[error("MAP search did not converge (gradient sup-norm {grad_norm:e})")]
    NotConverged { best: ThetaParams, grad_norm: f64 },
    #[error("no valid starting point")]
    NoStart,
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Componentwise median of parameter draws, weights renormalized to the simplex.
pub fn prior_median(draws: &[ThetaParams]) -> Option<ThetaParams> {
    let first = draws.first()?;
    let p = first.dim();
    let median = |mut v: Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    let mu = median(draws.iter().map(ThetaParams::mu).collect());
    let sigma = median(draws.iter().map(ThetaParams::sigma).collect());
    let mut w: Vec<f64> = (0..p)
        .map(|j| median(draws.iter().map(|t| t.weights()[j]).collect()))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    ThetaParams::new(mu, sigma, w).ok()
}

/// Maximizes the log posterior from each start with BFGS and keeps the best.
pub fn map_fit(
    data: &LabeledSet,
    prior: &PriorSpec,
    starts: &[ThetaParams],
    settings: &MapSettings,
) -> Result<MapFit, MapError> {
    prior.validate()?;
    data.check_dim(prior.dim()).map_err(InferenceError::from)?;
    let objective = PosteriorObjective::new(data, prior);
    let bfgs = BfgsSettings {
        max_iter: settings.max_iter,
        grad_tol: settings.grad_tol,
    };

    // On separable data the posterior increases all the way to sigma = 0;
    // stop the search before 1/sigma overflows.
    let log_sigma_floor = prior.sigma0.ln() - SIGMA_FLOOR_LOG_RATIO;
    let mut best: Option<MapFit> = None;
    for start in starts {
        if start.dim() != prior.dim() {
            continue;
        }
        let mut eta0 = PosteriorObjective::eta_from_theta(start);
        eta0[1] = eta0[1].max(log_sigma_floor + 1.0);
        let run = optim::minimize(
            |eta, g| {
                if eta[1] < log_sigma_floor {
                    return f64::NAN;
                }
                let v = objective.value_grad(eta, g);
                g.iter_mut().for_each(|x| *x = -*x);
                -v
            },
            &eta0,
            bfgs,
        );
        let Some(theta) = PosteriorObjective::theta_from_eta(&run.x) else {
            continue;
        };
        let candidate = MapFit {
            theta,
            log_posterior: -run.value,
            grad_norm: run.grad_sup_norm(),
            converged: run.converged,
        };
        let better = match &best {
            None => true,
            Some(b) => candidate.log_posterior > b.log_posterior,
        };
        if better {
            best = Some(candidate);
        }
    }
    best.ok_or(MapError::NoStart)
}

/// MAP estimate of θ from `init` (if any), the prior median and
/// `settings.random_starts` prior draws.
pub fn map_estimate(
    data: &LabeledSet,
    prior: &PriorSpec,
    init: Option<&ThetaParams>,
    settings: &MapSettings,
) -> Result<ThetaParams, MapError> {
    prior.validate()?;
    let draws = sample_prior(
        prior,
        settings.median_draws.max(1) + settings.random_starts,
        settings.seed,
    )?;
    let thetas = draws.thetas();
    let (median_draws, random) = thetas.split_at(settings.median_draws.max(1));
    let mut starts: Vec<ThetaParams> = init.into_iter().cloned().collect();
    starts.extend(prior_median(median_draws));
    starts.extend(random.iter().cloned());
    let fit = map_fit(data, prior, &starts, settings)?;
    if fit.converged {
        Ok(fit.theta)
    } else {
        Err(MapError::NotConverged {
            best: fit.theta,
            grad_norm: fit.grad_norm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prior2() -> PriorSpec {
        PriorSpec::new(0.2, 2.0, 1.3, vec![1.5, 2.5]).unwrap()
    }

    fn small_data() -> LabeledSet {
        LabeledSet::from_rows(vec![
            (vec![0.1, -0.3], 0),
            (vec![1.2, 0.4], 1),
            (vec![-0.7, 0.9], 0),
            (vec![0.5, 0.5], 1),
            (vec![0.3, 0.2], 0),
        ])
        .unwrap()
    }

    #[test]
    fn out_of_support_is_signalled() {
        let data = small_data();
        let prior = prior2();
        assert!(log_posterior_at(0.0, 0.0, &[0.5, 0.5], &data, &prior).is_none());
        assert!(log_posterior_at(0.0, -1.0, &[0.5, 0.5], &data, &prior).is_none());
        assert!(log_posterior_at(0.0, 1.0, &[0.0, 1.0], &data, &prior).is_none());
        assert!(log_posterior_at(0.0, 1.0, &[0.6, 0.6], &data, &prior).is_none());
        assert!(log_posterior_at(0.0, 1.0, &[0.4, 0.6], &data, &prior).is_some());
    }

    #[test]
    fn duplicated_observation_adds_its_term() {
        let prior = prior2();
        let mut data = small_data();
        let theta = ThetaParams::new(0.1, 0.8, vec![0.3, 0.7]).unwrap();
        let before = log_posterior(&theta, &data, &prior).unwrap();
        data.push(vec![1.2, 0.4], 1).unwrap();
        let after = log_posterior(&theta, &data, &prior).unwrap();
        let z = 0.3 * 1.2 + 0.7 * 0.4;
        let t: f64 = (z - 0.1) / 0.8;
        let term = -(1.0 + (-t).exp()).ln();
        assert!((after - before - term).abs() < 1e-12);
    }

    #[test]
    fn objective_value_matches_log_posterior() {
        let prior = prior2();
        let data = small_data();
        let theta = ThetaParams::new(-0.2, 0.6, vec![0.35, 0.65]).unwrap();
        let eta = PosteriorObjective::eta_from_theta(&theta);
        let mut g = vec![0.0; 4];
        let v = PosteriorObjective::new(&data, &prior).value_grad(&eta, &mut g);
        assert!((v - log_posterior(&theta, &data, &prior).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn median_of_draws() {
        let draws = vec![
            ThetaParams::new(0.0, 1.0, vec![0.2, 0.8]).unwrap(),
            ThetaParams::new(1.0, 3.0, vec![0.6, 0.4]).unwrap(),
            ThetaParams::new(5.0, 2.0, vec![0.5, 0.5]).unwrap(),
        ];
        let m = prior_median(&draws).unwrap();
        assert_eq!(m.mu(), 1.0);
        assert_eq!(m.sigma(), 2.0);
        // medians 0.5 and 0.5 renormalize to themselves
        assert!((m.weights()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn separated_pair_stays_finite() {
        let prior = prior2();
        let data = LabeledSet::from_rows(vec![(vec![-1.0, -1.0], 0), (vec![1.0, 1.0], 1)]).unwrap();
        let fit = map_estimate(&data, &prior, None, &MapSettings::default()).unwrap();
        assert!(fit.mu().is_finite() && fit.sigma() > 0.0);
        assert!(fit.weights().iter().all(|w| *w > 0.0 && *w < 1.0));
    }
}
