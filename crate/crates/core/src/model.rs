//! The constrained logistic model.
//!
//! The probability of class 1 at a feature vector `x` is
//! `logistic((z - mu) / sigma)` with `z = Σ w_j x_j`, where the weights lie
//! strictly inside the probability simplex. The same model written as an
//! ordinary logistic regression has intercept `-mu/sigma` and coefficients
//! `w_j/sigma`; [`ThetaParams`] and [`BetaVector`] are those two views.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;

/// Tolerance on the simplex constraint `Σ w_j = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("scale must be positive and finite, got {0}")]
    NonPositiveScale(f64),
    #[error("weight {index} = {value} is not strictly inside (0, 1)")]
    WeightOutOfRange { index: usize, value: f64 },
    #[error("weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("at least one feature weight is required")]
    NoFeatures,
    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("not representable in constrained form: {0}")]
    NotRepresentable(String),
    #[error("degenerate boundary: all coefficients are zero")]
    DegenerateBoundary,
    #[error("{name} = {value} must lie strictly inside (0, 1)")]
    ProbabilityOutOfRange { name: &'static str, value: f64 },
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `F(t)(1 - F(t))` for the logistic `F`, accurate in both tails.
#[inline]
pub fn logistic_variance(t: f64) -> f64 {
    let e = (-t.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `ln(1 + e^t)` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Natural parameterization `(mu, sigma, w)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaParams {
    mu: f64,
    sigma: f64,
    weights: Vec<f64>,
}

impl ThetaParams {
    pub fn new(mu: f64, sigma: f64, weights: Vec<f64>) -> Result<Self, ModelError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(ModelError::NonPositiveScale(sigma));
        }
        if weights.is_empty() {
            return Err(ModelError::NoFeatures);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) && !(weights.len() == 1 && value == 1.0) {
                return Err(ModelError::WeightOutOfRange { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ModelError::WeightSum(sum));
        }
        if !mu.is_finite() {
            return Err(ModelError::NotRepresentable(format!("location {mu}")));
        }
        Ok(Self { mu, sigma, weights })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of features `p`.
    pub fn dim(&self) -> usize {
        self.weights.len()
    }
}

/// Logistic-regression parameterization: `F(x) = logistic(intercept + coefficientsᵀx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaVector {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl BetaVector {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Self {
        Self {
            intercept,
            coefficients,
        }
    }

    /// Number of features `p` (the vector itself has `p + 1` entries).
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// `x̃ᵀβ` with `x̃ = (1, x)`.
    #[inline]
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// Probability of class 1. Panics in debug builds on a dimension mismatch;
    /// use [`predict_prob_beta`] for a checked call.
    #[inline]
    pub fn prob(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coefficients.len());
        logistic(self.linear_predictor(x))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.coefficients.len() + 1);
        v.push(self.intercept);
        v.extend_from_slice(&self.coefficients);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(v[0], v[1..].to_vec())
    }
}

/// Uncertainty center `omega` and cutting threshold `gamma`, kept separate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifierRule {
    omega: f64,
    gamma: f64,
}

impl ClassifierRule {
    pub fn new(omega: f64, gamma: f64) -> Result<Self, ModelError> {
        check_open_unit("omega", omega)?;
        check_open_unit("gamma", gamma)?;
        Ok(Self { omega, gamma })
    }

    /// The coupled rule with a single level for both roles.
    pub fn coupled(level: f64) -> Result<Self, ModelError> {
        Self::new(level, level)
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl Default for ClassifierRule {
    fn default() -> Self {
        Self {
            omega: 0.5,
            gamma: 0.5,
        }
    }
}

pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ModelError::ProbabilityOutOfRange { name, value })
    }
}

/// Symmetric Fisher information matrix of β, dimension `(p+1)×(p+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    dim: usize,
    entries: Vec<f64>,
}

impl InfoMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub(crate) fn from_flat(dim: usize, entries: Vec<f64>) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    /// Log-determinant, or `None` when a Cholesky pivot falls below
    /// `1e-12 · trace`.
    pub fn logdet(&self) -> Option<f64> {
        linalg::logdet_psd(&self.entries, self.dim)
    }

    pub fn is_singular(&self) -> bool {
        self.logdet().is_none()
    }

    /// Adds `F(1-F) x̃ x̃ᵀ` for one design point.
    pub fn add_point(&mut self, beta: &BetaVector, x: &[f64]) {
        let xt = augmented(x);
        linalg::add_outer(&mut self.entries, self.dim, logistic_variance(beta.linear_predictor(x)), &xt);
    }
}

impl std::ops::Add for &InfoMatrix {
    type Output = InfoMatrix;

    fn add(self, rhs: &InfoMatrix) -> InfoMatrix {
        assert_eq!(self.dim, rhs.dim);
        let entries = self
            .entries
            .iter()
            .zip(&rhs.entries)
            .map(|(a, b)| a + b)
            .collect();
        InfoMatrix::from_flat(self.dim, entries)
    }
}

/// `x̃ = (1, x)`.
pub fn augmented(x: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + 1);
    v.push(1.0);
    v.extend_from_slice(x);
    v
}

fn check_dim(expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::DimensionMismatch { expected, found })
    }
}

pub fn predict_prob(theta: &ThetaParams, x: &[f64]) -> Result<f64, ModelError> {
    check_dim(theta.dim(), x.len())?;
    let z: f64 = theta.weights.iter().zip(x).map(|(w, v)| w * v).sum();
    Ok(logistic((z - theta.mu) / theta.sigma))
}

pub fn predict_prob_beta(beta: &BetaVector, x: &[f64]) -> Result<f64, ModelError> {
    check_dim(beta.dim(), x.len())?;
    Ok(beta.prob(x))
}

pub fn theta_to_beta(theta: &ThetaParams) -> BetaVector {
    BetaVector {
        intercept: -theta.mu / theta.sigma,
        coefficients: theta.weights.iter().map(|w| w / theta.sigma).collect(),
    }
}

pub fn beta_to_theta(beta: &BetaVector) -> Result<ThetaParams, ModelError> {
    if beta.coefficients.is_empty() {
        return Err(ModelError::NoFeatures);
    }
    if let Some(c) = beta.coefficients.iter().find(|c| !(**c > 0.0)) {
        return Err(ModelError::NotRepresentable(format!(
            "coefficient {c} is not positive"
        )));
    }
    let total: f64 = beta.coefficients.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(ModelError::NotRepresentable(format!(
            "coefficient sum {total}"
        )));
    }
    let sigma = 1.0 / total;
    let weights = beta.coefficients.iter().map(|c| c / total).collect();
    ThetaParams::new(-beta.intercept * sigma, sigma, weights)
}

/// `Σ_i F(x_i)(1 - F(x_i)) x̃_i x̃_iᵀ` over the rows of the design.
pub fn fisher_information<R: AsRef<[f64]>>(
    beta: &BetaVector,
    rows: &[R],
) -> Result<InfoMatrix, ModelError> {
    let mut info = InfoMatrix::zeros(beta.dim() + 1);
    for row in rows {
        let x = row.as_ref();
        check_dim(beta.dim(), x.len())?;
        info.add_point(beta, x);
    }
    Ok(info)
}

/// Class decision: 1 iff `prob > gamma`; a tie goes to class 0.
pub fn classify(prob: f64, rule: &ClassifierRule) -> u8 {
    u8::from(prob > rule.gamma)
}

/// Perpendicular distance from `x` to the hyperplane `x̃ᵀβ = logit(level)`.
pub fn boundary_distance(beta: &BetaVector, level: f64, x: &[f64]) -> Result<f64, ModelError> {
    check_dim(beta.dim(), x.len())?;
    check_open_unit("level", level)?;
    let norm = beta.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(ModelError::DegenerateBoundary);
    }
    Ok((beta.linear_predictor(x) - logit(level)).abs() / norm)
}
