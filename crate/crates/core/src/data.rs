//! Synthetic pools, prior elicitation, and the BUPA/WDBC loaders.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::design::{DesignError, Pool};
use crate::inference::PriorSpec;
use crate::model::{logistic, logit, ThetaParams};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate generator: the second weight is zero")]
    DegenerateGenerator,
    #[error("degenerate elicitation: {0}")]
    DegenerateElicitation(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}: no usable rows")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Pool(#[from] DesignError),
}

/// Level-grid generator: for `j = 1..=levels` the level is
/// `alpha_j = j / (levels + 1)` (moved by `level_shift` on the logit scale),
/// `x1` is uniform on the shifted interval
/// `[a0 + step (j-1), b0 + step (j-1)]`, `x2` is placed on the
/// `F = alpha_j` contour and `Y ~ Bernoulli(alpha_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub theta_true: ThetaParams,
    pub points_per_level: usize,
    pub levels: usize,
    pub a0: f64,
    pub b0: f64,
    pub step: f64,
    /// Added to `logit(alpha_j)`; 0 keeps the classes balanced.
    pub level_shift: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// The 95-point study design with `theta* = (0.5, 1, (0.7, 0.3))`.
    pub fn standard(seed: u64) -> Self {
        Self {
            theta_true: ThetaParams::new(0.5, 1.0, vec![0.7, 0.3]).expect("valid constants"),
            points_per_level: 5,
            levels: 19,
            a0: -3.0,
            b0: 0.0,
            step: 0.15,
            level_shift: 0.0,
            seed,
        }
    }

    /// The same grid with levels shifted so that their mean, the expected
    /// positive fraction, equals `fraction`.
    pub fn with_positive_fraction(self, fraction: f64) -> Result<Self, DataError> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(DataError::InvalidSpec(format!("positive fraction {fraction}")));
        }
        let mean_level = |shift: f64| {
            let spec = Self {
                level_shift: shift,
                ..self.clone()
            };
            (1..=spec.levels).map(|j| spec.level(j)).sum::<f64>() / spec.levels as f64
        };
        let (mut lo, mut hi) = (-50.0, 50.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mean_level(mid) < fraction {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            level_shift: 0.5 * (lo + hi),
            ..self
        })
    }

    pub fn n(&self) -> usize {
        self.points_per_level * self.levels
    }

    pub fn level(&self, j: usize) -> f64 {
        let base = j as f64 / (self.levels + 1) as f64;
        if self.level_shift == 0.0 {
            base
        } else {
            logistic(logit(base) + self.level_shift)
        }
    }
}

/// Generates the level-grid pool. Rows are grouped by level in order.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Pool, DataError> {
    let w = spec.theta_true.weights();
    if w.len() != 2 {
        return Err(DataError::InvalidSpec(format!("need 2 features, got {}", w.len())));
    }
    if w[1] == 0.0 {
        return Err(DataError::DegenerateGenerator);
    }
    if !(spec.step > 0.0) || !(spec.b0 > spec.a0) || spec.levels == 0 || spec.points_per_level == 0 {
        return Err(DataError::InvalidSpec(format!(
            "levels={} points_per_level={} a0={} b0={} step={}",
            spec.levels, spec.points_per_level, spec.a0, spec.b0, spec.step
        )));
    }
    let (mu, sigma) = (spec.theta_true.mu(), spec.theta_true.sigma());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut xs = Vec::with_capacity(spec.n());
    let mut ys = Vec::with_capacity(spec.n());
    for j in 1..=spec.levels {
        let alpha = spec.level(j);
        let shift = spec.step * (j - 1) as f64;
        let (lo, hi) = (spec.a0 + shift, spec.b0 + shift);
        for _ in 0..spec.points_per_level {
            let x1 = rng.random_range(lo..hi);
            let x2 = (mu + sigma * logit(alpha) - w[0] * x1) / w[1];
            xs.push(vec![x1, x2]);
            ys.push(u8::from(rng.random::<f64>() < alpha));
        }
    }
    Ok(Pool::new(xs, ys)?)
}

/// Population generator with a rare positive class: `x` uniform on the
/// square `[-half_width, half_width]^2` and `Y ~ Bernoulli(F(x | theta))`,
/// where `mu` is solved so that the expected positive fraction over the
/// square equals `positive_fraction`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnevenSpec {
    pub n: usize,
    pub weights: Vec<f64>,
    pub sigma: f64,
    pub positive_fraction: f64,
    pub half_width: f64,
    pub seed: u64,
}

impl UnevenSpec {
    pub fn default_with_seed(seed: u64) -> Self {
        Self {
            n: 400,
            weights: vec![0.7, 0.3],
            sigma: 0.25,
            positive_fraction: 0.2,
            half_width: 3.0,
            seed,
        }
    }

    /// The true parameter implied by the spec.
    pub fn theta_true(&self) -> Result<ThetaParams, DataError> {
        if self.weights.len() != 2 {
            return Err(DataError::InvalidSpec("the uneven generator has 2 features".into()));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) || !(self.half_width > 0.0) {
            return Err(DataError::InvalidSpec(format!(
                "positive_fraction={} half_width={}",
                self.positive_fraction, self.half_width
            )));
        }
        let probe = ThetaParams::new(0.0, self.sigma, self.weights.clone())
            .map_err(|e| DataError::InvalidSpec(e.to_string()))?;
        let (w, s, h) = (probe.weights().to_vec(), probe.sigma(), self.half_width);
        // Expected positive fraction is decreasing in mu; bisect it.
        let frac = |mu: f64| box_mean(h, |x1, x2| logistic((w[0] * x1 + w[1] * x2 - mu) / s));
        let (mut lo, mut hi) = (-2.0 * h - 20.0 * s, 2.0 * h + 20.0 * s);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if frac(mid) > self.positive_fraction {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        ThetaParams::new(0.5 * (lo + hi), s, w).map_err(|e| DataError::InvalidSpec(e.to_string()))
    }
}

/// Mean of `f` over the square `[-h, h]^2` by a 400×400 midpoint rule.
fn box_mean(h: f64, f: impl Fn(f64, f64) -> f64) -> f64 {
    const K: usize = 400;
    let step = 2.0 * h / K as f64;
    let mut total = 0.0;
    for i in 0..K {
        let x1 = -h + step * (i as f64 + 0.5);
        for j in 0..K {
            total += f(x1, -h + step * (j as f64 + 0.5));
        }
    }
    total / (K * K) as f64
}

pub fn generate_uneven(spec: &UnevenSpec) -> Result<(Pool, ThetaParams), DataError> {
    if spec.n == 0 {
        return Err(DataError::InvalidSpec("n must be positive".into()));
    }
    let theta = spec.theta_true()?;
    let beta = crate::model::theta_to_beta(&theta);
    let h = spec.half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let x = vec![rng.random_range(-h..h), rng.random_range(-h..h)];
        ys.push(u8::from(rng.random::<f64>() < beta.prob(&x)));
        xs.push(x);
    }
    Ok((Pool::new(xs, ys)?, theta))
}

/// Writes a 2-feature pool as CSV with header `x1,x2,y`.
pub fn export_synthetic_csv(pool: &Pool, path: &Path) -> Result<(), DataError> {
    let mut out = String::from("x1,x2,y\n");
    for (x, y) in pool.features().iter().zip(pool.true_labels()) {
        let fields: Vec<String> = x.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{},{y}", fields.join(",")).expect("writing to a String");
    }
    fs::write(path, out)?;
    Ok(())
}

/// Data-driven priors from the pool projected on `w0`.
///
/// With `z_i = w0·x_i`, `z_l = min z`, `z_u = max z`:
/// `mu0 = (z_l + z_u)/2`, `sigma0 = (z_u - z_l) / (logit(alpha_u) - logit(alpha_l))`,
/// `sigma_mu2` is the sample variance of `z`, and the Dirichlet is flat at 3/2.
pub fn elicit_priors(features: &[Vec<f64>], alpha_l: f64, alpha_u: f64, w0: &[f64]) -> Result<PriorSpec, DataError> {
    if !(0.0 < alpha_l && alpha_l < alpha_u && alpha_u < 1.0) {
        return Err(DataError::DegenerateElicitation(format!(
            "need 0 < alpha_l < alpha_u < 1, got {alpha_l}, {alpha_u}"
        )));
    }
    if features.is_empty() {
        return Err(DataError::DegenerateElicitation("empty pool".into()));
    }
    if let Some(x) = features.iter().find(|x| x.len() != w0.len()) {
        return Err(DataError::DegenerateElicitation(format!(
            "w0 has {} entries but a row has {}",
            w0.len(),
            x.len()
        )));
    }
    let z: Vec<f64> = features
        .iter()
        .map(|x| x.iter().zip(w0).map(|(a, b)| a * b).sum())
        .collect();
    let (zl, zu) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v)));
    if !(zu > zl) {
        return Err(DataError::DegenerateElicitation("z is constant over the pool".into()));
    }
    let (_, var) = mean_var(&z);
    PriorSpec::new(
        0.5 * (zl + zu),
        var,
        (zu - zl) / (logit(alpha_u) - logit(alpha_l)),
        vec![1.5; w0.len()],
    )
    .map_err(|e| DataError::DegenerateElicitation(e.to_string()))
}

/// Mean and `n - 1` sample variance.
fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Bupa,
    Wdbc,
}

impl DatasetFormat {
    pub fn name(self) -> &'static str {
        match self {
            DatasetFormat::Bupa => "bupa",
            DatasetFormat::Wdbc => "wdbc",
        }
    }

    fn fields(self) -> usize {
        match self {
            DatasetFormat::Bupa => 7,
            DatasetFormat::Wdbc => 32,
        }
    }

    /// Row and positive counts of the canonical files.
    pub fn expected_counts(self) -> (usize, usize) {
        match self {
            DatasetFormat::Bupa => (345, 145),
            DatasetFormat::Wdbc => (569, 212),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub name: String,
    pub n: usize,
    pub p: usize,
    pub positives: usize,
    pub positive_fraction: f64,
    /// `(mean, sd)` of each retained feature before scaling.
    pub standardization: Vec<(f64, f64)>,
    /// Original column positions of the retained features.
    pub retained: Vec<usize>,
    /// Point-biserial correlation of each retained feature with the label.
    pub label_correlations: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Parses, labels and standardizes a BUPA or WDBC file.
pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<(Pool, DatasetMeta), DataError> {
    let text = fs::read_to_string(path)?;
    parse_dataset(&text, format)
}

pub fn parse_dataset(text: &str, format: DatasetFormat) -> Result<(Pool, DatasetMeta), DataError> {
    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != format.fields() {
            return Err(DataError::Parse {
                line: line_no,
                message: format!("expected {} fields, found {}", format.fields(), fields.len()),
            });
        }
        let number = |s: &str| -> Result<f64, DataError> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DataError::Parse {
                    line: line_no,
                    message: format!("non-numeric field {s:?}"),
                })
        };
        let (x, y) = match format {
            DatasetFormat::Bupa => {
                let x = fields[..6].iter().map(|s| number(s)).collect::<Result<Vec<_>, _>>()?;
                let y = match fields[6] {
                    "1" => 0,
                    "2" => 1,
                    other => {
                        return Err(DataError::Parse {
                            line: line_no,
                            message: format!("selector must be 1 or 2, found {other:?}"),
                        })
                    }
                };
                (x, y)
            }
            DatasetFormat::Wdbc => {
                let y = match fields[1] {
                    "M" => 1,
                    "B" => 0,
                    other => {
                        return Err(DataError::Parse {
                            line: line_no,
                            message: format!("diagnosis must be M or B, found {other:?}"),
                        })
                    }
                };
                let x = fields[2..].iter().map(|s| number(s)).collect::<Result<Vec<_>, _>>()?;
                (x, y)
            }
        };
        raw.push(x);
        labels.push(y);
    }
    if raw.is_empty() {
        return Err(DataError::Empty(format.name().into()));
    }

    let n = raw.len();
    let width = raw[0].len();
    let mut warnings = Vec::new();
    let mut standardization = Vec::new();
    let mut retained = Vec::new();
    for j in 0..width {
        let col: Vec<f64> = raw.iter().map(|r| r[j]).collect();
        let (mean, var) = mean_var(&col);
        let sd = var.sqrt();
        if sd > 0.0 && sd.is_finite() {
            standardization.push((mean, sd));
            retained.push(j);
        } else {
            warnings.push(format!("feature {j} is constant and was dropped"));
        }
    }
    let features: Vec<Vec<f64>> = raw
        .iter()
        .map(|r| {
            retained
                .iter()
                .zip(&standardization)
                .map(|(&j, (m, s))| (r[j] - m) / s)
                .collect()
        })
        .collect();

    let positives = labels.iter().filter(|&&y| y == 1).count();
    let (expected_n, expected_pos) = format.expected_counts();
    if n != expected_n {
        warnings.push(format!("expected {expected_n} rows, found {n}"));
    }
    if positives != expected_pos {
        warnings.push(format!("expected {expected_pos} positives, found {positives}"));
    }
    let label_correlations: Vec<f64> = (0..retained.len())
        .map(|j| point_biserial(&features, &labels, j))
        .collect();
    for (j, r) in label_correlations.iter().enumerate() {
        if *r < 0.0 {
            warnings.push(format!(
                "feature {} is negatively correlated with the label (r = {r:.3})",
                retained[j]
            ));
        }
    }
    let p = retained.len();
    let meta = DatasetMeta {
        name: format.name().into(),
        n,
        p,
        positives,
        positive_fraction: positives as f64 / n as f64,
        standardization,
        retained,
        label_correlations,
        warnings,
    };
    Ok((Pool::new(features, labels)?, meta))
}

/// Pearson correlation between column `j` and the 0/1 label.
fn point_biserial(features: &[Vec<f64>], labels: &[u8], j: usize) -> f64 {
    let x: Vec<f64> = features.iter().map(|r| r[j]).collect();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    let (mx, vx) = mean_var(&x);
    let (my, vy) = mean_var(&y);
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() as f64 - 1.0);
    cov / (vx * vy).sqrt()
}
