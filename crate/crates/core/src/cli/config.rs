use std::fmt::Write as _;
use std::path::PathBuf;

use crate::baseline::AdslEstimator;
use crate::eval::ErrorScope;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Synthetic,
    /// Rare positive class; see `UnevenDesign`.
    Uneven,
    Bupa,
    Wdbc,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Scenario::Synthetic => "synthetic",
            Scenario::Uneven => "uneven",
            Scenario::Bupa => "bupa",
            Scenario::Wdbc => "wdbc",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "synthetic" => Some(Scenario::Synthetic),
            "uneven" => Some(Scenario::Uneven),
            "bupa" => Some(Scenario::Bupa),
            "wdbc" => Some(Scenario::Wdbc),
            _ => None,
        }
    }
}

/// Population behind the `uneven` scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnevenDesign {
    /// The level grid with levels shifted to the requested positive
    /// fraction, `uneven_n / 19` points per level.
    Levels,
    /// Uniform square with a logistic label model.
    Box,
}

impl UnevenDesign {
    pub fn name(self) -> &'static str {
        match self {
            UnevenDesign::Levels => "levels",
            UnevenDesign::Box => "box",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Proposed,
    Adsl,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Adsl => "adsl",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub methods: Vec<Method>,
    pub n0: usize,
    /// Warm-start size for ADSL when it differs from `n0`.
    pub adsl_n0: Option<usize>,
    pub budget: usize,
    pub omega: f64,
    pub gamma: f64,
    pub m_prior: usize,
    pub reps: usize,
    pub k_cap: Option<usize>,
    pub k0: usize,
    pub seed: u64,
    pub bupa_path: PathBuf,
    pub wdbc_path: PathBuf,
    pub output_dir: PathBuf,
    pub points_per_level: usize,
    pub uneven_n: usize,
    pub uneven_positive_fraction: f64,
    pub uneven_design: UnevenDesign,
    pub adsl_estimator: AdslEstimator,
    pub error_scope: ErrorScope,
    pub grid_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Synthetic,
            methods: vec![Method::Proposed, Method::Adsl],
            n0: 0,
            adsl_n0: None,
            budget: 30,
            omega: 0.5,
            gamma: 0.5,
            m_prior: 1000,
            reps: 100,
            k_cap: None,
            k0: 20,
            seed: 1,
            bupa_path: PathBuf::from("data/bupa.data"),
            wdbc_path: PathBuf::from("data/wdbc.data"),
            output_dir: PathBuf::from("out"),
            points_per_level: 5,
            uneven_n: 400,
            uneven_positive_fraction: 0.2,
            uneven_design: UnevenDesign::Levels,
            adsl_estimator: AdslEstimator::MleWithMapFallback,
            error_scope: ErrorScope::FullPool,
            grid_points: crate::eval::DEFAULT_GRID_POINTS,
        }
    }
}

/// Every key accepted in config files and as `--key` flags (with `-` for `_`).
pub const KEYS: &[&str] = &[
    "scenario",
    "methods",
    "n0",
    "adsl_n0",
    "budget",
    "omega",
    "gamma",
    "m_prior",
    "reps",
    "k_cap",
    "k0",
    "seed",
    "bupa_path",
    "wdbc_path",
    "output_dir",
    "points_per_level",
    "uneven_n",
    "uneven_positive_fraction",
    "uneven_design",
    "adsl_estimator",
    "error_scope",
    "grid_points",
];

impl ExperimentConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        fn optional(key: &str, v: &str) -> Result<Option<usize>, String> {
            if v.is_empty() || v == "auto" || v == "none" {
                Ok(None)
            } else {
                num(key, v).map(Some)
            }
        }
        match key {
            "scenario" => {
                self.scenario = Scenario::parse(value).ok_or_else(|| {
                    format!("scenario: expected synthetic, uneven, bupa or wdbc, got {value:?}")
                })?
            }
            "methods" => {
                let mut methods = Vec::new();
                for m in value.split(',').map(str::trim).filter(|m| !m.is_empty()) {
                    methods.push(match m {
                        "proposed" => Method::Proposed,
                        "adsl" => Method::Adsl,
                        other => return Err(format!("methods: unknown method {other:?}")),
                    });
                }
                self.methods = methods;
            }
            "n0" => self.n0 = num(key, value)?,
            "adsl_n0" => self.adsl_n0 = optional(key, value)?,
            "budget" => self.budget = num(key, value)?,
            "omega" => self.omega = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "m_prior" => self.m_prior = num(key, value)?,
            "reps" => self.reps = num(key, value)?,
            "k_cap" => self.k_cap = optional(key, value)?,
            "k0" => self.k0 = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "bupa_path" => self.bupa_path = PathBuf::from(value),
            "wdbc_path" => self.wdbc_path = PathBuf::from(value),
            "output_dir" => self.output_dir = PathBuf::from(value),
            "points_per_level" => self.points_per_level = num(key, value)?,
            "uneven_n" => self.uneven_n = num(key, value)?,
            "uneven_positive_fraction" => self.uneven_positive_fraction = num(key, value)?,
            "uneven_design" => {
                self.uneven_design = match value {
                    "levels" => UnevenDesign::Levels,
                    "box" => UnevenDesign::Box,
                    other => return Err(format!("uneven_design: expected levels or box, got {other:?}")),
                }
            }
            "adsl_estimator" => {
                self.adsl_estimator = match value {
                    "mle" | "mle-with-map-fallback" => AdslEstimator::MleWithMapFallback,
                    "map" => AdslEstimator::Map,
                    other => return Err(format!("adsl_estimator: expected mle or map, got {other:?}")),
                }
            }
            "error_scope" => {
                self.error_scope = match value {
                    "full" => ErrorScope::FullPool,
                    "unlabeled" => ErrorScope::Unlabeled,
                    other => return Err(format!("error_scope: expected full or unlabeled, got {other:?}")),
                }
            }
            "grid_points" => self.grid_points = num(key, value)?,
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment. Errors carry line
    /// numbers and do not stop later lines from being checked.
    pub fn apply_file(&mut self, text: &str, errors: &mut Vec<String>) -> Vec<String> {
        let mut seen = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("config line {}: expected key = value", k + 1));
                continue;
            };
            let key = key.trim();
            if let Err(e) = self.set(key, value) {
                errors.push(format!("config line {}: {e}", k + 1));
            } else {
                seen.push(key.to_string());
            }
        }
        seen
    }

    /// Semantic checks, all reported at once.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.budget < 1 {
            errors.push("budget must be at least 1".into());
        }
        if self.methods.is_empty() {
            errors.push("methods must name at least one method".into());
        }
        for (name, v) in [("omega", self.omega), ("gamma", self.gamma)] {
            if !(v > 0.0 && v < 1.0) {
                errors.push(format!("{name} must lie in (0, 1), got {v}"));
            }
        }
        if !(self.uneven_positive_fraction > 0.0 && self.uneven_positive_fraction < 1.0) {
            errors.push(format!(
                "uneven_positive_fraction must lie in (0, 1), got {}",
                self.uneven_positive_fraction
            ));
        }
        if self.m_prior < 1 {
            errors.push("m_prior must be at least 1".into());
        }
        if self.reps < 1 {
            errors.push("reps must be at least 1".into());
        }
        if self.k0 < 1 {
            errors.push("k0 must be at least 1".into());
        }
        if self.k_cap == Some(0) {
            errors.push("k_cap must be at least 1".into());
        }
        if self.points_per_level < 1 {
            errors.push("points_per_level must be at least 1".into());
        }
        if self.grid_points < 1 {
            errors.push("grid_points must be at least 1".into());
        }
        let pool_size = match self.scenario {
            Scenario::Synthetic => Some(19 * self.points_per_level),
            Scenario::Uneven => Some(self.uneven_pool_size()),
            _ => None,
        };
        let largest_n0 = self.n0.max(self.adsl_n0.unwrap_or(0));
        if let Some(n) = pool_size {
            if largest_n0 + self.budget > n {
                errors.push(format!(
                    "n0 + budget = {} exceeds the pool size {n}",
                    largest_n0 + self.budget
                ));
            }
        }
        match self.scenario {
            Scenario::Bupa if !self.bupa_path.is_file() => {
                errors.push(format!("bupa_path {} does not exist", self.bupa_path.display()))
            }
            Scenario::Wdbc if !self.wdbc_path.is_file() => {
                errors.push(format!("wdbc_path {} does not exist", self.wdbc_path.display()))
            }
            _ => {}
        }
        errors
    }

    pub fn uneven_pool_size(&self) -> usize {
        match self.uneven_design {
            UnevenDesign::Levels => 19 * self.uneven_points_per_level(),
            UnevenDesign::Box => self.uneven_n,
        }
    }

    pub fn uneven_points_per_level(&self) -> usize {
        (self.uneven_n / 19).max(1)
    }

    pub fn adsl_n0(&self) -> usize {
        self.adsl_n0.unwrap_or(self.n0)
    }

    /// The resolved configuration as a config file.
    pub fn to_config_text(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |k| k.to_string());
        let methods: Vec<&str> = self.methods.iter().map(|m| m.name()).collect();
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("writing to a String");
        kv("scenario", self.scenario.name().into());
        kv("methods", methods.join(","));
        kv("n0", self.n0.to_string());
        kv("adsl_n0", opt(self.adsl_n0));
        kv("budget", self.budget.to_string());
        kv("omega", format!("{:?}", self.omega));
        kv("gamma", format!("{:?}", self.gamma));
        kv("m_prior", self.m_prior.to_string());
        kv("reps", self.reps.to_string());
        kv("k_cap", opt(self.k_cap));
        kv("k0", self.k0.to_string());
        kv("seed", self.seed.to_string());
        kv("bupa_path", self.bupa_path.display().to_string());
        kv("wdbc_path", self.wdbc_path.display().to_string());
        kv("output_dir", self.output_dir.display().to_string());
        kv("points_per_level", self.points_per_level.to_string());
        kv("uneven_n", self.uneven_n.to_string());
        kv("uneven_positive_fraction", format!("{:?}", self.uneven_positive_fraction));
        kv("uneven_design", self.uneven_design.name().into());
        kv(
            "adsl_estimator",
            match self.adsl_estimator {
                AdslEstimator::MleWithMapFallback => "mle",
                AdslEstimator::Map => "map",
            }
            .into(),
        );
        kv(
            "error_scope",
            match self.error_scope {
                ErrorScope::FullPool => "full",
                ErrorScope::Unlabeled => "unlabeled",
            }
            .into(),
        );
        kv("grid_points", self.grid_points.to_string());
        out
    }
}
