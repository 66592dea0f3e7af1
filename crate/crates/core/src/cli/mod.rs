//! The `bayal` command line: experiment configuration, orchestration and
//! output files.
//!
//! Configuration precedence is command-line flags, then the `--config`
//! file, then `BAYAL_OUTPUT_DIR` (output directory only), then defaults.

mod config;
mod plot;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::{ExperimentConfig, Method, Scenario, UnevenDesign, KEYS};
pub use plot::{emit_plots, PlotError};

use crate::baseline::AdslConfig;
use crate::data::{self, DataError, DatasetFormat, DatasetMeta, SyntheticSpec, UnevenSpec};
use crate::design::{EngineConfig, Pool};
use crate::eval::{self, EvalOptions, MethodKind, MethodSpec, Replicate, StudyResult};
use crate::model::ClassifierRule;

pub const OUTPUT_DIR_ENV: &str = "BAYAL_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "bayal", version, about = "Pool-based active learning experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Option<Command>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write gnuplot scripts for a curves.csv file.
    Plot {
        curves: PathBuf,
        /// Directory for the scripts (defaults to the directory of the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Default)]
pub struct RunArgs {
    /// key = value file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// synthetic | uneven | bupa | wdbc
    #[arg(long)]
    pub scenario: Option<String>,
    /// Comma-separated list of proposed, adsl.
    #[arg(long)]
    pub methods: Option<String>,
    #[arg(long)]
    pub n0: Option<String>,
    #[arg(long)]
    pub adsl_n0: Option<String>,
    #[arg(long)]
    pub budget: Option<String>,
    #[arg(long)]
    pub omega: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub m_prior: Option<String>,
    #[arg(long)]
    pub reps: Option<String>,
    #[arg(long)]
    pub k_cap: Option<String>,
    #[arg(long)]
    pub k0: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub bupa_path: Option<String>,
    #[arg(long)]
    pub wdbc_path: Option<String>,
    #[arg(long)]
    pub output_dir: Option<String>,
    #[arg(long)]
    pub points_per_level: Option<String>,
    #[arg(long)]
    pub uneven_n: Option<String>,
    #[arg(long)]
    pub uneven_positive_fraction: Option<String>,
    /// levels | box
    #[arg(long)]
    pub uneven_design: Option<String>,
    /// mle | map
    #[arg(long)]
    pub adsl_estimator: Option<String>,
    /// full | unlabeled
    #[arg(long)]
    pub error_scope: Option<String>,
    #[arg(long)]
    pub grid_points: Option<String>,
}

impl RunArgs {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all: [(&'static str, &Option<String>); 22] = [
            ("scenario", &self.scenario),
            ("methods", &self.methods),
            ("n0", &self.n0),
            ("adsl_n0", &self.adsl_n0),
            ("budget", &self.budget),
            ("omega", &self.omega),
            ("gamma", &self.gamma),
            ("m_prior", &self.m_prior),
            ("reps", &self.reps),
            ("k_cap", &self.k_cap),
            ("k0", &self.k0),
            ("seed", &self.seed),
            ("bupa_path", &self.bupa_path),
            ("wdbc_path", &self.wdbc_path),
            ("output_dir", &self.output_dir),
            ("points_per_level", &self.points_per_level),
            ("uneven_n", &self.uneven_n),
            ("uneven_positive_fraction", &self.uneven_positive_fraction),
            ("uneven_design", &self.uneven_design),
            ("adsl_estimator", &self.adsl_estimator),
            ("error_scope", &self.error_scope),
            ("grid_points", &self.grid_points),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

/// Merges defaults, the config file, the environment and flags, then
/// validates. Every problem is returned, not just the first.
pub fn resolve_config(args: &RunArgs, env_output_dir: Option<&str>) -> Result<ExperimentConfig, Vec<String>> {
    let mut cfg = ExperimentConfig::default();
    let mut errors = Vec::new();
    let mut from_file = Vec::new();
    if let Some(path) = &args.config {
        match fs::read_to_string(path) {
            Ok(text) => from_file = cfg.apply_file(&text, &mut errors),
            Err(e) => errors.push(format!("config {}: {e}", path.display())),
        }
    }
    if let Some(dir) = env_output_dir.filter(|d| !d.is_empty()) {
        if !from_file.iter().any(|k| k == "output_dir") {
            cfg.output_dir = PathBuf::from(dir);
        }
    }
    for (key, value) in args.pairs() {
        if let Err(e) = cfg.set(key, value) {
            errors.push(format!("--{}: {e}", key.replace('_', "-")));
        }
    }
    errors.extend(cfg.validate());
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration")]
    Invalid(Vec<String>),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Invalid(_) => "validation",
            CliError::Data(_) => "data",
            CliError::Plot(_) => "plot",
            CliError::Io { .. } => "io",
        }
    }

    /// Machine-readable error report.
    pub fn to_json(&self) -> String {
        let errors = match self {
            CliError::Invalid(list) => list.clone(),
            other => vec![other.to_string()],
        };
        serde_json::json!({ "status": "error", "kind": self.kind(), "errors": errors }).to_string()
    }
}

/// Method list expanded into runnable specs.
pub fn method_specs(cfg: &ExperimentConfig) -> Vec<MethodSpec> {
    cfg.methods
        .iter()
        .map(|m| match m {
            Method::Proposed => MethodSpec {
                name: m.name().into(),
                kind: MethodKind::Proposed(EngineConfig {
                    m_prior: cfg.m_prior,
                    k_cap: cfg.k_cap,
                    ..EngineConfig::default()
                }),
                rule: ClassifierRule::new(cfg.omega, cfg.gamma).expect("validated"),
                n0: cfg.n0,
                budget: cfg.budget,
            },
            // ADSL ties its boundary level to the cut-off.
            Method::Adsl => MethodSpec {
                name: m.name().into(),
                kind: MethodKind::Adsl(AdslConfig {
                    k0: cfg.k0,
                    estimator: cfg.adsl_estimator,
                    omega: cfg.gamma,
                    gamma: cfg.gamma,
                    ..AdslConfig::default()
                }),
                rule: ClassifierRule::coupled(cfg.gamma).expect("validated"),
                n0: cfg.adsl_n0(),
                budget: cfg.budget,
            },
        })
        .collect()
}

pub struct ExperimentOutput {
    pub study: StudyResult,
    pub seeds: Vec<u64>,
    pub meta: Option<DatasetMeta>,
    pub written: Vec<PathBuf>,
}

fn uniform_w0(p: usize) -> Vec<f64> {
    vec![1.0 / p as f64; p]
}

/// Runs the configured study in memory.
pub fn run_study(cfg: &ExperimentConfig) -> Result<(StudyResult, Vec<u64>, Option<DatasetMeta>), CliError> {
    let errors = cfg.validate();
    if !errors.is_empty() {
        return Err(CliError::Invalid(errors));
    }
    let seeds: Vec<u64> = (0..cfg.reps).map(|r| eval::replication_seed(cfg.seed, r)).collect();
    let methods = method_specs(cfg);
    let options = EvalOptions {
        scope: cfg.error_scope,
        grid_points: cfg.grid_points,
    };
    let (study, meta) = match cfg.scenario {
        Scenario::Synthetic => {
            let ppl = cfg.points_per_level;
            let make = |seed: u64| -> Result<Replicate, DataError> {
                let spec = SyntheticSpec {
                    points_per_level: ppl,
                    ..SyntheticSpec::standard(seed)
                };
                let pool = data::generate_synthetic(&spec)?;
                let prior = data::elicit_priors(pool.features(), 0.05, 0.95, &[0.5, 0.5])?;
                Ok(Replicate {
                    pool,
                    prior,
                    theta_true: Some(spec.theta_true),
                })
            };
            (eval::run_replications(make, &methods, &seeds, &options)?, None)
        }
        Scenario::Uneven if cfg.uneven_design == UnevenDesign::Levels => {
            let ppl = cfg.uneven_points_per_level();
            let fraction = cfg.uneven_positive_fraction;
            let make = |seed: u64| -> Result<Replicate, DataError> {
                let spec = SyntheticSpec {
                    points_per_level: ppl,
                    ..SyntheticSpec::standard(seed)
                }
                .with_positive_fraction(fraction)?;
                let pool = data::generate_synthetic(&spec)?;
                let prior = data::elicit_priors(pool.features(), 0.05, 0.95, &[0.5, 0.5])?;
                Ok(Replicate {
                    pool,
                    prior,
                    theta_true: Some(spec.theta_true),
                })
            };
            (eval::run_replications(make, &methods, &seeds, &options)?, None)
        }
        Scenario::Uneven => {
            let base = UnevenSpec {
                n: cfg.uneven_n,
                positive_fraction: cfg.uneven_positive_fraction,
                ..UnevenSpec::default_with_seed(0)
            };
            let theta = base.theta_true()?;
            let make = |seed: u64| -> Result<Replicate, DataError> {
                let (pool, _) = data::generate_uneven(&UnevenSpec { seed, ..base.clone() })?;
                let prior = data::elicit_priors(pool.features(), 0.05, 0.95, &uniform_w0(2))?;
                Ok(Replicate {
                    pool,
                    prior,
                    theta_true: Some(theta.clone()),
                })
            };
            (eval::run_replications(make, &methods, &seeds, &options)?, None)
        }
        Scenario::Bupa | Scenario::Wdbc => {
            let (path, format) = if cfg.scenario == Scenario::Bupa {
                (&cfg.bupa_path, DatasetFormat::Bupa)
            } else {
                (&cfg.wdbc_path, DatasetFormat::Wdbc)
            };
            let (pool, meta) = data::load_dataset(path, format)?;
            check_real_budget(cfg, &pool)?;
            let prior = data::elicit_priors(pool.features(), 0.05, 0.95, &uniform_w0(pool.dim()))?;
            let make = |_seed: u64| -> Result<Replicate, DataError> {
                Ok(Replicate {
                    pool: pool.clone(),
                    prior: prior.clone(),
                    theta_true: None,
                })
            };
            (eval::run_replications(make, &methods, &seeds, &options)?, Some(meta))
        }
    };
    Ok((study, seeds, meta))
}

fn check_real_budget(cfg: &ExperimentConfig, pool: &Pool) -> Result<(), CliError> {
    let largest_n0 = cfg.n0.max(cfg.adsl_n0.unwrap_or(0));
    if largest_n0 + cfg.budget > pool.len() {
        return Err(CliError::Invalid(vec![format!(
            "n0 + budget = {} exceeds the pool size {}",
            largest_n0 + cfg.budget,
            pool.len()
        )]));
    }
    Ok(())
}

/// Gnuplot data blocks: one per method, separated by two blank lines.
pub fn curves_dat(curves: &[eval::LearningCurve]) -> String {
    let mut out = String::new();
    for (i, c) in curves.iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        writeln!(out, "# {}\n# n_labeled mean_error mean_dist", c.method).unwrap();
        for s in &c.stages {
            let dist = s.mean_dist.map_or("NaN".to_string(), eval::fmt_sig);
            writeln!(out, "{} {} {dist}", s.n_labeled, eval::fmt_sig(s.mean_error)).unwrap();
        }
    }
    out
}

/// Manifest: the resolved config (usable as `--config`) preceded by
/// comments with the version, seeds, data notes and exclusions.
pub fn manifest(cfg: &ExperimentConfig, seeds: &[u64], meta: Option<&DatasetMeta>, study: &StudyResult) -> String {
    let mut out = String::new();
    writeln!(out, "# bayal {}", env!("CARGO_PKG_VERSION")).unwrap();
    let seed_list: Vec<String> = seeds.iter().map(u64::to_string).collect();
    writeln!(out, "# replication seeds: {}", seed_list.join(" ")).unwrap();
    if let Some(m) = meta {
        writeln!(out, "# dataset {}: n={} p={} positives={}", m.name, m.n, m.p, m.positives).unwrap();
        for w in &m.warnings {
            writeln!(out, "# warning: {w}").unwrap();
        }
    }
    for e in &study.exclusions {
        writeln!(out, "# excluded: {} replication {}: {}", e.method, e.replication, e.reason).unwrap();
    }
    out.push_str(&cfg.to_config_text());
    out
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    fs::write(&path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Runs the study and writes replications.csv, curves.csv, curves.dat and
/// manifest.txt into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, CliError> {
    let (study, seeds, meta) = run_study(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let written = vec![
        write(dir.join("replications.csv"), &eval::replications_csv(&study.rows))?,
        write(dir.join("curves.csv"), &eval::curves_csv(&study.curves))?,
        write(dir.join("curves.dat"), &curves_dat(&study.curves))?,
        write(dir.join("manifest.txt"), &manifest(cfg, &seeds, meta.as_ref(), &study))?,
    ];
    Ok(ExperimentOutput {
        study,
        seeds,
        meta,
        written,
    })
}

fn summarize(out: &ExperimentOutput) -> String {
    let mut s = String::new();
    for c in &out.study.curves {
        let last = c.stages.last();
        writeln!(
            s,
            "{}: {} stages, final n={} mean error {}, {} excluded",
            c.method,
            c.stages.len(),
            last.map_or(0, |p| p.n_labeled),
            last.map_or("-".into(), |p| eval::fmt_sig(p.mean_error)),
            c.excluded
        )
        .unwrap();
    }
    for p in &out.written {
        writeln!(s, "wrote {}", p.display()).unwrap();
    }
    s
}

pub fn execute(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Some(Command::Plot { curves, out }) => {
            let dir = out.unwrap_or_else(|| curves.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
            let written = emit_plots(&curves, &dir)?;
            Ok(written.iter().map(|p| format!("wrote {}\n", p.display())).collect())
        }
        None => {
            let env = std::env::var(OUTPUT_DIR_ENV).ok();
            let cfg = resolve_config(&cli.run, env.as_deref()).map_err(CliError::Invalid)?;
            let out = run_experiment(&cfg)?;
            Ok(summarize(&out))
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
