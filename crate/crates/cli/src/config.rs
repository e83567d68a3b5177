//! Experiment configuration: flat `key = value` text with `#` comments.
//!
//! Values are layered: experiment defaults, then an optional config file,
//! then command-line flags. Every layer goes through [`ExperimentConfig::set`]
//! so the same validation applies to all of them.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use isl_core::distributions::Target;
use isl_core::training::{Orientation, TrainConfig};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    Bench1D,
    Density1D,
    Density2D,
    MonotoneOT,
    Bench2D,
    Props,
    Timing,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Self::Bench1D,
        Self::Density1D,
        Self::Density2D,
        Self::MonotoneOT,
        Self::Bench2D,
        Self::Props,
        Self::Timing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bench1D => "bench1d",
            Self::Density1D => "density1d",
            Self::Density2D => "density2d",
            Self::MonotoneOT => "ot",
            Self::Bench2D => "bench2d",
            Self::Props => "props",
            Self::Timing => "timing",
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(self, Self::Density2D | Self::Bench2D)
    }
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dual,
    Classical,
    Kde,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Dual => "dual",
            Self::Classical => "classical",
            Self::Kde => "kde",
        }
    }
}

impl FromStr for Method {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dual" => Ok(Self::Dual),
            "classical" => Ok(Self::Classical),
            "kde" => Ok(Self::Kde),
            _ => Err(CliError::Config(format!("unknown method '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub target: String,
    pub k: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub projections: usize,
    pub monotonicity_lambda: f64,
    pub n_real: usize,
    pub generated_per_batch: Option<usize>,
    pub temperature: f64,
    pub bandwidth: f64,
    pub anneal_from: Option<f64>,
    pub final_lr_fraction: f64,
    pub eval_samples: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Finite-difference half width for density estimates.
    pub delta: f64,
    /// Sample size used for density estimation.
    pub density_samples: usize,
    /// Grid points per axis for density CSVs.
    pub grid: usize,
    pub out: PathBuf,
    pub plots: bool,
    pub checkpoints: bool,
}

/// Every recognised key, in rendering order.
pub const KEYS: [&str; 23] = [
    "experiment",
    "target",
    "k",
    "epochs",
    "batch",
    "lr",
    "projections",
    "lambda",
    "n_real",
    "generated_per_batch",
    "temperature",
    "bandwidth",
    "anneal_from",
    "final_lr_fraction",
    "eval_samples",
    "seeds",
    "methods",
    "delta",
    "density_samples",
    "grid",
    "out",
    "plots",
    "checkpoints",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{value}'")))
}

fn parse_optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got '{value}'"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CliError::Config(format!("{key}: empty list")));
    }
    items.into_iter().map(|s| parse_num(key, s)).collect()
}

fn render_optional<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), T::to_string)
}

fn join<T, F: Fn(&T) -> String>(xs: &[T], f: F) -> String {
    xs.iter().map(f).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        let train = TrainConfig::default();
        let mut cfg = Self {
            experiment,
            target: "normal(4,2)".into(),
            k: train.k,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            projections: train.projections,
            monotonicity_lambda: train.monotonicity_lambda,
            n_real: train.n_real,
            generated_per_batch: train.generated_per_batch,
            temperature: train.surrogate.sigmoid_temperature,
            bandwidth: train.surrogate.onehot_bandwidth,
            anneal_from: train.anneal_from,
            final_lr_fraction: train.final_lr_fraction,
            eval_samples: train.eval_samples,
            seeds: vec![1],
            methods: vec![Method::Dual],
            delta: 0.1,
            density_samples: 100_000,
            grid: 200,
            out: PathBuf::from("isl-lab-out"),
            plots: false,
            checkpoints: true,
        };
        match experiment {
            Experiment::Density1D => {
                cfg.target = "cauchy(1,2)".into();
                cfg.generated_per_batch = Some(300);
                cfg.methods = vec![Method::Dual, Method::Kde];
            }
            Experiment::Density2D | Experiment::Bench2D => {
                cfg.target = "dualmoon".into();
                cfg.grid = 60;
                cfg.density_samples = 20_000;
            }
            Experiment::MonotoneOT => {
                cfg.generated_per_batch = Some(300);
                cfg.monotonicity_lambda = 100.0;
                cfg.bandwidth = 0.3;
                cfg.final_lr_fraction = 0.01;
            }
            Experiment::Timing => {
                cfg.target = "mixture(0.5*normal(5,2), 0.5*normal(-1,1))".into();
                cfg.methods = vec![Method::Dual, Method::Classical];
                cfg.epochs = 5;
                cfg.checkpoints = false;
            }
            Experiment::Bench1D => cfg.generated_per_batch = Some(300),
            Experiment::Props => {}
        }
        cfg
    }

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "experiment" => self.experiment = value.parse()?,
            "target" => self.target = value.to_string(),
            "k" => self.k = parse_num(key, value)?,
            "epochs" => self.epochs = parse_num(key, value)?,
            "batch" => self.batch_size = parse_num(key, value)?,
            "lr" => self.learning_rate = parse_num(key, value)?,
            "projections" => self.projections = parse_num(key, value)?,
            "lambda" => self.monotonicity_lambda = parse_num(key, value)?,
            "n_real" => self.n_real = parse_num(key, value)?,
            "generated_per_batch" => self.generated_per_batch = parse_optional(key, value)?,
            "temperature" => self.temperature = parse_num(key, value)?,
            "bandwidth" => self.bandwidth = parse_num(key, value)?,
            "anneal_from" => self.anneal_from = parse_optional(key, value)?,
            "final_lr_fraction" => self.final_lr_fraction = parse_num(key, value)?,
            "eval_samples" => self.eval_samples = parse_num(key, value)?,
            "seeds" => self.seeds = parse_list(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "delta" => self.delta = parse_num(key, value)?,
            "density_samples" => self.density_samples = parse_num(key, value)?,
            "grid" => self.grid = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "plots" => self.plots = parse_bool(key, value)?,
            "checkpoints" => self.checkpoints = parse_bool(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "experiment" => self.experiment.name().to_string(),
            "target" => self.target.clone(),
            "k" => self.k.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch" => self.batch_size.to_string(),
            "lr" => self.learning_rate.to_string(),
            "projections" => self.projections.to_string(),
            "lambda" => self.monotonicity_lambda.to_string(),
            "n_real" => self.n_real.to_string(),
            "generated_per_batch" => render_optional(&self.generated_per_batch),
            "temperature" => self.temperature.to_string(),
            "bandwidth" => self.bandwidth.to_string(),
            "anneal_from" => render_optional(&self.anneal_from),
            "final_lr_fraction" => self.final_lr_fraction.to_string(),
            "eval_samples" => self.eval_samples.to_string(),
            "seeds" => join(&self.seeds, u64::to_string),
            "methods" => join(&self.methods, |m| m.name().to_string()),
            "delta" => self.delta.to_string(),
            "density_samples" => self.density_samples.to_string(),
            "grid" => self.grid.to_string(),
            "out" => self.out.display().to_string(),
            "plots" => self.plots.to_string(),
            "checkpoints" => self.checkpoints.to_string(),
            _ => return None,
        })
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    /// Parses a full config. The `experiment` key picks the defaults and
    /// must be present.
    pub fn parse(text: &str) -> Result<Self> {
        let mut experiment = None;
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(("experiment", v)) = line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
                experiment = Some(v.parse()?);
            }
        }
        let experiment = experiment.ok_or_else(|| CliError::Config("missing 'experiment' key".into()))?;
        let mut cfg = Self::new(experiment);
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn parsed_target(&self) -> Result<Target> {
        self.target
            .parse::<Target>()
            .map_err(|e| CliError::Config(format!("target '{}': {e}", self.target)))
    }

    pub fn train_config(&self, seed: u64, method: Method) -> TrainConfig {
        let mut cfg = TrainConfig {
            k: self.k,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            orientation: if method == Method::Classical {
                Orientation::Classical
            } else {
                Orientation::Dual
            },
            projections: self.projections,
            monotonicity_lambda: self.monotonicity_lambda,
            seed,
            n_real: self.n_real,
            generated_per_batch: self.generated_per_batch,
            eval_samples: self.eval_samples,
            anneal_from: self.anneal_from,
            final_lr_fraction: self.final_lr_fraction,
            ..TrainConfig::default()
        };
        cfg.surrogate.sigmoid_temperature = self.temperature;
        cfg.surrogate.onehot_bandwidth = self.bandwidth;
        cfg
    }

    /// Checks everything that can be checked before any work starts.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Config("no seeds".into()));
        }
        if self.experiment != Experiment::Props {
            let target = self.parsed_target()?;
            let dims_ok = match target {
                Target::Univariate(_) => !self.experiment.is_2d(),
                Target::Bivariate(_) => self.experiment.is_2d(),
            };
            if !dims_ok {
                return Err(CliError::Config(format!(
                    "target '{}' has the wrong dimension for {}",
                    self.target,
                    self.experiment.name()
                )));
            }
            for m in &self.methods {
                let allowed = match self.experiment {
                    Experiment::Bench1D | Experiment::Timing => matches!(m, Method::Dual | Method::Classical),
                    Experiment::Density1D => matches!(m, Method::Dual | Method::Kde),
                    _ => *m == Method::Dual,
                };
                if !allowed {
                    return Err(CliError::Config(format!(
                        "method '{}' is not available for {}",
                        m.name(),
                        self.experiment.name()
                    )));
                }
            }
            self.train_config(self.seeds[0], Method::Dual)
                .validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
        }
        if !(self.delta > 0.0) {
            return Err(CliError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.grid < 2 {
            return Err(CliError::Config(format!("grid needs at least 2 points, got {}", self.grid)));
        }
        if self.density_samples == 0 {
            return Err(CliError::Config("density_samples must be positive".into()));
        }
        Ok(())
    }
}
