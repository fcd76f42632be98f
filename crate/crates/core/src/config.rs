//! Experiment configuration: defaults, JSON manifests, and validation that
//! runs before any simulation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_model, Model, Sde, StateDomain};
use crate::runner::DEFAULT_REFINEMENT;
use crate::scheme::Scheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Everything that determines a report's content. Worker count and output
/// locations are excluded from the echo so they never change report bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    pub x0: f64,
    pub t: f64,
    pub n_list: Vec<usize>,
    pub n: usize,
    pub paths: usize,
    pub seed: u64,
    pub refinement: usize,
    /// Empty selects the model's default schemes.
    pub schemes: Vec<String>,
    pub functional: String,
    pub tail_x: Vec<f64>,
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub format: Format,
    #[serde(skip_serializing)]
    pub dump_path: Option<PathBuf>,
    #[serde(skip_serializing)]
    pub dump_traj: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: "gbm".into(),
            params: BTreeMap::new(),
            x0: 1.0,
            t: 1.0,
            n_list: vec![16, 32, 64, 128, 256],
            n: 1024,
            paths: 1000,
            seed: 0,
            refinement: DEFAULT_REFINEMENT,
            schemes: Vec::new(),
            functional: "clamp_unit".into(),
            tail_x: vec![2.0, 4.0, 8.0],
            workers: None,
            output: None,
            format: Format::Json,
            dump_path: None,
            dump_traj: None,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn build_model(&self) -> Result<Model> {
        build_model(&self.model, &self.params)
    }

    /// Configured schemes, or the model default: Euler and Milstein on the
    /// whole line, symmetrized Euler on the half line.
    pub fn resolved_schemes(&self, model: &Model) -> Result<Vec<Scheme>> {
        if !self.schemes.is_empty() {
            return self.schemes.iter().map(|s| Scheme::parse(s)).collect();
        }
        Ok(match model.state_domain {
            StateDomain::WholeLine => vec![Scheme::Euler, Scheme::Milstein],
            StateDomain::PositiveHalfLine => vec![Scheme::SymmetrizedEuler],
        })
    }

    /// First configured scheme, or Euler / symmetrized Euler by domain.
    pub fn single_scheme(&self, model: &Model) -> Result<Scheme> {
        if let Some(s) = self.schemes.first() {
            return Scheme::parse(s);
        }
        Ok(match model.state_domain {
            StateDomain::WholeLine => Scheme::Euler,
            StateDomain::PositiveHalfLine => Scheme::SymmetrizedEuler,
        })
    }

    fn validate_common(&self) -> Result<()> {
        if !(self.t > 0.0) || !self.t.is_finite() {
            return config_err(format!("T must be positive and finite, got {}", self.t));
        }
        if !self.x0.is_finite() {
            return config_err("x0 must be finite");
        }
        if self.paths < 1 {
            return config_err("paths must be at least 1");
        }
        if self.refinement < 1 {
            return config_err("refinement must be at least 1");
        }
        Ok(())
    }

    fn validate_n_list(&self, min_len: usize) -> Result<()> {
        if self.n_list.len() < min_len {
            return config_err(format!("n-list needs at least {min_len} entries"));
        }
        if let Some(n) = self.n_list.iter().find(|n| !n.is_power_of_two()) {
            return config_err(format!("n-list entry {n} is not a power of two"));
        }
        if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return config_err("n-list must be strictly increasing");
        }
        let fine = self.refinement * self.n_list.last().expect("nonempty");
        if let Some(n) = self.n_list.iter().find(|n| !fine.is_multiple_of(**n)) {
            return config_err(format!("n-list entry {n} does not divide the fine grid {fine}"));
        }
        Ok(())
    }

    fn validate_n(&self) -> Result<()> {
        if !self.n.is_power_of_two() {
            return config_err(format!("n = {} is not a power of two", self.n));
        }
        Ok(())
    }

    /// Checks everything that can be checked without simulating.
    pub fn validate(&self, command: Command) -> Result<()> {
        self.validate_common()?;
        let model = self.build_model()?;
        match command {
            Command::StrongRate => {
                self.validate_n_list(3)?;
                self.resolved_schemes(&model)?;
            }
            Command::WeakError => {
                self.validate_n_list(2)?;
                self.single_scheme(&model)?;
                crate::weakerror::FunctionalSpec::by_name(&self.functional)?;
                if self.paths < crate::weakerror::MIN_PATHS {
                    return config_err(format!("weak-error needs at least {} paths", crate::weakerror::MIN_PATHS));
                }
                if model.name() == "cev" {
                    if let Some(x) = self.tail_x.iter().find(|x| !(**x > self.x0)) {
                        return config_err(format!("tail threshold {x} must exceed x0 = {}", self.x0));
                    }
                }
            }
            Command::ErrorLaw => {
                self.validate_n()?;
                self.single_scheme(&model)?;
                if self.paths < 100 {
                    return config_err("error-law needs at least 100 paths");
                }
            }
            Command::Moments => {
                self.validate_n()?;
                if self.paths < 2 {
                    return config_err("moments needs at least 2 paths");
                }
            }
            Command::Zstats => self.validate_n()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    StrongRate,
    ErrorLaw,
    Zstats,
    Moments,
    WeakError,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Command::StrongRate => "strong-rate",
            Command::ErrorLaw => "error-law",
            Command::Zstats => "zstats",
            Command::Moments => "moments",
            Command::WeakError => "weak-error",
        }
    }
}
