//! Run configuration: JSON file, flag overrides, validation.
//!
//! Precedence: built-in defaults < JSON config file < command-line flags,
//! with `BANGOPT_WORKERS` overriding the worker count above everything.
//! Every run writes the fully expanded effective configuration into its
//! sidecar so results are replayable from the artifacts alone.

use std::path::{Path, PathBuf};

use bangopt::protocols::ProtocolFamily;
use serde::{Deserialize, Serialize};

/// Error carrying the process exit code: 2 for configuration problems,
/// 1 for numerical failures.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<bangopt::Error> for CliError {
    fn from(e: bangopt::Error) -> Self {
        match &e {
            bangopt::Error::InvalidArgument { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// All run settings; every key can come from the JSON config or a flag.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Model: `lz` or `lmg`.
    pub model: String,
    /// LMG system size (ignored for `lz`).
    pub n: usize,
    /// Initial coupling; model default when absent (lz: -5, lmg: 0).
    pub g0: Option<f64>,
    /// Target coupling; model default when absent (lz: 0, lmg: 1).
    pub g1: Option<f64>,
    /// Energy bound; model default when absent (lz: 10, lmg: 1.7).
    pub g_max: Option<f64>,
    /// Protocol family label, e.g. `double-bang`, `crab(4)`.
    pub family: String,
    pub tau: Option<f64>,
    pub tau_list: Option<Vec<f64>>,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_step: Option<f64>,
    /// Sizes for `scan-size`.
    pub n_list: Option<Vec<usize>>,
    /// Bounds for `scan-gmax`.
    pub gmax_list: Option<Vec<f64>>,
    /// Coupling grid for `constant-scan`.
    pub g_list: Option<Vec<f64>>,
    /// Switch-time fractions for `saturated-scan`.
    pub fraction_list: Option<Vec<f64>>,
    pub restarts: Option<u32>,
    /// RNG seed; drawn from entropy and recorded when absent. Zero is a
    /// valid seed.
    pub seed: Option<u64>,
    /// Output path prefix; writes `<output>.csv` / `<output>.json` plus
    /// `<output>.meta.json`.
    pub output: String,
    pub workers: Option<usize>,
    /// Trajectory sample count.
    pub samples: usize,
    /// Minimal-time criterion for `fit-scaling`: `threshold` or `kink`.
    pub criterion: String,
    /// Threshold level for the `threshold` criterion.
    pub threshold: f64,
    /// Evaluation budget per restart (family default when absent).
    pub budget: Option<usize>,
    pub xatol: f64,
    pub fatol: f64,
    /// Convergence tolerance of the sampled-evolution doubling loop used
    /// for reported fidelities.
    pub evolve_tol: f64,
    /// Looser tolerance used while searching (defaults to `evolve_tol`).
    pub search_tol: Option<f64>,
    /// Records CSV consumed by `fit-scaling`.
    pub input: Option<PathBuf>,
    /// Explicit protocol parameter vector for `trajectory`.
    pub params: Option<Vec<f64>>,
    /// Record best-so-far optimizer history into the sidecar.
    pub history: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: "lz".into(),
            n: 50,
            g0: None,
            g1: None,
            g_max: None,
            family: "double-bang".into(),
            tau: None,
            tau_list: None,
            tau_min: None,
            tau_max: None,
            tau_step: None,
            n_list: None,
            gmax_list: None,
            g_list: None,
            fraction_list: None,
            restarts: None,
            seed: None,
            output: "bangopt-out".into(),
            workers: None,
            samples: 201,
            criterion: "threshold".into(),
            threshold: 0.998,
            budget: None,
            xatol: 1e-10,
            fatol: 1e-12,
            evolve_tol: 1e-10,
            search_tol: None,
            input: None,
            params: None,
            history: false,
        }
    }
}

/// Command-line overrides; `None` means "not given".
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub g0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub g1: Option<f64>,
    #[arg(long)]
    pub g_max: Option<f64>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Comma-separated durations, e.g. `0.5,0.6,0.7`.
    #[arg(long, value_delimiter = ',')]
    pub tau_list: Option<Vec<f64>>,
    #[arg(long)]
    pub tau_min: Option<f64>,
    #[arg(long)]
    pub tau_max: Option<f64>,
    #[arg(long)]
    pub tau_step: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub gmax_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub g_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub fraction_list: Option<Vec<f64>>,
    #[arg(long)]
    pub restarts: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub xatol: Option<f64>,
    #[arg(long)]
    pub fatol: Option<f64>,
    #[arg(long)]
    pub evolve_tol: Option<f64>,
    #[arg(long)]
    pub search_tol: Option<f64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated protocol parameters for `trajectory`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub params: Option<Vec<f64>>,
    #[arg(long)]
    pub history: bool,
}

impl RunConfig {
    /// defaults <- JSON file <- flags <- BANGOPT_WORKERS.
    pub fn resolve(overrides: &Overrides) -> CliResult<Self> {
        let mut config = match &overrides.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = overrides.$field.clone() {
                    config.$field = Some(v);
                })*
            };
        }
        if let Some(v) = &overrides.model {
            config.model = v.clone();
        }
        if let Some(v) = overrides.n {
            config.n = v;
        }
        if let Some(v) = &overrides.family {
            config.family = v.clone();
        }
        if let Some(v) = &overrides.output {
            config.output = v.clone();
        }
        if let Some(v) = overrides.samples {
            config.samples = v;
        }
        if let Some(v) = &overrides.criterion {
            config.criterion = v.clone();
        }
        if let Some(v) = overrides.threshold {
            config.threshold = v;
        }
        if let Some(v) = overrides.xatol {
            config.xatol = v;
        }
        if let Some(v) = overrides.fatol {
            config.fatol = v;
        }
        if let Some(v) = overrides.evolve_tol {
            config.evolve_tol = v;
        }
        if overrides.history {
            config.history = true;
        }
        take!(
            g0, g1, g_max, tau, tau_list, tau_min, tau_max, tau_step, n_list, gmax_list, g_list,
            fraction_list, restarts, seed, workers, budget, search_tol, input, params
        );
        if let Ok(w) = std::env::var("BANGOPT_WORKERS") {
            let parsed: usize = w.parse().map_err(|_| {
                CliError::Config(format!("BANGOPT_WORKERS must be an integer, got `{w}`"))
            })?;
            config.workers = Some(parsed);
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("config: cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config: invalid JSON in {}: {e}", path.display())))
    }

    pub fn is_lmg(&self) -> bool {
        self.model == "lmg"
    }

    pub fn effective_g0(&self) -> f64 {
        self.g0.unwrap_or(if self.is_lmg() { 0.0 } else { -5.0 })
    }

    pub fn effective_g1(&self) -> f64 {
        self.g1.unwrap_or(if self.is_lmg() { 1.0 } else { 0.0 })
    }

    pub fn effective_g_max(&self) -> f64 {
        self.g_max.unwrap_or(if self.is_lmg() { 1.7 } else { 10.0 })
    }

    /// Validates keys shared by all commands; command-specific checks live
    /// in the command implementations.
    pub fn validate_common(&self) -> CliResult<()> {
        if self.model != "lz" && self.model != "lmg" {
            return Err(CliError::Config(format!(
                "model: unknown model `{}` (valid: lz, lmg)",
                self.model
            )));
        }
        if self.is_lmg() && self.n < 2 {
            return Err(CliError::Config(format!("n: LMG needs n >= 2, got {}", self.n)));
        }
        ProtocolFamily::parse(&self.family).map_err(|e| CliError::Config(e.to_string()))?;
        if self.effective_g_max() <= 0.0 {
            return Err(CliError::Config("g_max: bound must be positive".into()));
        }
        if self.effective_g0().abs() > self.effective_g_max() {
            return Err(CliError::Config(format!(
                "g0: |{}| exceeds g_max = {}",
                self.effective_g0(),
                self.effective_g_max()
            )));
        }
        if self.effective_g1().abs() > self.effective_g_max() {
            return Err(CliError::Config(format!(
                "g1: |{}| exceeds g_max = {}",
                self.effective_g1(),
                self.effective_g_max()
            )));
        }
        if self.criterion != "threshold" && self.criterion != "kink" {
            return Err(CliError::Config(format!(
                "criterion: unknown criterion `{}` (valid: threshold, kink)",
                self.criterion
            )));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Config("threshold: level must lie in [0, 1]".into()));
        }
        if self.evolve_tol <= 0.0 {
            return Err(CliError::Config("evolve_tol: must be positive".into()));
        }
        if self.samples < 2 {
            return Err(CliError::Config("samples: need at least 2".into()));
        }
        Ok(())
    }

    pub fn family(&self) -> CliResult<ProtocolFamily> {
        ProtocolFamily::parse(&self.family).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Duration grid from `tau_list` or `tau_min`/`tau_max`/`tau_step`.
    pub fn tau_grid(&self) -> CliResult<Vec<f64>> {
        if let Some(list) = &self.tau_list {
            if list.is_empty() {
                return Err(CliError::Config("tau_list: empty".into()));
            }
            return Ok(list.clone());
        }
        match (self.tau_min, self.tau_max, self.tau_step) {
            (Some(lo), Some(hi), Some(step)) => {
                if step <= 0.0 || hi < lo {
                    return Err(CliError::Config(
                        "tau_step: need tau_min <= tau_max and tau_step > 0".into(),
                    ));
                }
                let mut taus = Vec::new();
                let mut k = 0usize;
                loop {
                    let t = lo + step * k as f64;
                    if t > hi + 1e-12 {
                        break;
                    }
                    taus.push(t);
                    k += 1;
                }
                Ok(taus)
            }
            _ => Err(CliError::Config(
                "tau_list: provide tau_list or tau_min/tau_max/tau_step".into(),
            )),
        }
    }

    /// Explicit seed, or one drawn from OS entropy (recorded in the sidecar).
    pub fn resolve_seed(&self) -> u64 {
        match self.seed {
            Some(s) => s,
            None => {
                use std::collections::hash_map::RandomState;
                use std::hash::{BuildHasher, Hasher};
                let mut h = RandomState::new().build_hasher();
                h.write_u64(std::process::id() as u64);
                h.finish()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        assert!(c.validate_common().is_ok());
        assert_eq!(c.effective_g0(), -5.0);
        assert_eq!(c.effective_g_max(), 10.0);
    }

    #[test]
    fn lmg_defaults() {
        let c = RunConfig {
            model: "lmg".into(),
            ..Default::default()
        };
        assert_eq!(c.effective_g0(), 0.0);
        assert_eq!(c.effective_g1(), 1.0);
        assert_eq!(c.effective_g_max(), 1.7);
    }

    #[test]
    fn unknown_family_rejected() {
        let c = RunConfig {
            family: "warp-drive".into(),
            ..Default::default()
        };
        let err = c.validate_common().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message().contains("double-bang"), "{}", err.message());
    }

    #[test]
    fn tau_grid_from_bounds() {
        let c = RunConfig {
            tau_min: Some(0.5),
            tau_max: Some(0.7),
            tau_step: Some(0.1),
            ..Default::default()
        };
        let taus = c.tau_grid().unwrap();
        assert_eq!(taus.len(), 3);
        assert!((taus[2] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn seed_zero_is_kept() {
        let c = RunConfig {
            seed: Some(0),
            ..Default::default()
        };
        assert_eq!(c.resolve_seed(), 0);
    }
}
