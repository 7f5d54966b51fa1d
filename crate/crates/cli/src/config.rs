//! Settings shared by every subcommand.
//!
//! The same keys are accepted as command-line flags and in a TOML file passed
//! with `--config`; a flag overrides the file, the file overrides the defaults.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use vdeffuant::engine::EventMode;
use vdeffuant::scalar::parse_rational;
use vdeffuant::{Boundary, Dynamics, InitSpec, LatticeSpec, ModelParams};

use crate::error::CliError;

pub const DEFAULT_ISSUES: u32 = 3;
pub const DEFAULT_THETA: u32 = 1;
pub const DEFAULT_SITES: usize = 1024;
pub const DEFAULT_T_MAX: f64 = 1000.0;
pub const DEFAULT_REPLICATES: u64 = 32;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SAMPLES: u64 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Ring,
    Interval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Uniform,
    Biased,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsArg {
    Deffuant,
    Axelrod,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Faithful,
    RejectionFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogFormat {
    Csv,
    Binary,
}

/// Raw settings; every field optional so file and flags can be layered.
#[derive(Clone, Debug, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// Number of issues.
    #[arg(long = "F", value_name = "F")]
    #[serde(rename = "F", skip_serializing_if = "Option::is_none")]
    pub issues: Option<u32>,
    /// Confidence threshold.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<u32>,
    /// Density of each non-designated profile under the biased start, e.g. 1/32.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<BoundaryArg>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitArg>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsArg>,
    /// Event sampling: every clock ring, or active arrows only.
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_events: Option<u64>,
    /// Hard cap on events per replicate; reaching it marks the run truncated.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_budget: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Write the final contribution ledger (simulate).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ledger: Option<bool>,
    /// Write the final particle snapshot (simulate).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<bool>,
    /// Write every event (simulate).
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event_log: Option<LogFormat>,
    /// Number of random genealogy probes at the final time (simulate).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    /// Site distances (cluster-prob).
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distances: Option<Vec<usize>>,
    /// Observation times (cluster-prob); defaults to 0, 1, 2, 4, ... up to t-max.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Issue counts of the grid (sweep, phase), e.g. 2,3,4 or 2-7.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_values: Option<String>,
    /// Thresholds of the grid (sweep, phase); defaults to 1..F-1 per row.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_values: Option<String>,
    /// Biased densities of the grid (sweep); omitted means the uniform start.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_values: Option<Vec<String>>,
    /// Sites sampled per configuration (stats).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
}

macro_rules! layer {
    ($base:expr, $over:expr, $($field:ident),* $(,)?) => {
        Settings { $($field: $over.$field.or($base.$field)),* }
    };
}

impl Settings {
    /// `over` wins wherever it is set.
    pub fn layered(self, over: Settings) -> Settings {
        layer!(
            self,
            over,
            issues,
            theta,
            rho,
            sites,
            boundary,
            init,
            dynamics,
            mode,
            t_max,
            max_events,
            event_budget,
            replicates,
            seed,
            out,
            ledger,
            snapshot,
            event_log,
            probes,
            distances,
            times,
            f_values,
            theta_values,
            rho_values,
            samples,
        )
    }

    pub fn from_toml(text: &str) -> Result<Settings, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Settings, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Settings::from_toml(&text)
    }

    /// Reads `config` (if any) and lays `flags` over it.
    pub fn resolve(config: Option<&Path>, flags: Settings) -> Result<Settings, CliError> {
        let base = match config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        Ok(base.layered(flags))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("settings serialise")
    }
}

/// Settings checked and converted into model types.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub params: ModelParams,
    pub lattice: LatticeSpec,
    pub init: InitSpec,
    pub mode: EventMode,
    pub t_max: f64,
    pub max_events: Option<u64>,
    pub event_budget: u64,
    pub replicates: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Echo of the resolved settings, embedded in every output.
    pub settings: Settings,
}

impl ExperimentConfig {
    pub fn from_settings(s: &Settings) -> Result<Self, CliError> {
        let issues = s.issues.unwrap_or(DEFAULT_ISSUES);
        let theta = s.theta.unwrap_or(DEFAULT_THETA.min(issues));
        let dynamics = match s.dynamics.unwrap_or(DynamicsArg::Deffuant) {
            DynamicsArg::Deffuant => Dynamics::Deffuant,
            DynamicsArg::Axelrod => Dynamics::Axelrod,
        };
        let params = ModelParams::new(issues, theta, dynamics).map_err(CliError::model)?;
        let boundary = match s.boundary.unwrap_or(BoundaryArg::Ring) {
            BoundaryArg::Ring => Boundary::Periodic,
            BoundaryArg::Interval => Boundary::FreeInterval,
        };
        let lattice = LatticeSpec::new(s.sites.unwrap_or(DEFAULT_SITES), boundary).map_err(CliError::model)?;
        let init = init_spec(s.init, s.rho.as_deref(), issues)?;
        let mode = match s.mode.unwrap_or(ModeArg::Faithful) {
            ModeArg::Faithful => EventMode::Faithful,
            ModeArg::RejectionFree => EventMode::RejectionFree,
        };
        let t_max = s.t_max.unwrap_or(DEFAULT_T_MAX);
        if !(t_max >= 0.0 && t_max.is_finite()) {
            return Err(CliError::Usage(format!("t-max must be a finite nonnegative time, got {t_max}")));
        }
        let replicates = s.replicates.unwrap_or(DEFAULT_REPLICATES);
        if replicates == 0 {
            return Err(CliError::Usage("replicates must be at least 1".into()));
        }
        Ok(Self {
            params,
            lattice,
            init,
            mode,
            t_max,
            max_events: s.max_events,
            event_budget: s.event_budget.unwrap_or(vdeffuant::StopCondition::DEFAULT_BUDGET),
            replicates,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            out: s.out.clone(),
            settings: s.clone(),
        })
    }

    pub fn stop(&self) -> vdeffuant::StopCondition {
        vdeffuant::StopCondition {
            t_max: Some(self.t_max),
            max_events: self.max_events,
            until_absorbed: true,
            event_budget: self.event_budget,
        }
    }
}

pub fn init_spec(kind: Option<InitArg>, rho: Option<&str>, issues: u32) -> Result<InitSpec, CliError> {
    let kind = kind.unwrap_or(if rho.is_some() { InitArg::Biased } else { InitArg::Uniform });
    let spec = match kind {
        InitArg::Uniform => InitSpec::Uniform,
        InitArg::Biased => {
            let text = rho.ok_or_else(|| CliError::Usage("biased start needs --rho".into()))?;
            let rho = parse_rational(text).ok_or_else(|| CliError::Usage(format!("cannot parse rho '{text}'")))?;
            InitSpec::Biased { rho }
        }
    };
    spec.validate(issues).map_err(CliError::model)?;
    Ok(spec)
}

/// Parses `2,3,5`, `2-7` or a mix such as `2-4,9`.
pub fn parse_int_list(text: &str) -> Result<Vec<u32>, CliError> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || CliError::Usage(format!("cannot parse integer list element '{part}'"));
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u32 = a.trim().parse().map_err(|_| bad())?;
                let b: u32 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

/// `0, 1, 2, 4, ...` up to `t_max`, with `t_max` itself appended.
pub fn geometric_grid(t_max: f64) -> Vec<f64> {
    let mut grid = vec![0.0];
    let mut t = 1.0;
    while t < t_max {
        grid.push(t);
        t *= 2.0;
    }
    if t_max > 0.0 {
        grid.push(t_max);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file =
            Settings::from_toml("F = 5\ntheta = 2\nsites = 64\nt-max = 10.0\nboundary = \"interval\"\n").unwrap();
        let flags = Settings { theta: Some(1), ..Settings::default() };
        let s = file.layered(flags);
        assert_eq!(s.issues, Some(5));
        assert_eq!(s.theta, Some(1));
        let cfg = ExperimentConfig::from_settings(&s).unwrap();
        assert_eq!(cfg.lattice.boundary(), Boundary::FreeInterval);
        assert_eq!(cfg.t_max, 10.0);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(Settings::from_toml("colour = 3"), Err(CliError::Usage(_))));
    }

    #[test]
    fn invalid_parameters_are_usage_errors() {
        let s = Settings { issues: Some(2), theta: Some(3), ..Settings::default() };
        assert!(matches!(ExperimentConfig::from_settings(&s), Err(CliError::Usage(_))));
        let s = Settings { issues: Some(3), rho: Some("1/8".into()), ..Settings::default() };
        assert!(matches!(ExperimentConfig::from_settings(&s), Err(CliError::Usage(_))));
        let s = Settings { replicates: Some(0), ..Settings::default() };
        assert!(ExperimentConfig::from_settings(&s).is_err());
    }

    #[test]
    fn settings_round_trip_through_toml() {
        let s =
            Settings { issues: Some(4), rho: Some("1/64".into()), distances: Some(vec![1, 2]), ..Settings::default() };
        let text = toml::to_string(&s).unwrap();
        assert_eq!(Settings::from_toml(&text).unwrap(), s);
    }

    #[test]
    fn integer_lists() {
        assert_eq!(parse_int_list("2-4,9").unwrap(), vec![2, 3, 4, 9]);
        assert_eq!(parse_int_list("").unwrap(), Vec::<u32>::new());
        assert!(parse_int_list("4-2").is_err());
    }

    #[test]
    fn grid_is_geometric() {
        assert_eq!(geometric_grid(10.0), vec![0.0, 1.0, 2.0, 4.0, 8.0, 10.0]);
        assert_eq!(geometric_grid(8.0), vec![0.0, 1.0, 2.0, 4.0, 8.0]);
        assert_eq!(geometric_grid(0.0), vec![0.0]);
    }
}
