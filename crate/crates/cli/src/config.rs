//! Sweep configuration: a versioned TOML schema.
//!
//! Every grid accepts either an explicit value list or an inclusive
//! `{ start, stop, step }` range, so figure-style sweeps stay one line.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use npt_core::family::{family_by_name, FamilyOptions, StateFamily};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// A one-dimensional parameter grid.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Grid {
    /// Explicit values, used verbatim.
    List(Vec<f64>),
    /// Inclusive range: start, start+step, ..., stop (within rounding).
    Range { start: f64, stop: f64, step: f64 },
}

impl Grid {
    /// Expands the grid to its value list.
    pub fn resolve(&self, label: &str) -> Result<Vec<f64>, CliError> {
        let values = match self {
            Grid::List(values) => values.clone(),
            Grid::Range { start, stop, step } => {
                if !(step > &0.0) || !step.is_finite() {
                    return Err(CliError::Config(format!(
                        "{label}: range step must be positive, got {step}"
                    )));
                }
                if stop < start {
                    return Err(CliError::Config(format!(
                        "{label}: range stop {stop} is below start {start}"
                    )));
                }
                let n = ((stop - start) / step + 1.0 + 1e-9).floor() as usize;
                (0..n).map(|k| start + step * k as f64).collect()
            }
        };
        if values.is_empty() {
            return Err(CliError::Config(format!("{label}: grid is empty")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Config(format!(
                "{label}: grid holds a non-finite value {bad}"
            )));
        }
        Ok(values)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySection {
    /// Registry name: tmsv, subtracted-tmsv, cat, custom.
    pub name: String,
    /// Photons subtracted from mode a (subtracted-tmsv only).
    pub n_sub: Option<u32>,
    /// Photons subtracted from mode b (subtracted-tmsv only).
    pub m_sub: Option<u32>,
    /// State snapshot path (custom only).
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Sweep-parameter grid (ζ or α, family dependent).
    pub values: Grid,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Transmissivity grid, each value in [0, 1].
    pub eta: Grid,
    /// Environment thermal occupation grid, nonnegative.
    pub n_bar: Grid,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            eta: Grid::Range { start: 0.0, stop: 1.0, step: 0.02 },
            n_bar: Grid::List(vec![0.0]),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    /// Total shot budgets.
    pub m_tot: Grid,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self { m_tot: Grid::List(vec![10.0, 100.0, 1000.0, 10000.0]) }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Smallest matrix dimension to enumerate (default 1).
    pub d_min: Option<usize>,
    /// Largest matrix dimension to enumerate.
    pub d_max: usize,
    /// Largest moment order appearing in a matrix.
    pub n_max: u32,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsSection {
    /// Detection threshold on the confidence level.
    pub confidence_threshold: f64,
    /// Top-level population bound for truncation boxes.
    pub tail_tolerance: f64,
    /// Fixed box [dim_a, dim_b], overriding the per-value default.
    pub dims: Option<[usize; 2]>,
    /// Master randomness seed for simulation commands.
    pub seed: u64,
}

impl Default for OptionsSection {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.95,
            tail_tolerance: 1e-10,
            dims: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloSection {
    /// Criterion to simulate, by catalog name or ordinal list "(3,5)".
    pub criterion: String,
    /// Number of simulated experiments.
    pub trials: Option<u64>,
}

/// One sweep run, fully described.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub family: FamilySection,
    pub sweep: SweepSection,
    /// Defaults to η ∈ [0, 1] step 0.02 with a cold environment.
    #[serde(default)]
    pub noise: NoiseSection,
    /// Defaults to the four decade budgets 10..10⁴.
    #[serde(default)]
    pub budget: BudgetSection,
    pub search: SearchSection,
    #[serde(default)]
    pub options: OptionsSection,
    pub montecarlo: Option<MonteCarloSection>,
}

impl SweepConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: SweepConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.search.d_max < 1 || self.search.n_max < 1 {
            return Err(CliError::Config(
                "search bounds d_max and n_max must be at least 1".into(),
            ));
        }
        if self.d_min() > self.search.d_max {
            return Err(CliError::Config(format!(
                "d_min {} exceeds d_max {}",
                self.d_min(),
                self.search.d_max
            )));
        }
        if !(self.options.confidence_threshold > 0.0)
            || !(self.options.confidence_threshold < 1.0)
        {
            return Err(CliError::Config(format!(
                "confidence_threshold must lie strictly inside (0, 1), got {}",
                self.options.confidence_threshold
            )));
        }
        if !(self.options.tail_tolerance > 0.0) {
            return Err(CliError::Config(
                "tail_tolerance must be positive".into(),
            ));
        }
        if let Some([da, db]) = self.options.dims {
            if da < 2 || db < 2 {
                return Err(CliError::Config(format!(
                    "dims override {da}x{db} is below the smallest usable box"
                )));
            }
        }
        for eta in self.noise.eta.resolve("noise.eta")? {
            if !(0.0..=1.0).contains(&eta) {
                return Err(CliError::Config(format!(
                    "noise.eta value {eta} lies outside [0, 1]"
                )));
            }
        }
        for n_bar in self.noise.n_bar.resolve("noise.n_bar")? {
            if n_bar < 0.0 {
                return Err(CliError::Config(format!(
                    "noise.n_bar value {n_bar} is negative"
                )));
            }
        }
        for m in self.budget.m_tot.resolve("budget.m_tot")? {
            if !(m > 0.0) {
                return Err(CliError::Config(format!(
                    "budget.m_tot value {m} is not positive"
                )));
            }
        }
        self.sweep.values.resolve("sweep.values")?;
        self.resolve_family()?;
        Ok(())
    }

    pub fn d_min(&self) -> usize {
        self.search.d_min.unwrap_or(1)
    }

    /// Builds the configured state family.
    pub fn resolve_family(&self) -> Result<Box<dyn StateFamily>, CliError> {
        let defaults = FamilyOptions::default();
        let options = FamilyOptions {
            n_sub: self.family.n_sub.unwrap_or(defaults.n_sub),
            m_sub: self.family.m_sub.unwrap_or(defaults.m_sub),
            snapshot: self.family.snapshot.clone(),
        };
        Ok(family_by_name(&self.family.name, &options)?)
    }

    pub fn sweep_values(&self) -> Result<Vec<f64>, CliError> {
        self.sweep.values.resolve("sweep.values")
    }

    pub fn eta_values(&self) -> Result<Vec<f64>, CliError> {
        self.noise.eta.resolve("noise.eta")
    }

    pub fn n_bar_values(&self) -> Result<Vec<f64>, CliError> {
        self.noise.n_bar.resolve("noise.n_bar")
    }

    pub fn m_tot_values(&self) -> Result<Vec<f64>, CliError> {
        self.budget.m_tot.resolve("budget.m_tot")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
        schema_version = 1

        [family]
        name = "tmsv"

        [sweep]
        values = { start = 0.25, stop = 2.0, step = 0.25 }

        [noise]
        eta = [0.8]
        n_bar = [0.0]

        [budget]
        m_tot = [200]

        [search]
        d_max = 5
        n_max = 2
    "#;

    #[test]
    fn parses_and_resolves_grids() {
        let config: SweepConfig = toml::from_str(GOOD).unwrap();
        config.validate().unwrap();
        let values = config.sweep_values().unwrap();
        assert_eq!(values.len(), 8);
        assert!((values[0] - 0.25).abs() < 1e-12);
        assert!((values[7] - 2.0).abs() < 1e-12);
        assert_eq!(config.d_min(), 1);
        assert_eq!(config.options.confidence_threshold, 0.95);
        assert_eq!(config.resolve_family().unwrap().id(), "tmsv");
    }

    #[test]
    fn noise_and_budget_default_to_figure_grids() {
        let minimal = r#"
            schema_version = 1

            [family]
            name = "cat"

            [sweep]
            values = { start = 0.05, stop = 2.0, step = 0.05 }

            [search]
            d_max = 2
            n_max = 4
        "#;
        let config: SweepConfig = toml::from_str(minimal).unwrap();
        config.validate().unwrap();
        assert_eq!(config.eta_values().unwrap().len(), 51);
        assert_eq!(config.n_bar_values().unwrap(), vec![0.0]);
        assert_eq!(
            config.m_tot_values().unwrap(),
            vec![10.0, 100.0, 1000.0, 10000.0]
        );
    }

    #[test]
    fn rejects_bad_schemas() {
        let mut wrong_version: SweepConfig = toml::from_str(GOOD).unwrap();
        wrong_version.schema_version = 2;
        assert!(wrong_version.validate().is_err());

        let mut bad_eta: SweepConfig = toml::from_str(GOOD).unwrap();
        bad_eta.noise.eta = Grid::List(vec![1.5]);
        assert!(bad_eta.validate().is_err());

        let mut empty: SweepConfig = toml::from_str(GOOD).unwrap();
        empty.budget.m_tot = Grid::List(vec![]);
        assert!(empty.validate().is_err());

        let mut degenerate_range: SweepConfig = toml::from_str(GOOD).unwrap();
        degenerate_range.sweep.values =
            Grid::Range { start: 1.0, stop: 0.0, step: 0.1 };
        assert!(degenerate_range.validate().is_err());

        assert!(toml::from_str::<SweepConfig>("schema_version = 1").is_err());
        assert!(
            toml::from_str::<SweepConfig>(&format!("{GOOD}\nunknown_key = 3")).is_err()
        );
    }

    #[test]
    fn range_endpoints_survive_rounding() {
        let grid = Grid::Range { start: 0.0, stop: 1.0, step: 0.02 };
        let values = grid.resolve("test").unwrap();
        assert_eq!(values.len(), 51);
        assert!((values[50] - 1.0).abs() < 1e-12);
    }
}
