//! Run configuration.
//!
//! One TOML file drives every command. All sections are optional; a
//! command errors only when a section it needs is absent or incomplete.
//! Unknown keys are rejected so typos fail loudly instead of being
//! silently ignored.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use paneldid::dgp::{CohortSpec, DgpConfig, EffectSpec, EstimatorKind};
use paneldid::error::{Error, Result};
use paneldid::spatial::DEFAULT_FLOOR_KM;
use paneldid::twfe::{ControlSpec, FeFactor};
use paneldid::variance::VcovSpec;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub outcomes: OutcomesSection,
    pub controls: ControlsSection,
    pub estimators: EstimatorsSection,
    pub vcov: VcovSection,
    pub bootstrap: BootstrapSection,
    pub diagnostics: DiagnosticsSection,
    pub simulate: Option<SimulateSection>,
    pub cross_section: Option<CrossSectionSection>,
}

impl RunConfig {
    /// Load a TOML config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    /// The panel path: an explicit CLI argument wins over `[data].panel`.
    pub fn panel_path(&self, cli_arg: Option<&Path>) -> Result<PathBuf> {
        cli_arg
            .map(Path::to_path_buf)
            .or_else(|| self.data.panel.clone())
            .ok_or_else(|| {
                Error::Schema("no panel path: pass one or set [data].panel".into())
            })
    }
}

/// Input file locations and data-wide constants.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub panel: Option<PathBuf>,
    pub micro: Option<PathBuf>,
    pub sites: Option<PathBuf>,
    pub anchors: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    /// Minimum-distance floor (km) for market-access densities.
    pub ma_floor_km: f64,
    /// Cross-section base period for diagnostics; defaults to the first
    /// panel period.
    pub base_period: Option<i32>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            panel: None,
            micro: None,
            sites: None,
            anchors: None,
            schedule: None,
            ma_floor_km: DEFAULT_FLOOR_KM,
            base_period: None,
        }
    }
}

/// Which outcome columns to estimate; empty = every outcome in the panel.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutcomesSection {
    pub names: Vec<String>,
}

/// Fixed-effect controls for the two-way fixed-effects estimator.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlsSection {
    /// Drop everything except unit and period effects (the no-controls
    /// specification).
    pub none: bool,
    /// Include county×period effects (requires a `county` label column).
    pub county_period: bool,
    /// Covariates entering as sample-decile × period effects.
    pub decile_vars: Vec<String>,
}

impl Default for ControlsSection {
    fn default() -> Self {
        ControlsSection { none: false, county_period: true, decile_vars: vec![] }
    }
}

impl ControlsSection {
    pub fn to_spec(&self) -> ControlSpec {
        if self.none {
            return ControlSpec::none();
        }
        let mut fe = vec![FeFactor::Unit, FeFactor::Period];
        if self.county_period {
            fe.push(FeFactor::CountyPeriod);
        }
        ControlSpec { fe_factors: fe, decile_vars: self.decile_vars.clone() }
    }
}

/// Which estimators to run and how the group-time cells are estimated.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorsSection {
    /// Any of "twfe", "group_time".
    pub run: Vec<String>,
    /// "simple" or "outcome_regression".
    pub cs_method: String,
    /// Covariates for the outcome-regression method.
    pub cs_covariates: Vec<String>,
}

impl Default for EstimatorsSection {
    fn default() -> Self {
        EstimatorsSection {
            run: vec!["twfe".into(), "group_time".into()],
            cs_method: "simple".into(),
            cs_covariates: vec![],
        }
    }
}

impl EstimatorsSection {
    pub fn cs_method(&self) -> Result<paneldid::attgt::CsMethod> {
        match self.cs_method.as_str() {
            "simple" => Ok(paneldid::attgt::CsMethod::Simple),
            "outcome_regression" => Ok(paneldid::attgt::CsMethod::OutcomeRegression),
            other => Err(Error::Schema(format!(
                "unknown cs_method '{other}' (expected 'simple' or 'outcome_regression')"
            ))),
        }
    }

    pub fn wants(&self, estimator: &str) -> bool {
        self.run.iter().any(|e| e == estimator)
    }

    pub fn validate(&self) -> Result<()> {
        for e in &self.run {
            if e != "twfe" && e != "group_time" {
                return Err(Error::Schema(format!(
                    "unknown estimator '{e}' (expected 'twfe' or 'group_time')"
                )));
            }
        }
        Ok(())
    }
}

/// Variance schemes for the regression estimators.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VcovSection {
    /// Parsed by [`VcovSpec::parse`]: "hc1", "cluster:<label>",
    /// "conley:<km>:<uniform|bartlett>".
    pub schemes: Vec<String>,
}

impl Default for VcovSection {
    fn default() -> Self {
        VcovSection { schemes: vec!["hc1".into()] }
    }
}

impl VcovSection {
    pub fn parsed(&self) -> Result<Vec<VcovSpec>> {
        self.schemes.iter().map(|s| VcovSpec::parse(s)).collect()
    }
}

/// Multiplier-bootstrap settings for group-time inference.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSection {
    /// 0 disables the bootstrap (analytic influence-function inference).
    pub reps: usize,
    pub seed: u64,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        BootstrapSection { reps: 0, seed: 42 }
    }
}

/// Diagnostics command settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    /// Variables for balance/KS/summary/density tables. Absent = the
    /// estimation outcome list; explicitly empty = no-op with a warning.
    pub variables: Option<Vec<String>>,
    pub grid_size: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection { variables: None, grid_size: 256 }
    }
}

/// One cohort share: either `year = <period>` or `never = true`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortShare {
    pub year: Option<i32>,
    #[serde(default)]
    pub never: bool,
    pub share: f64,
}

impl CohortShare {
    fn to_spec(&self) -> Result<(CohortSpec, f64)> {
        match (self.year, self.never) {
            (Some(y), false) => Ok((CohortSpec::At(y), self.share)),
            (None, true) => Ok((CohortSpec::Never, self.share)),
            _ => Err(Error::Schema(
                "each [[simulate.cohorts]] entry needs exactly one of 'year' or 'never = true'"
                    .into(),
            )),
        }
    }
}

/// Synthetic-data and Monte Carlo settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub n_units: usize,
    pub periods: Vec<i32>,
    pub cohorts: Vec<CohortShare>,
    pub effect: EffectSpec,
    #[serde(default = "one")]
    pub unit_sd: f64,
    #[serde(default)]
    pub period_effects: Vec<f64>,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub selection_on_level: f64,
    #[serde(default)]
    pub spatial_noise_range_km: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// "group_time" or "twfe".
    #[serde(default = "default_estimator")]
    pub estimator: String,
    #[serde(default = "default_reps")]
    pub reps: usize,
}

fn one() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    42
}
fn default_estimator() -> String {
    "group_time".into()
}
fn default_reps() -> usize {
    200
}

impl SimulateSection {
    pub fn to_dgp_config(&self, seed_override: Option<u64>) -> Result<DgpConfig> {
        let shares = self
            .cohorts
            .iter()
            .map(CohortShare::to_spec)
            .collect::<Result<Vec<_>>>()?;
        let period_effects = if self.period_effects.is_empty() {
            vec![0.0; self.periods.len()]
        } else {
            self.period_effects.clone()
        };
        Ok(DgpConfig {
            n_units: self.n_units,
            periods: self.periods.clone(),
            shares,
            effect: self.effect,
            unit_sd: self.unit_sd,
            period_effects,
            noise_sd: self.noise_sd,
            selection_on_level: self.selection_on_level,
            spatial_noise_range_km: self.spatial_noise_range_km,
            seed: seed_override.unwrap_or(self.seed),
        })
    }

    pub fn estimator_kind(&self) -> Result<EstimatorKind> {
        match self.estimator.as_str() {
            "group_time" => Ok(EstimatorKind::GroupTime),
            "twfe" => Ok(EstimatorKind::Twfe),
            other => Err(Error::Schema(format!(
                "unknown estimator '{other}' (expected 'group_time' or 'twfe')"
            ))),
        }
    }
}

/// Cross-section regression settings (count/level regressions at one
/// period).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionSection {
    pub outcome: String,
    /// Defaults to the last panel period.
    pub period: Option<i32>,
    /// "ols" or "poisson".
    #[serde(default = "default_model")]
    pub model: String,
    pub regressors: Vec<String>,
    #[serde(default = "default_vcov")]
    pub vcov: String,
}

fn default_model() -> String {
    "ols".into()
}
fn default_vcov() -> String {
    "hc1".into()
}
