//! The unit×period panel, the staggered absorbing treatment schedule, and
//! validation/selection utilities shared by all estimators.
//!
//! A [`PanelDataset`] is immutable once handed to an estimator; every
//! operation here is a pure function over it, so panels are safe to share
//! across parallel workers.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::GeoPoint;

/// Opaque unit identifier (e.g. a parish code).
pub type UnitId = String;

/// Calendar year of one panel period.
pub type Period = i32;

/// Treatment status of one unit: never treated, or first treated at a year.
///
/// The derived indicator `D(i,t) = [t >= year]` is absorbing by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Treatment {
    Never,
    AtYear(i32),
}

/// Per-unit first-treatment map. Timing is stored at annual resolution even
/// when panel periods are decadal; estimators map a connection year to the
/// first panel period at or after it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TreatmentSchedule {
    first_treated: BTreeMap<UnitId, Treatment>,
}

impl TreatmentSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, unit: impl Into<UnitId>, treatment: Treatment) {
        self.first_treated.insert(unit.into(), treatment);
    }

    /// Treatment of `unit`, or `None` if the schedule does not cover it.
    pub fn get(&self, unit: &str) -> Option<Treatment> {
        self.first_treated.get(unit).copied()
    }

    pub fn units(&self) -> impl Iterator<Item = (&UnitId, Treatment)> {
        self.first_treated.iter().map(|(u, t)| (u, *t))
    }

    pub fn len(&self) -> usize {
        self.first_treated.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_treated.is_empty()
    }
}

/// Treatment year claimed by one ingested row. `Absent` marks cells with no
/// observed row; loaders record per-row claims so validation can detect
/// contradictory (non-absorbing) inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawTreatment {
    Absent,
    Never,
    Year(i32),
}

/// One issue found by [`validate_panel`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationIssue {
    pub code: String,
    pub unit: Option<UnitId>,
    pub period: Option<Period>,
    pub message: String,
}

/// Validation outcome: empty `errors` means the dataset is accepted by the
/// estimators.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationIssue>,
    pub warnings: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    fn error(&mut self, code: &str, unit: Option<&str>, period: Option<Period>, msg: String) {
        self.errors.push(ValidationIssue {
            code: code.to_string(),
            unit: unit.map(|s| s.to_string()),
            period,
            message: msg,
        });
    }

    fn warning(&mut self, code: &str, unit: Option<&str>, period: Option<Period>, msg: String) {
        self.warnings.push(ValidationIssue {
            code: code.to_string(),
            unit: unit.map(|s| s.to_string()),
            period,
            message: msg,
        });
    }
}

/// Unit×period table of outcomes, covariates, cluster labels, coordinates,
/// and a treatment schedule.
///
/// Cells are stored row-major by unit then period: the value of unit `ui` at
/// period `pi` sits at index `ui * n_periods + pi`. Outcome cells may be
/// missing; covariates are time-invariant per unit and complete.
#[derive(Debug, Clone, Default)]
pub struct PanelDataset {
    units: Vec<UnitId>,
    periods: Vec<Period>,
    outcomes: BTreeMap<String, Vec<Option<f64>>>,
    covariates: BTreeMap<String, Vec<f64>>,
    cluster_labels: BTreeMap<String, Vec<String>>,
    coordinates: Vec<Option<GeoPoint>>,
    schedule: TreatmentSchedule,
    unit_index: HashMap<UnitId, usize>,
    /// Per-row treatment claims as ingested (validation input).
    row_treatment: Vec<RawTreatment>,
    /// Duplicate (unit, period) rows seen at ingest (last value wins).
    duplicate_rows: Vec<(UnitId, Period)>,
}

impl PanelDataset {
    /// Create an empty panel over the given units and periods.
    pub fn new(units: Vec<UnitId>, periods: Vec<Period>, schedule: TreatmentSchedule) -> Self {
        let unit_index = units
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i))
            .collect();
        let n_rows = units.len() * periods.len();
        let row_treatment = {
            let mut rt = vec![RawTreatment::Absent; n_rows];
            for (ui, u) in units.iter().enumerate() {
                let claim = match schedule.get(u) {
                    Some(Treatment::AtYear(y)) => RawTreatment::Year(y),
                    Some(Treatment::Never) => RawTreatment::Never,
                    None => RawTreatment::Never,
                };
                for pi in 0..periods.len() {
                    rt[ui * periods.len() + pi] = claim;
                }
            }
            rt
        };
        let coordinates = vec![None; units.len()];
        PanelDataset {
            units,
            periods,
            outcomes: BTreeMap::new(),
            covariates: BTreeMap::new(),
            cluster_labels: BTreeMap::new(),
            coordinates,
            schedule,
            unit_index,
            row_treatment,
            duplicate_rows: Vec::new(),
        }
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn n_rows(&self) -> usize {
        self.units.len() * self.periods.len()
    }

    pub fn units(&self) -> &[UnitId] {
        &self.units
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn schedule(&self) -> &TreatmentSchedule {
        &self.schedule
    }

    /// Flat cell index of (unit `ui`, period `pi`).
    pub fn cell(&self, ui: usize, pi: usize) -> usize {
        ui * self.periods.len() + pi
    }

    pub fn unit_pos(&self, unit: &str) -> Option<usize> {
        self.unit_index.get(unit).copied()
    }

    pub fn period_pos(&self, period: Period) -> Option<usize> {
        self.periods.iter().position(|&p| p == period)
    }

    /// Register an outcome column (one value per unit×period cell).
    pub fn add_outcome(&mut self, name: impl Into<String>, cells: Vec<Option<f64>>) -> Result<()> {
        if cells.len() != self.n_rows() {
            return Err(Error::Schema(format!(
                "outcome column length {} != {} rows",
                cells.len(),
                self.n_rows()
            )));
        }
        self.outcomes.insert(name.into(), cells);
        Ok(())
    }

    /// Register a time-invariant covariate (one value per unit).
    pub fn add_covariate(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        if values.len() != self.n_units() {
            return Err(Error::Schema(format!(
                "covariate column length {} != {} units",
                values.len(),
                self.n_units()
            )));
        }
        self.covariates.insert(name.into(), values);
        Ok(())
    }

    /// Register a categorical unit-level cluster label column.
    pub fn add_cluster_label(
        &mut self,
        name: impl Into<String>,
        values: Vec<String>,
    ) -> Result<()> {
        if values.len() != self.n_units() {
            return Err(Error::Schema(format!(
                "cluster label column length {} != {} units",
                values.len(),
                self.n_units()
            )));
        }
        self.cluster_labels.insert(name.into(), values);
        Ok(())
    }

    pub fn set_coordinates(&mut self, coords: Vec<Option<GeoPoint>>) -> Result<()> {
        if coords.len() != self.n_units() {
            return Err(Error::Schema(format!(
                "coordinate column length {} != {} units",
                coords.len(),
                self.n_units()
            )));
        }
        self.coordinates = coords;
        Ok(())
    }

    /// Record the treatment claim carried by one ingested row.
    pub fn set_row_treatment(&mut self, ui: usize, pi: usize, claim: RawTreatment) {
        let idx = self.cell(ui, pi);
        self.row_treatment[idx] = claim;
    }

    /// Record a duplicate (unit, period) row seen at ingest.
    pub fn record_duplicate(&mut self, unit: impl Into<UnitId>, period: Period) {
        self.duplicate_rows.push((unit.into(), period));
    }

    pub fn outcome(&self, name: &str) -> Result<&[Option<f64>]> {
        self.outcomes
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn covariate(&self, name: &str) -> Result<&[f64]> {
        self.covariates
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn cluster_label(&self, name: &str) -> Result<&[String]> {
        self.cluster_labels
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn outcome_names(&self) -> impl Iterator<Item = &String> {
        self.outcomes.keys()
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &String> {
        self.covariates.keys()
    }

    pub fn cluster_label_names(&self) -> impl Iterator<Item = &String> {
        self.cluster_labels.keys()
    }

    pub fn has_outcome(&self, name: &str) -> bool {
        self.outcomes.contains_key(name)
    }

    pub fn has_covariate(&self, name: &str) -> bool {
        self.covariates.contains_key(name)
    }

    pub fn coordinates(&self) -> &[Option<GeoPoint>] {
        &self.coordinates
    }

    /// Treatment of the unit at position `ui` (unscheduled units count as
    /// never treated; validation flags them).
    pub fn treatment(&self, ui: usize) -> Treatment {
        self.schedule
            .get(&self.units[ui])
            .unwrap_or(Treatment::Never)
    }

    /// The treatment indicator D(i,t): whether unit `ui` is treated at the
    /// period in position `pi`.
    pub fn is_treated(&self, ui: usize, pi: usize) -> bool {
        match self.treatment(ui) {
            Treatment::Never => false,
            Treatment::AtYear(y) => self.periods[pi] >= y,
        }
    }

    /// Cohort period of unit `ui`: the first panel period at or after its
    /// connection year. `None` for never-treated units and for units whose
    /// connection year falls after the last panel period (not yet treated
    /// within the panel).
    pub fn cohort_period(&self, ui: usize) -> Option<Period> {
        match self.treatment(ui) {
            Treatment::Never => None,
            Treatment::AtYear(y) => self.periods.iter().copied().find(|&p| p >= y),
        }
    }

    /// Unit indices by cohort period, in ascending cohort order.
    pub fn cohorts(&self) -> BTreeMap<Period, Vec<usize>> {
        let mut map: BTreeMap<Period, Vec<usize>> = BTreeMap::new();
        for ui in 0..self.n_units() {
            if let Some(g) = self.cohort_period(ui) {
                map.entry(g).or_default().push(ui);
            }
        }
        map
    }

    /// Indices of never-treated units (eventual adopters beyond the panel
    /// horizon are NOT included; they are excluded from group-time
    /// estimation entirely).
    pub fn never_treated(&self) -> Vec<usize> {
        (0..self.n_units())
            .filter(|&ui| matches!(self.treatment(ui), Treatment::Never))
            .collect()
    }

    pub fn row_treatment(&self, ui: usize, pi: usize) -> RawTreatment {
        self.row_treatment[self.cell(ui, pi)]
    }

    pub fn duplicate_rows(&self) -> &[(UnitId, Period)] {
        &self.duplicate_rows
    }
}

/// Check panel invariants and report problems without failing.
///
/// Errors make the dataset unacceptable to estimators: duplicate rows,
/// non-absorbing treatment claims, unordered periods, malformed unit ids,
/// schedule references to unknown units, and out-of-range coordinates.
/// Missing coordinates are a warning here (they only block spatial
/// inference, which re-checks at estimation time).
pub fn validate_panel(ds: &PanelDataset) -> ValidationReport {
    let mut report = ValidationReport::default();

    for (unit, period) in ds.duplicate_rows() {
        report.error(
            "DUPLICATE_ROW",
            Some(unit),
            Some(*period),
            format!("duplicate row for unit '{unit}' at period {period}"),
        );
    }

    for w in ds.periods().windows(2) {
        if w[1] <= w[0] {
            report.error(
                "PERIODS_UNORDERED",
                None,
                Some(w[1]),
                format!("periods must be strictly ascending, found {} after {}", w[1], w[0]),
            );
        }
    }

    let mut seen = HashMap::new();
    for (ui, u) in ds.units().iter().enumerate() {
        if u.is_empty() {
            report.error("EMPTY_UNIT_ID", None, None, format!("unit {ui} has an empty id"));
        }
        if let Some(prev) = seen.insert(u.clone(), ui) {
            report.error(
                "DUPLICATE_UNIT",
                Some(u),
                None,
                format!("unit id '{u}' appears at positions {prev} and {ui}"),
            );
        }
    }

    for (unit, _) in ds.schedule().units() {
        if ds.unit_pos(unit).is_none() {
            report.error(
                "UNKNOWN_UNIT",
                Some(unit),
                None,
                format!("schedule references unit '{unit}' absent from the panel"),
            );
        }
    }

    // Non-absorbing treatment: the per-row claims must derive an indicator
    // that never switches off, and should agree across a unit's rows.
    for ui in 0..ds.n_units() {
        let unit = &ds.units()[ui];
        let mut last_claim: Option<RawTreatment> = None;
        let mut last_d = false;
        let mut inconsistent = false;
        let mut nonabsorbing_at: Option<Period> = None;
        for pi in 0..ds.n_periods() {
            let claim = ds.row_treatment(ui, pi);
            if claim == RawTreatment::Absent {
                continue;
            }
            let d = match claim {
                RawTreatment::Year(y) => ds.periods()[pi] >= y,
                _ => false,
            };
            if let Some(prev) = last_claim {
                if prev != claim {
                    inconsistent = true;
                }
            }
            if last_d && !d {
                nonabsorbing_at = Some(ds.periods()[pi]);
            }
            last_claim = Some(claim);
            last_d = d;
        }
        if let Some(period) = nonabsorbing_at {
            report.error(
                "NON_ABSORBING",
                Some(unit),
                Some(period),
                format!("unit '{unit}' switches from treated back to untreated at {period}"),
            );
        } else if inconsistent {
            report.warning(
                "INCONSISTENT_TREATMENT",
                Some(unit),
                None,
                format!("rows of unit '{unit}' disagree on the treatment year"),
            );
        }
        if ds.schedule().get(unit).is_none() {
            report.warning(
                "UNSCHEDULED_UNIT",
                Some(unit),
                None,
                format!("unit '{unit}' missing from the schedule; treated as never"),
            );
        }
    }

    for (ui, coord) in ds.coordinates().iter().enumerate() {
        let unit = &ds.units()[ui];
        match coord {
            Some(p) if !p.in_range() => {
                report.error(
                    "COORD_RANGE",
                    Some(unit),
                    None,
                    format!("coordinates ({}, {}) outside [-90,90]x[-180,180]", p.lat, p.lon),
                );
            }
            None => {
                report.warning(
                    "MISSING_COORDS",
                    Some(unit),
                    None,
                    format!("unit '{unit}' has no coordinates; spatial inference unavailable"),
                );
            }
            _ => {}
        }
    }

    report
}

/// Sub-panel of units with a non-missing `outcome` value in every period.
///
/// The period set is unchanged; all columns are filtered to the surviving
/// units. Idempotent.
///
/// # Errors
/// [`Error::UnknownColumn`] if `outcome` does not exist;
/// [`Error::EmptyResult`] if no unit survives.
pub fn complete_cases(ds: &PanelDataset, outcome: &str) -> Result<PanelDataset> {
    let col = ds.outcome(outcome)?;
    let keep: Vec<usize> = (0..ds.n_units())
        .filter(|&ui| (0..ds.n_periods()).all(|pi| col[ds.cell(ui, pi)].is_some()))
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no unit has a complete '{outcome}' series"
        )));
    }
    Ok(subset_units(ds, &keep))
}

/// Clone a panel keeping only the units at the given positions.
pub fn subset_units(ds: &PanelDataset, keep: &[usize]) -> PanelDataset {
    let units: Vec<UnitId> = keep.iter().map(|&ui| ds.units()[ui].clone()).collect();
    let mut schedule = TreatmentSchedule::new();
    for u in &units {
        if let Some(t) = ds.schedule().get(u) {
            schedule.set(u.clone(), t);
        }
    }
    let mut out = PanelDataset::new(units, ds.periods().to_vec(), schedule);
    let np = ds.n_periods();
    for (name, col) in &ds.outcomes {
        let cells: Vec<Option<f64>> = keep
            .iter()
            .flat_map(|&ui| (0..np).map(move |pi| col[ui * np + pi]))
            .collect();
        out.add_outcome(name.clone(), cells).expect("length preserved");
    }
    for (name, col) in &ds.covariates {
        let vals: Vec<f64> = keep.iter().map(|&ui| col[ui]).collect();
        out.add_covariate(name.clone(), vals).expect("length preserved");
    }
    for (name, col) in &ds.cluster_labels {
        let vals: Vec<String> = keep.iter().map(|&ui| col[ui].clone()).collect();
        out.add_cluster_label(name.clone(), vals).expect("length preserved");
    }
    let coords: Vec<Option<GeoPoint>> = keep.iter().map(|&ui| ds.coordinates[ui]).collect();
    out.set_coordinates(coords).expect("length preserved");
    for (new_ui, &old_ui) in keep.iter().enumerate() {
        for pi in 0..np {
            out.set_row_treatment(new_ui, pi, ds.row_treatment(old_ui, pi));
        }
    }
    out
}

/// Event time of `unit` at calendar year `t`: `t - first_treated(unit)`.
///
/// Returns `Ok(None)` for never-treated units.
///
/// # Errors
/// [`Error::UnknownUnit`] if the panel has no such unit.
pub fn event_time(ds: &PanelDataset, unit: &str, t: Period) -> Result<Option<i32>> {
    let ui = ds
        .unit_pos(unit)
        .ok_or_else(|| Error::UnknownUnit(unit.to_string()))?;
    Ok(match ds.treatment(ui) {
        Treatment::Never => None,
        Treatment::AtYear(y) => Some(t - y),
    })
}
