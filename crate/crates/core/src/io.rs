//! CSV input and output.
//!
//! All float output goes through Rust's shortest round-trip formatting,
//! so a written file re-ingests to bit-identical values. Panel reading
//! preserves enough raw information (per-row treatment claims, duplicate
//! keys) for validation to detect contradictory inputs.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::micro::{MicroRecord, Sex};
use crate::panel::{
    PanelDataset, Period, RawTreatment, Treatment, TreatmentSchedule, UnitId,
};
use crate::spatial::{GeoPoint, InstitutionSite, SiteKind};

/// Unit-level geography and treatment metadata (the `schedule.csv` input
/// of panel construction).
#[derive(Debug, Clone, Default)]
pub struct UnitGeography {
    pub schedule: TreatmentSchedule,
    pub coords: BTreeMap<UnitId, GeoPoint>,
    pub county: BTreeMap<UnitId, String>,
    pub hundred: BTreeMap<UnitId, String>,
}

fn file_name(path: &Path) -> String {
    path.display().to_string()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    if e.is_io_error() {
        Error::Io(format!("{}: {e}", file_name(path)))
    } else {
        Error::Parse { file: file_name(path), line, message: e.to_string() }
    }
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { file: file_name(path), line, message: message.into() }
}

fn require_column(path: &Path, headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("{}: missing column '{name}'", file_name(path))))
}

fn optional_column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h == name)
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize) -> &'a str {
    rec.get(idx).unwrap_or("").trim()
}

fn record_line(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

fn parse_f64(path: &Path, line: u64, name: &str, s: &str) -> Result<Option<f64>> {
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| parse_error(path, line, format!("bad number '{s}' in column '{name}'")))
}

fn parse_i32(path: &Path, line: u64, name: &str, s: &str) -> Result<i32> {
    s.parse::<i32>()
        .map_err(|_| parse_error(path, line, format!("bad integer '{s}' in column '{name}'")))
}

/// Shortest round-trip decimal text for a float.
fn fmt_f64(v: f64) -> String {
    v.to_string()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

const PANEL_META: [&str; 7] =
    ["unit_id", "year", "treatment_year", "lat", "lon", "county", "hundred"];

/// Read a unit×period panel.
///
/// Required columns: `unit_id`, `year`, `treatment_year` (empty =
/// never treated). Recognized metadata: `lat`, `lon`, `county`,
/// `hundred`. Every other column is a unit×period value column (empty or
/// `NA` = missing); value columns that are present and constant within
/// every unit are additionally registered as time-invariant covariates.
/// Duplicate (unit, year) keys keep the last value and are recorded for
/// validation, as are the per-row treatment claims.
pub fn read_panel_csv(path: &Path) -> Result<PanelDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let unit_idx = require_column(path, &headers, "unit_id")?;
    let year_idx = require_column(path, &headers, "year")?;
    let treat_idx = require_column(path, &headers, "treatment_year")?;
    let lat_idx = optional_column(&headers, "lat");
    let lon_idx = optional_column(&headers, "lon");
    let county_idx = optional_column(&headers, "county");
    let hundred_idx = optional_column(&headers, "hundred");
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !PANEL_META.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    struct Row {
        unit: String,
        year: Period,
        claim: RawTreatment,
        coord: Option<GeoPoint>,
        county: String,
        hundred: String,
        values: Vec<Option<f64>>,
    }

    let mut rows: Vec<Row> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let unit = field(&rec, unit_idx).to_string();
        let year = parse_i32(path, line, "year", field(&rec, year_idx))?;
        let treat_raw = field(&rec, treat_idx);
        let claim = if treat_raw.is_empty() || treat_raw == "NA" {
            RawTreatment::Never
        } else {
            RawTreatment::Year(parse_i32(path, line, "treatment_year", treat_raw)?)
        };
        let lat = match lat_idx {
            Some(i) => parse_f64(path, line, "lat", field(&rec, i))?,
            None => None,
        };
        let lon = match lon_idx {
            Some(i) => parse_f64(path, line, "lon", field(&rec, i))?,
            None => None,
        };
        let coord = match (lat, lon) {
            (Some(la), Some(lo)) => Some(GeoPoint::new(la, lo)),
            _ => None,
        };
        let county = county_idx.map(|i| field(&rec, i).to_string()).unwrap_or_default();
        let hundred = hundred_idx.map(|i| field(&rec, i).to_string()).unwrap_or_default();
        let mut values = Vec::with_capacity(value_cols.len());
        for (i, name) in &value_cols {
            values.push(parse_f64(path, line, name, field(&rec, *i))?);
        }
        rows.push(Row { unit, year, claim, coord, county, hundred, values });
    }
    if rows.is_empty() {
        return Err(Error::EmptyResult(format!("{}: no data rows", file_name(path))));
    }

    // Units in first-appearance order; periods ascending.
    let mut units: Vec<String> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for r in &rows {
            if seen.insert(r.unit.clone()) {
                units.push(r.unit.clone());
            }
        }
    }
    let mut periods: Vec<Period> = rows.iter().map(|r| r.year).collect();
    periods.sort_unstable();
    periods.dedup();

    // Schedule from each unit's first claim.
    let mut schedule = TreatmentSchedule::new();
    for r in &rows {
        if schedule.get(&r.unit).is_none() {
            let tr = match r.claim {
                RawTreatment::Year(y) => Treatment::AtYear(y),
                _ => Treatment::Never,
            };
            schedule.set(r.unit.clone(), tr);
        }
    }

    let mut ds = PanelDataset::new(units.clone(), periods.clone(), schedule);
    let n_periods = periods.len();
    let mut columns: Vec<Vec<Option<f64>>> =
        vec![vec![None; units.len() * n_periods]; value_cols.len()];
    let mut filled = vec![false; units.len() * n_periods];
    let mut coords: Vec<Option<GeoPoint>> = vec![None; units.len()];
    let mut county: Vec<String> = vec![String::new(); units.len()];
    let mut hundred: Vec<String> = vec![String::new(); units.len()];
    for r in &rows {
        let ui = ds.unit_pos(&r.unit).expect("unit registered above");
        let pi = ds.period_pos(r.year).expect("period registered above");
        let cell = ui * n_periods + pi;
        if filled[cell] {
            ds.record_duplicate(r.unit.clone(), r.year);
        }
        filled[cell] = true;
        ds.set_row_treatment(ui, pi, r.claim);
        for (c, v) in r.values.iter().enumerate() {
            columns[c][cell] = *v;
        }
        if coords[ui].is_none() {
            coords[ui] = r.coord;
        }
        if county[ui].is_empty() {
            county[ui] = r.county.clone();
        }
        if hundred[ui].is_empty() {
            hundred[ui] = r.hundred.clone();
        }
    }

    for ((_, name), cells) in value_cols.iter().zip(columns.into_iter()) {
        // Promote to covariate when present and constant within every unit.
        let mut constant = true;
        let mut per_unit = Vec::with_capacity(units.len());
        'outer: for ui in 0..units.len() {
            let first = cells[ui * n_periods];
            match first {
                None => {
                    constant = false;
                    break 'outer;
                }
                Some(v) => {
                    for pi in 1..n_periods {
                        if cells[ui * n_periods + pi] != Some(v) {
                            constant = false;
                            break 'outer;
                        }
                    }
                    per_unit.push(v);
                }
            }
        }
        if constant {
            ds.add_covariate(name.clone(), per_unit)?;
        }
        ds.add_outcome(name.clone(), cells)?;
    }
    ds.set_coordinates(coords)?;
    if county.iter().any(|c| !c.is_empty()) {
        ds.add_cluster_label("county", county)?;
    }
    if hundred.iter().any(|c| !c.is_empty()) {
        ds.add_cluster_label("hundred", hundred)?;
    }
    Ok(ds)
}

/// Write a panel in the format [`read_panel_csv`] accepts. Covariates
/// that shadow an outcome column are not written twice.
pub fn write_panel_csv(ds: &PanelDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let outcome_names: Vec<&String> = ds.outcome_names().collect();
    let covariate_names: Vec<&String> = ds
        .covariate_names()
        .filter(|c| !ds.has_outcome(c))
        .collect();
    let mut header: Vec<String> = PANEL_META.iter().map(|s| s.to_string()).collect();
    header.extend(outcome_names.iter().map(|s| s.to_string()));
    header.extend(covariate_names.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;

    let n_periods = ds.n_periods();
    for (ui, unit) in ds.units().iter().enumerate() {
        let treatment = match ds.treatment(ui) {
            Treatment::Never => String::new(),
            Treatment::AtYear(y) => y.to_string(),
        };
        let (lat, lon) = match ds.coordinates()[ui] {
            Some(c) => (fmt_f64(c.lat), fmt_f64(c.lon)),
            None => (String::new(), String::new()),
        };
        let county = ds
            .cluster_label("county")
            .map(|v| v[ui].clone())
            .unwrap_or_default();
        let hundred = ds
            .cluster_label("hundred")
            .map(|v| v[ui].clone())
            .unwrap_or_default();
        for (pi, period) in ds.periods().iter().enumerate() {
            let mut rec: Vec<String> = vec![
                unit.clone(),
                period.to_string(),
                treatment.clone(),
                lat.clone(),
                lon.clone(),
                county.clone(),
                hundred.clone(),
            ];
            for name in &outcome_names {
                let cells = ds.outcome(name)?;
                rec.push(fmt_opt(cells[ui * n_periods + pi]));
            }
            for name in &covariate_names {
                rec.push(fmt_f64(ds.covariate(name)?[ui]));
            }
            w.write_record(&rec).map_err(|e| csv_error(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}

/// Read individual-level records.
///
/// Required columns: `parish_id`, `year`. Optional: `age`, `sex`,
/// `birth_county`, `residence_county`, `hisco_major`, `hiscam`.
/// Unreadable optional fields become missing values, each with a warning;
/// HISCO majors outside 0–9 are likewise dropped to missing with a
/// warning.
pub fn read_micro_csv(path: &Path) -> Result<(Vec<MicroRecord>, Vec<String>)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let parish_idx = require_column(path, &headers, "parish_id")?;
    let year_idx = require_column(path, &headers, "year")?;
    let age_idx = optional_column(&headers, "age");
    let sex_idx = optional_column(&headers, "sex");
    let birth_idx = optional_column(&headers, "birth_county");
    let res_idx = optional_column(&headers, "residence_county");
    let hisco_idx = optional_column(&headers, "hisco_major");
    let hiscam_idx = optional_column(&headers, "hiscam");

    let mut records = Vec::new();
    let mut warnings = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let parish = field(&rec, parish_idx).to_string();
        if parish.is_empty() {
            return Err(parse_error(path, line, "empty parish_id"));
        }
        let year = parse_i32(path, line, "year", field(&rec, year_idx))?;
        let age = match age_idx.map(|i| field(&rec, i)) {
            None | Some("") | Some("NA") => None,
            Some(s) => match s.parse::<u32>() {
                Ok(a) => Some(a),
                Err(_) => {
                    warnings.push(format!("line {line}: unreadable age '{s}'"));
                    None
                }
            },
        };
        let sex = match sex_idx.map(|i| field(&rec, i).to_ascii_lowercase()) {
            Some(s) if s == "f" || s == "female" || s == "w" || s == "woman" => Sex::Female,
            Some(s) if s == "m" || s == "male" || s == "man" => Sex::Male,
            _ => Sex::Unknown,
        };
        let optional_string = |idx: Option<usize>| -> Option<String> {
            idx.map(|i| field(&rec, i)).filter(|s| !s.is_empty() && *s != "NA").map(String::from)
        };
        let birth_county = optional_string(birth_idx);
        let residence_county = optional_string(res_idx);
        let hisco_major = match hisco_idx.map(|i| field(&rec, i)) {
            None | Some("") | Some("NA") => None,
            Some(s) => match s.parse::<u8>() {
                Ok(m) if m <= 9 => Some(m),
                Ok(m) => {
                    warnings.push(format!("line {line}: hisco_major {m} out of range 0-9"));
                    None
                }
                Err(_) => {
                    warnings.push(format!("line {line}: unreadable hisco_major '{s}'"));
                    None
                }
            },
        };
        let hiscam = match hiscam_idx.map(|i| field(&rec, i)) {
            None | Some("") | Some("NA") => None,
            Some(s) => match s.parse::<f64>() {
                Ok(v) => Some(v),
                Err(_) => {
                    warnings.push(format!("line {line}: unreadable hiscam '{s}'"));
                    None
                }
            },
        };
        records.push(MicroRecord {
            parish,
            year,
            age,
            sex,
            birth_county,
            residence_county,
            hisco_major,
            hiscam,
        });
    }
    Ok((records, warnings))
}

/// Read institution sites: columns `kind`, `lat`, `lon`, `opening_year`.
pub fn read_sites_csv(path: &Path) -> Result<Vec<InstitutionSite>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let kind_idx = require_column(path, &headers, "kind")?;
    let lat_idx = require_column(path, &headers, "lat")?;
    let lon_idx = require_column(path, &headers, "lon")?;
    let year_idx = require_column(path, &headers, "opening_year")?;
    let mut sites = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let kind_raw = field(&rec, kind_idx);
        let kind = SiteKind::parse(kind_raw)
            .ok_or_else(|| parse_error(path, line, format!("unknown site kind '{kind_raw}'")))?;
        let lat = parse_f64(path, line, "lat", field(&rec, lat_idx))?
            .ok_or_else(|| parse_error(path, line, "missing lat"))?;
        let lon = parse_f64(path, line, "lon", field(&rec, lon_idx))?
            .ok_or_else(|| parse_error(path, line, "missing lon"))?;
        let opening_year = parse_i32(path, line, "opening_year", field(&rec, year_idx))?;
        sites.push(InstitutionSite { location: GeoPoint::new(lat, lon), opening_year, kind });
    }
    Ok(sites)
}

/// Read named polyline paths: columns `name`, `seq`, `lat`, `lon`;
/// vertices are ordered by `seq` within each name.
pub fn read_paths_csv(path: &Path) -> Result<BTreeMap<String, Vec<GeoPoint>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let name_idx = require_column(path, &headers, "name")?;
    let seq_idx = require_column(path, &headers, "seq")?;
    let lat_idx = require_column(path, &headers, "lat")?;
    let lon_idx = require_column(path, &headers, "lon")?;
    let mut raw: BTreeMap<String, Vec<(i32, GeoPoint)>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let name = field(&rec, name_idx).to_string();
        if name.is_empty() {
            return Err(parse_error(path, line, "empty path name"));
        }
        let seq = parse_i32(path, line, "seq", field(&rec, seq_idx))?;
        let lat = parse_f64(path, line, "lat", field(&rec, lat_idx))?
            .ok_or_else(|| parse_error(path, line, "missing lat"))?;
        let lon = parse_f64(path, line, "lon", field(&rec, lon_idx))?
            .ok_or_else(|| parse_error(path, line, "missing lon"))?;
        raw.entry(name).or_default().push((seq, GeoPoint::new(lat, lon)));
    }
    Ok(raw
        .into_iter()
        .map(|(name, mut pts)| {
            pts.sort_by_key(|(s, _)| *s);
            (name, pts.into_iter().map(|(_, p)| p).collect())
        })
        .collect())
}

/// Read unit geography/treatment metadata: columns `unit_id`,
/// `treatment_year` (empty = never), optional `lat`, `lon`, `county`,
/// `hundred`. First row wins per unit.
pub fn read_schedule_csv(path: &Path) -> Result<UnitGeography> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let unit_idx = require_column(path, &headers, "unit_id")?;
    let treat_idx = require_column(path, &headers, "treatment_year")?;
    let lat_idx = optional_column(&headers, "lat");
    let lon_idx = optional_column(&headers, "lon");
    let county_idx = optional_column(&headers, "county");
    let hundred_idx = optional_column(&headers, "hundred");
    let mut geo = UnitGeography::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = record_line(&rec);
        let unit = field(&rec, unit_idx).to_string();
        if unit.is_empty() {
            return Err(parse_error(path, line, "empty unit_id"));
        }
        if geo.schedule.get(&unit).is_some() {
            continue;
        }
        let treat_raw = field(&rec, treat_idx);
        let tr = if treat_raw.is_empty() || treat_raw == "NA" {
            Treatment::Never
        } else {
            Treatment::AtYear(parse_i32(path, line, "treatment_year", treat_raw)?)
        };
        geo.schedule.set(unit.clone(), tr);
        let lat = match lat_idx {
            Some(i) => parse_f64(path, line, "lat", field(&rec, i))?,
            None => None,
        };
        let lon = match lon_idx {
            Some(i) => parse_f64(path, line, "lon", field(&rec, i))?,
            None => None,
        };
        if let (Some(la), Some(lo)) = (lat, lon) {
            geo.coords.insert(unit.clone(), GeoPoint::new(la, lo));
        }
        if let Some(c) = county_idx.map(|i| field(&rec, i)).filter(|s| !s.is_empty()) {
            geo.county.insert(unit.clone(), c.to_string());
        }
        if let Some(h) = hundred_idx.map(|i| field(&rec, i)).filter(|s| !s.is_empty()) {
            geo.hundred.insert(unit.clone(), h.to_string());
        }
    }
    if geo.schedule.is_empty() {
        return Err(Error::EmptyResult(format!("{}: no data rows", file_name(path))));
    }
    Ok(geo)
}

/// Write group-time cells.
pub fn write_cells_csv(cells: &[crate::attgt::GroupTimeCell], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "g",
        "t",
        "base",
        "event_time",
        "att",
        "se",
        "n_treated",
        "n_control",
    ])
    .map_err(|e| csv_error(path, e))?;
    for c in cells {
        w.write_record([
            c.g.to_string(),
            c.t.to_string(),
            c.base.to_string(),
            c.event_time().to_string(),
            fmt_f64(c.att),
            fmt_f64(c.se),
            c.n_treated.to_string(),
            c.n_control.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}

/// Write an event-study series.
pub fn write_event_study_csv(series: &crate::attgt::EventStudySeries, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "event_time",
        "estimate",
        "se",
        "ci_lo",
        "ci_hi",
        "band_lo",
        "band_hi",
        "n_cells",
    ])
    .map_err(|e| csv_error(path, e))?;
    for p in &series.points {
        w.write_record([
            p.event_time.to_string(),
            fmt_f64(p.estimate),
            fmt_f64(p.se),
            fmt_f64(p.ci_lo),
            fmt_f64(p.ci_hi),
            fmt_f64(p.band_lo),
            fmt_f64(p.band_hi),
            p.n_cells.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}

/// Write estimate-table rows.
pub fn write_estimates_csv(rows: &[crate::twfe::EstimateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record([
        "outcome",
        "estimator",
        "vcov",
        "estimate",
        "se",
        "stars",
        "n",
        "outcome_mean",
    ])
    .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.outcome.clone(),
            r.estimator.clone(),
            r.vcov.clone(),
            fmt_f64(r.estimate),
            fmt_f64(r.se),
            r.stars.clone(),
            r.n.to_string(),
            fmt_f64(r.outcome_mean),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}

/// Write summary-statistics rows.
pub fn write_summary_csv(rows: &[crate::diagnostics::SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["variable", "n", "mean", "sd", "min", "max"])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.variable.clone(),
            r.n.to_string(),
            fmt_opt(r.mean),
            fmt_opt(r.sd),
            fmt_opt(r.min),
            fmt_opt(r.max),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}

/// Write balance rows.
pub fn write_balance_csv(rows: &[crate::diagnostics::BalanceRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["variable", "coefficient", "se", "stars", "n_treated", "n_control"])
        .map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.variable.clone(),
            fmt_f64(r.coefficient),
            fmt_f64(r.se),
            r.stars.clone(),
            r.n_treated.to_string(),
            r.n_control.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}

/// Write a density curve.
pub fn write_kde_csv(curve: &crate::diagnostics::KdeCurve, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(["grid", "density"]).map_err(|e| csv_error(path, e))?;
    for (g, d) in curve.grid.iter().zip(&curve.density) {
        w.write_record([fmt_f64(*g), fmt_f64(*d)])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", file_name(path))))?;
    Ok(())
}
