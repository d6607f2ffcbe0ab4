//! Command implementations.
//!
//! Each command is an ordinary function over a [`RunConfig`] plus resolved
//! paths, so integration tests drive them directly; `main` only parses
//! arguments and serializes errors. All outputs are deterministic given
//! inputs and seed: file bytes do not depend on thread count or run order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use paneldid::attgt::{
    aggregate_event_study, aggregate_overall, att_gt_all, bootstrap_overall_se, EventStudySeries,
};
use paneldid::diagnostics::{
    balance_regression, kde_export, ks_test, summary_stats, BalanceRow, KsResult, SummaryRow,
};
use paneldid::dgp::{monte_carlo, MonteCarloReport};
use paneldid::error::{Error, Result};
use paneldid::io::{
    read_micro_csv, read_panel_csv, read_paths_csv, read_schedule_csv, write_balance_csv,
    write_cells_csv, write_estimates_csv, write_panel_csv, write_summary_csv,
};
use paneldid::micro::build_panel;
use paneldid::panel::{complete_cases, validate_panel, PanelDataset, Treatment, ValidationReport};
use paneldid::regress::{ols, poisson_fit, DesignMatrix};
use paneldid::spatial::{market_access, min_distance_to_path};
use paneldid::twfe::{estimate_twfe, EstimateRow};
use paneldid::variance::{sandwich_vcov, se_from_vcov, VcovContext, VcovSpec};
use paneldid::zcrit;

use crate::config::RunConfig;

fn ensure_out_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::Io(format!("{}: {e}", out.display())))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Load a panel and refuse it unless validation reports no errors (the
/// panel-model invariant: empty errors ⇔ accepted by estimators).
fn read_validated_panel(path: &Path) -> Result<PanelDataset> {
    let ds = read_panel_csv(path)?;
    let report = validate_panel(&ds);
    if let Some(first) = report.errors.first() {
        return Err(Error::Schema(format!(
            "{}: panel failed validation with {} error(s); first: {} ({})",
            path.display(),
            report.errors.len(),
            first.code,
            first.message
        )));
    }
    Ok(ds)
}

/// The configured outcome list, defaulting to every outcome in the panel
/// in sorted column order.
fn resolve_outcomes(cfg: &RunConfig, ds: &PanelDataset) -> Result<Vec<String>> {
    let names: Vec<String> = if cfg.outcomes.names.is_empty() {
        ds.outcome_names().cloned().collect()
    } else {
        cfg.outcomes.names.clone()
    };
    if names.is_empty() {
        return Err(Error::Schema("panel has no outcome columns".into()));
    }
    for n in &names {
        if !ds.has_outcome(n) {
            return Err(Error::UnknownColumn(n.clone()));
        }
    }
    Ok(names)
}

/// Per-unit value of `var` at period index `pi`: outcome cell first, then
/// time-invariant covariate.
fn unit_value_at(ds: &PanelDataset, var: &str, ui: usize, pi: usize) -> Result<Option<f64>> {
    if ds.has_outcome(var) {
        Ok(ds.outcome(var)?[ui * ds.n_periods() + pi])
    } else if ds.has_covariate(var) {
        Ok(Some(ds.covariate(var)?[ui]))
    } else {
        Err(Error::UnknownColumn(var.to_string()))
    }
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

/// Validation report plus the exit code the CLI should use (0 iff clean).
pub fn cmd_validate(panel: &Path) -> Result<(ValidationReport, i32)> {
    let ds = read_panel_csv(panel)?;
    let report = validate_panel(&ds);
    let exit = if report.errors.is_empty() { 0 } else { 1 };
    Ok((report, exit))
}

// ---------------------------------------------------------------------------
// build-panel
// ---------------------------------------------------------------------------

/// Inputs for panel construction; `sites`/`anchors` are optional.
pub struct BuildInputs<'a> {
    pub micro: &'a Path,
    pub schedule: &'a Path,
    pub sites: Option<&'a Path>,
    pub anchors: Option<&'a Path>,
}

pub struct BuildOutput {
    pub panel_path: PathBuf,
    pub warnings: Vec<String>,
    pub n_units: usize,
    pub n_periods: usize,
}

/// Aggregate micro records into a parish-year panel, attach geography and
/// spatial covariates, and write the panel CSV.
pub fn cmd_build_panel(cfg: &RunConfig, inputs: &BuildInputs, out: &Path) -> Result<BuildOutput> {
    ensure_out_dir(out)?;
    let (records, warnings) = read_micro_csv(inputs.micro)?;
    let geo = read_schedule_csv(inputs.schedule)?;
    let mut ds = build_panel(&records, &geo.schedule, &geo.coords)?;

    let county: Vec<String> = ds
        .units()
        .iter()
        .map(|u| geo.county.get(u).cloned().unwrap_or_default())
        .collect();
    if county.iter().any(|c| !c.is_empty()) {
        ds.add_cluster_label("county", county)?;
    }
    let hundred: Vec<String> = ds
        .units()
        .iter()
        .map(|u| geo.hundred.get(u).cloned().unwrap_or_default())
        .collect();
    if hundred.iter().any(|c| !c.is_empty()) {
        ds.add_cluster_label("hundred", hundred)?;
    }

    // Spatial covariates need a position for every unit; fail loudly on a
    // missing one rather than silently leaving holes.
    let coord_of = |ds: &PanelDataset, ui: usize| -> Result<paneldid::spatial::GeoPoint> {
        ds.coordinates()[ui].ok_or_else(|| {
            Error::MissingCoords(format!(
                "unit '{}' has no coordinates; spatial columns need every unit placed",
                ds.units()[ui]
            ))
        })
    };

    if let Some(sites_path) = inputs.sites {
        let sites = paneldid::io::read_sites_csv(sites_path)?;
        let mut by_kind: BTreeMap<&'static str, Vec<paneldid::spatial::InstitutionSite>> =
            BTreeMap::new();
        for s in &sites {
            by_kind.entry(s.kind.label()).or_default().push(*s);
        }
        let n_periods = ds.n_periods();
        for (label, kind_sites) in by_kind {
            let mut cells = vec![None; ds.n_rows()];
            for ui in 0..ds.n_units() {
                let p = coord_of(&ds, ui)?;
                for (pi, &year) in ds.periods().iter().enumerate() {
                    let ma = market_access(p, &kind_sites, year, cfg.data.ma_floor_km)?;
                    cells[ui * n_periods + pi] = Some(ma);
                }
            }
            ds.add_outcome(format!("ma_{label}"), cells)?;
        }
    }

    if let Some(anchors_path) = inputs.anchors {
        let paths = read_paths_csv(anchors_path)?;
        for (name, path) in &paths {
            let mut values = Vec::with_capacity(ds.n_units());
            for ui in 0..ds.n_units() {
                let p = coord_of(&ds, ui)?;
                values.push(min_distance_to_path(p, path)?);
            }
            ds.add_covariate(format!("dist_{name}"), values)?;
        }
    }

    let panel_path = out.join("panel.csv");
    write_panel_csv(&ds, &panel_path)?;
    Ok(BuildOutput {
        panel_path,
        warnings,
        n_units: ds.n_units(),
        n_periods: ds.n_periods(),
    })
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

pub struct EstimateOutput {
    pub rows: Vec<EstimateRow>,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

/// Run the configured estimators per outcome; one row per
/// (outcome, estimator, vcov scheme).
pub fn cmd_estimate(
    cfg: &RunConfig,
    panel: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<EstimateOutput> {
    ensure_out_dir(out)?;
    cfg.estimators.validate()?;
    let ds = read_validated_panel(panel)?;
    let outcomes = resolve_outcomes(cfg, &ds)?;
    let schemes = cfg.vcov.parsed()?;
    let controls = cfg.controls.to_spec();
    let method = cfg.estimators.cs_method()?;
    let boot_seed = seed.unwrap_or(cfg.bootstrap.seed);

    let mut rows = Vec::new();
    for outcome in &outcomes {
        let ctx = format!("outcome {outcome}");
        if cfg.estimators.wants("twfe") {
            for scheme in &schemes {
                let row = estimate_twfe(&ds, outcome, &controls, scheme)
                    .map_err(|e| e.with_context(&ctx))?;
                rows.push(row);
            }
        }
        if cfg.estimators.wants("group_time") {
            let complete = complete_cases(&ds, outcome).map_err(|e| e.with_context(&ctx))?;
            let cells = att_gt_all(&complete, outcome, &cfg.estimators.cs_covariates, method)
                .map_err(|e| e.with_context(&ctx))?;
            let overall =
                aggregate_overall(&cells, &complete).map_err(|e| e.with_context(&ctx))?;
            let (se, vcov_label) = if cfg.bootstrap.reps > 0 {
                let se = bootstrap_overall_se(&overall, cfg.bootstrap.reps, boot_seed)
                    .map_err(|e| e.with_context(&ctx))?;
                (se, format!("bootstrap:{}", cfg.bootstrap.reps))
            } else {
                (overall.se, "influence".to_string())
            };
            let cells_col = complete.outcome(outcome)?;
            let non_missing: Vec<f64> = cells_col.iter().flatten().copied().collect();
            let outcome_mean = non_missing.iter().sum::<f64>() / non_missing.len() as f64;
            let stars = if se > 0.0 { zcrit::stars(overall.estimate / se) } else { "" };
            rows.push(EstimateRow {
                outcome: outcome.clone(),
                estimator: "group_time".into(),
                vcov: vcov_label,
                estimate: overall.estimate,
                se,
                stars: stars.into(),
                n: complete.n_units() * complete.n_periods(),
                outcome_mean,
            });
        }
    }

    let csv_path = out.join("estimates.csv");
    write_estimates_csv(&rows, &csv_path)?;
    let json_path = out.join("estimates.json");
    write_json(&rows, &json_path)?;
    Ok(EstimateOutput { rows, csv_path, json_path })
}

// ---------------------------------------------------------------------------
// event-study
// ---------------------------------------------------------------------------

pub struct EventStudyOutput {
    pub series: BTreeMap<String, EventStudySeries>,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
    pub cells_paths: Vec<PathBuf>,
}

/// Group-time cells aggregated by event time, per outcome.
pub fn cmd_event_study(
    cfg: &RunConfig,
    panel: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<EventStudyOutput> {
    ensure_out_dir(out)?;
    let ds = read_validated_panel(panel)?;
    let outcomes = resolve_outcomes(cfg, &ds)?;
    let method = cfg.estimators.cs_method()?;
    let boot_seed = seed.unwrap_or(cfg.bootstrap.seed);

    let mut series = BTreeMap::new();
    let mut cells_paths = Vec::new();
    for outcome in &outcomes {
        let ctx = format!("outcome {outcome}");
        let complete = complete_cases(&ds, outcome).map_err(|e| e.with_context(&ctx))?;
        let cells = att_gt_all(&complete, outcome, &cfg.estimators.cs_covariates, method)
            .map_err(|e| e.with_context(&ctx))?;
        let agg = aggregate_event_study(&cells, &complete, cfg.bootstrap.reps, boot_seed)
            .map_err(|e| e.with_context(&ctx))?;
        let cells_path = out.join(format!("cells_{outcome}.csv"));
        write_cells_csv(&cells, &cells_path)?;
        cells_paths.push(cells_path);
        series.insert(outcome.clone(), agg);
    }

    let csv_path = out.join("event_study.csv");
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    w.write_record([
        "outcome",
        "event_time",
        "estimate",
        "se",
        "ci_lo",
        "ci_hi",
        "band_lo",
        "band_hi",
        "n_cells",
    ])
    .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    for (outcome, agg) in &series {
        for p in &agg.points {
            w.write_record([
                outcome.clone(),
                p.event_time.to_string(),
                p.estimate.to_string(),
                p.se.to_string(),
                p.ci_lo.to_string(),
                p.ci_hi.to_string(),
                p.band_lo.to_string(),
                p.band_hi.to_string(),
                p.n_cells.to_string(),
            ])
            .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
        }
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;

    let json_path = out.join("event_study.json");
    write_json(&series, &json_path)?;
    Ok(EventStudyOutput { series, csv_path, json_path, cells_paths })
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KsRow {
    pub variable: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n_never: usize,
    pub n_ever: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsTables {
    pub base_period: i32,
    pub n_excluded_already_treated: usize,
    pub balance: Vec<BalanceRow>,
    pub ks: Vec<KsRow>,
    pub summary: Vec<SummaryRow>,
}

pub struct DiagnosticsOutput {
    pub tables: Option<DiagnosticsTables>,
    pub warning: Option<String>,
    pub paths: Vec<PathBuf>,
}

/// Balance regressions, KS tests, summary statistics, and density curves
/// on the base-period cross-section (units already treated at the base
/// period are excluded from the treated/never comparisons).
pub fn cmd_diagnostics(cfg: &RunConfig, panel: &Path, out: &Path) -> Result<DiagnosticsOutput> {
    ensure_out_dir(out)?;
    let ds = read_validated_panel(panel)?;
    let variables: Vec<String> = match &cfg.diagnostics.variables {
        Some(list) => list.clone(),
        None => resolve_outcomes(cfg, &ds)?,
    };
    if variables.is_empty() {
        return Ok(DiagnosticsOutput {
            tables: None,
            warning: Some("diagnostics variable list is empty; nothing to do".into()),
            paths: vec![],
        });
    }
    for v in &variables {
        if !ds.has_outcome(v) && !ds.has_covariate(v) {
            return Err(Error::UnknownColumn(v.clone()));
        }
    }

    let base = cfg.data.base_period.unwrap_or(ds.periods()[0]);
    let base_pi = ds
        .period_pos(base)
        .ok_or_else(|| Error::Schema(format!("base period {base} is not a panel period")))?;

    // Cross-section groups: units already treated at base are excluded;
    // the rest split into eventual adopters vs never treated.
    let mut group: Vec<Option<bool>> = Vec::with_capacity(ds.n_units());
    let mut n_excluded = 0usize;
    for ui in 0..ds.n_units() {
        group.push(match ds.treatment(ui) {
            Treatment::Never => Some(false),
            Treatment::AtYear(y) if y <= base => {
                n_excluded += 1;
                None
            }
            Treatment::AtYear(_) => Some(true),
        });
    }

    let mut balance = Vec::new();
    let mut ks = Vec::new();
    let mut density_rows: Vec<(String, &'static str, f64, f64)> = Vec::new();
    for var in &variables {
        let ctx = format!("variable {var}");
        let mut values = Vec::new();
        let mut flags = Vec::new();
        for ui in 0..ds.n_units() {
            let Some(ever) = group[ui] else { continue };
            if let Some(v) = unit_value_at(&ds, var, ui, base_pi)? {
                values.push(v);
                flags.push(ever);
            }
        }
        balance.push(
            balance_regression(var, &values, &flags).map_err(|e| e.with_context(&ctx))?,
        );
        let never: Vec<f64> = values
            .iter()
            .zip(&flags)
            .filter(|(_, f)| !**f)
            .map(|(v, _)| *v)
            .collect();
        let ever: Vec<f64> = values
            .iter()
            .zip(&flags)
            .filter(|(_, f)| **f)
            .map(|(v, _)| *v)
            .collect();
        let kr: KsResult = ks_test(&never, &ever).map_err(|e| e.with_context(&ctx))?;
        ks.push(KsRow {
            variable: var.clone(),
            statistic: kr.statistic,
            p_value: kr.p_value,
            n_never: kr.n0,
            n_ever: kr.n1,
        });
        for (vals, label) in [(&never, "never"), (&ever, "ever")] {
            let curve = kde_export(vals, cfg.diagnostics.grid_size)
                .map_err(|e| e.with_context(format!("{ctx} ({label} group)")))?;
            for (g, d) in curve.grid.iter().zip(&curve.density) {
                density_rows.push((var.clone(), label, *g, *d));
            }
        }
    }
    let summary = summary_stats(&ds, &variables)?;

    let balance_path = out.join("balance.csv");
    write_balance_csv(&balance, &balance_path)?;
    let summary_path = out.join("summary.csv");
    write_summary_csv(&summary, &summary_path)?;

    let ks_path = out.join("ks.csv");
    let mut w = csv::Writer::from_path(&ks_path)
        .map_err(|e| Error::Io(format!("{}: {e}", ks_path.display())))?;
    w.write_record(["variable", "statistic", "p_value", "n_never", "n_ever"])
        .map_err(|e| Error::Io(format!("{}: {e}", ks_path.display())))?;
    for r in &ks {
        w.write_record([
            r.variable.clone(),
            r.statistic.to_string(),
            r.p_value.to_string(),
            r.n_never.to_string(),
            r.n_ever.to_string(),
        ])
        .map_err(|e| Error::Io(format!("{}: {e}", ks_path.display())))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", ks_path.display())))?;

    let density_path = out.join("density.csv");
    let mut w = csv::Writer::from_path(&density_path)
        .map_err(|e| Error::Io(format!("{}: {e}", density_path.display())))?;
    w.write_record(["variable", "group", "grid", "density"])
        .map_err(|e| Error::Io(format!("{}: {e}", density_path.display())))?;
    for (var, label, g, d) in &density_rows {
        w.write_record([var.clone(), (*label).into(), g.to_string(), d.to_string()])
            .map_err(|e| Error::Io(format!("{}: {e}", density_path.display())))?;
    }
    w.flush()
        .map_err(|e| Error::Io(format!("{}: {e}", density_path.display())))?;

    let tables = DiagnosticsTables {
        base_period: base,
        n_excluded_already_treated: n_excluded,
        balance,
        ks,
        summary,
    };
    let json_path = out.join("diagnostics.json");
    write_json(&tables, &json_path)?;
    Ok(DiagnosticsOutput {
        tables: Some(tables),
        warning: None,
        paths: vec![balance_path, summary_path, ks_path, density_path, json_path],
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

pub struct SimulateOutput {
    pub report: MonteCarloReport,
    pub json_path: PathBuf,
}

/// Monte Carlo run of the configured estimator on the configured DGP.
pub fn cmd_simulate(cfg: &RunConfig, seed: Option<u64>, out: &Path) -> Result<SimulateOutput> {
    ensure_out_dir(out)?;
    let sim = cfg
        .simulate
        .as_ref()
        .ok_or_else(|| Error::Schema("simulate needs a [simulate] config section".into()))?;
    let dgp_cfg = sim.to_dgp_config(seed)?;
    let kind = sim.estimator_kind()?;
    let report = monte_carlo(kind, &dgp_cfg, sim.reps, dgp_cfg.seed)?;
    let json_path = out.join("monte_carlo.json");
    write_json(&report, &json_path)?;
    Ok(SimulateOutput { report, json_path })
}

// ---------------------------------------------------------------------------
// cross-section
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct CrossSectionRow {
    pub term: String,
    pub estimate: f64,
    pub se: f64,
    pub stars: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossSectionTable {
    pub outcome: String,
    pub period: i32,
    pub model: String,
    pub vcov: String,
    pub n: usize,
    pub log_likelihood: Option<f64>,
    pub dropped: Vec<String>,
    pub rows: Vec<CrossSectionRow>,
}

pub struct CrossSectionOutput {
    pub table: CrossSectionTable,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

/// One-period cross-section regression (OLS or Poisson) of a unit-level
/// outcome on unit-level regressors.
pub fn cmd_cross_section(cfg: &RunConfig, panel: &Path, out: &Path) -> Result<CrossSectionOutput> {
    ensure_out_dir(out)?;
    let section = cfg
        .cross_section
        .as_ref()
        .ok_or_else(|| Error::Schema("cross-section needs a [cross_section] config section".into()))?;
    let ds = read_validated_panel(panel)?;
    let period = section.period.unwrap_or_else(|| *ds.periods().last().expect("non-empty"));
    let pi = ds
        .period_pos(period)
        .ok_or_else(|| Error::Schema(format!("period {period} is not a panel period")))?;
    let spec = VcovSpec::parse(&section.vcov)?;

    // Complete-case unit rows over outcome and regressors.
    let mut kept_units = Vec::new();
    let mut y = Vec::new();
    let mut xcols: Vec<Vec<f64>> = vec![Vec::new(); section.regressors.len()];
    'unit: for ui in 0..ds.n_units() {
        let Some(yv) = unit_value_at(&ds, &section.outcome, ui, pi)? else {
            continue;
        };
        let mut row = Vec::with_capacity(section.regressors.len());
        for reg in &section.regressors {
            match unit_value_at(&ds, reg, ui, pi)? {
                Some(v) => row.push(v),
                None => continue 'unit,
            }
        }
        kept_units.push(ui);
        y.push(yv);
        for (c, v) in row.into_iter().enumerate() {
            xcols[c].push(v);
        }
    }
    if kept_units.len() < 2 {
        return Err(Error::EmptySample(format!(
            "cross-section at {period} has {} complete rows",
            kept_units.len()
        )));
    }

    let mut columns = vec![("intercept".to_string(), vec![1.0; y.len()])];
    for (name, col) in section.regressors.iter().zip(xcols) {
        columns.push((name.clone(), col));
    }
    let design = DesignMatrix::from_columns(columns)?;
    let fit = match section.model.as_str() {
        "ols" => ols(&design, &y, None)?,
        "poisson" => poisson_fit(&design, &y)?,
        other => {
            return Err(Error::Schema(format!(
                "unknown cross-section model '{other}' (expected 'ols' or 'poisson')"
            )))
        }
    };

    // Per-row variance context on the kept units.
    let cluster_codes: Option<Vec<usize>> = match &spec {
        VcovSpec::Cluster(label) => Some(if label == "unit" || label == "parish" {
            (0..kept_units.len()).collect()
        } else {
            let labels = ds.cluster_label(label)?;
            let mut codes = BTreeMap::new();
            kept_units
                .iter()
                .map(|&ui| {
                    let next = codes.len();
                    *codes.entry(labels[ui].clone()).or_insert(next)
                })
                .collect()
        }),
        _ => None,
    };
    let coords: Option<Vec<paneldid::spatial::GeoPoint>> = match &spec {
        VcovSpec::Conley { .. } => {
            let mut pts = Vec::with_capacity(kept_units.len());
            for &ui in &kept_units {
                pts.push(ds.coordinates()[ui].ok_or_else(|| {
                    Error::MissingCoords(format!(
                        "unit '{}' has no coordinates for spatial inference",
                        ds.units()[ui]
                    ))
                })?);
            }
            Some(pts)
        }
        _ => None,
    };
    let ctx = VcovContext {
        clusters: cluster_codes.as_deref(),
        coords: coords.as_deref(),
    };
    let vcov = sandwich_vcov(&fit, &spec, &ctx)?;
    let ses: Vec<f64> = (0..fit.retained_names.len())
        .map(|j| se_from_vcov(&vcov, j))
        .collect();

    let rows: Vec<CrossSectionRow> = fit
        .retained_names
        .iter()
        .zip(fit.coef_vec.iter())
        .zip(&ses)
        .map(|((name, est), se)| CrossSectionRow {
            term: name.clone(),
            estimate: *est,
            se: *se,
            stars: if *se > 0.0 { zcrit::stars(est / se) } else { "" }.into(),
        })
        .collect();

    let table = CrossSectionTable {
        outcome: section.outcome.clone(),
        period,
        model: section.model.clone(),
        vcov: spec.label(),
        n: y.len(),
        log_likelihood: fit.log_likelihood,
        dropped: fit.dropped_columns.clone(),
        rows,
    };

    let csv_path = out.join("cross_section.csv");
    let mut w = csv::Writer::from_path(&csv_path)
        .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    w.write_record(["term", "estimate", "se", "stars", "model", "vcov", "n"])
        .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    for r in &table.rows {
        w.write_record([
            r.term.clone(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.stars.clone(),
            table.model.clone(),
            table.vcov.clone(),
            table.n.to_string(),
        ])
        .map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;
    }
    w.flush().map_err(|e| Error::Io(format!("{}: {e}", csv_path.display())))?;

    let json_path = out.join("cross_section.json");
    write_json(&table, &json_path)?;
    Ok(CrossSectionOutput { table, csv_path, json_path })
}
