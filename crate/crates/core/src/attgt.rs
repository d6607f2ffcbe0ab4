//! Group-time average treatment effects for staggered adoption.
//!
//! Each cell ATT(g, t) compares the outcome change of cohort g against
//! never-treated units between a base period and t, with a varying base:
//! the last period before g for post cells (t ≥ g) and the last period
//! before t for pre cells (t < g). Analytic inference flows through
//! per-unit influence functions; aggregations (overall and event-study)
//! carry an extra term for the estimated cohort weights, and the event
//! study gets simultaneous bands from a Mammen multiplier bootstrap.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, Period};
use crate::regress::{ols, DesignMatrix};
use crate::variance::{derive_seed, mammen_draw};
use crate::zcrit::Z_95;

/// Rescaling constant between an interquartile range and a normal standard
/// deviation: qnorm(0.75) − qnorm(0.25).
pub const IQR_TO_SD: f64 = 1.3489795003921634;

/// Estimation method for a group-time cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CsMethod {
    /// Unadjusted difference of mean outcome changes.
    Simple,
    /// Linear outcome regression on time-invariant covariates, fitted on
    /// the never-treated units. With no covariates this reduces exactly
    /// to `Simple`.
    OutcomeRegression,
}

/// One estimated ATT(g, t) cell.
#[derive(Debug, Clone, Serialize)]
pub struct GroupTimeCell {
    /// Cohort period (first treated period).
    pub g: Period,
    /// Outcome period.
    pub t: Period,
    /// Base (comparison) period.
    pub base: Period,
    pub att: f64,
    pub se: f64,
    pub n_treated: usize,
    pub n_control: usize,
    /// Per-unit influence values, indexed like the dataset's units; zero
    /// for units outside the cell. Sums to zero.
    #[serde(skip_serializing)]
    pub influence: Vec<f64>,
}

impl GroupTimeCell {
    /// Event time of the cell in calendar units.
    pub fn event_time(&self) -> i32 {
        self.t - self.g
    }
}

/// Overall ATT aggregated across post-treatment cells.
#[derive(Debug, Clone, Serialize)]
pub struct OverallAtt {
    pub estimate: f64,
    pub se: f64,
    pub n_units: usize,
    pub n_cells: usize,
    #[serde(skip_serializing)]
    pub influence: Vec<f64>,
}

/// One event-study point.
#[derive(Debug, Clone, Serialize)]
pub struct EventStudyPoint {
    pub event_time: i32,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub n_cells: usize,
}

/// Event-study series with pointwise CIs and a simultaneous band.
#[derive(Debug, Clone, Serialize)]
pub struct EventStudySeries {
    pub points: Vec<EventStudyPoint>,
    /// Critical value of the simultaneous band (floored at the pointwise
    /// 95% normal value so bands always contain the CIs).
    pub band_critical: f64,
    pub bootstrap_reps: usize,
}

/// Multiplier bootstrap output.
#[derive(Debug, Clone)]
pub struct BootstrapResult {
    /// Per-column standard errors from the rescaled interquartile range.
    pub se: Vec<f64>,
    /// 95% critical value of the sup-t statistic.
    pub sup_t_crit: f64,
    pub draws: usize,
}

/// Resolve the base period for cell (g, t) under the varying-base rule.
fn base_period(ds: &PanelDataset, g: Period, t: Period) -> Result<Period> {
    let pg = ds
        .period_pos(g)
        .ok_or_else(|| Error::Schema(format!("group {g} is not a panel period")))?;
    let pt = ds
        .period_pos(t)
        .ok_or_else(|| Error::Schema(format!("period {t} is not a panel period")))?;
    let anchor = if t >= g { pg } else { pt };
    if anchor == 0 {
        return Err(Error::NoBasePeriod(format!(
            "cell ({g}, {t}) anchors at the first panel period"
        )));
    }
    Ok(ds.periods()[anchor - 1])
}

/// Estimate a single group-time cell.
///
/// Cohort g units are compared against never-treated units on the outcome
/// change from the base period to t. `covariates` names time-invariant
/// unit covariates and is only used by
/// [`CsMethod::OutcomeRegression`]. Units missing either cell value are
/// dropped from the comparison.
///
/// # Errors
/// [`Error::NoBasePeriod`] when no period precedes the anchor;
/// [`Error::EmptyCohort`] / [`Error::NoNeverTreated`] when a comparison
/// group is empty; [`Error::UnknownColumn`] for bad names;
/// [`Error::AllCollinear`] when the control regression has no usable
/// column.
pub fn att_gt(
    ds: &PanelDataset,
    outcome: &str,
    g: Period,
    t: Period,
    covariates: &[String],
    method: CsMethod,
) -> Result<GroupTimeCell> {
    let y = ds.outcome(outcome)?;
    let base = base_period(ds, g, t)?;
    let pt = ds.period_pos(t).expect("checked by base_period");
    let pb = ds.period_pos(base).expect("base is a panel period");
    let n_units = ds.n_units();
    let n_periods = ds.n_periods();

    let delta = |ui: usize| -> Option<f64> {
        let yt = y[ui * n_periods + pt]?;
        let yb = y[ui * n_periods + pb]?;
        Some(yt - yb)
    };

    let cohorts = ds.cohorts();
    let treated_all = cohorts.get(&g).cloned().unwrap_or_default();
    let treated: Vec<(usize, f64)> = treated_all
        .iter()
        .filter_map(|&ui| delta(ui).map(|d| (ui, d)))
        .collect();
    if treated.is_empty() {
        return Err(Error::EmptyCohort(g));
    }
    let controls: Vec<(usize, f64)> = ds
        .never_treated()
        .into_iter()
        .filter_map(|ui| delta(ui).map(|d| (ui, d)))
        .collect();
    if controls.is_empty() {
        return Err(Error::NoNeverTreated);
    }

    let n = n_units as f64;
    let n_g = treated.len() as f64;
    let n_c = controls.len() as f64;
    let g_bar = n_g / n;
    let c_bar = n_c / n;

    let mut influence = vec![0.0; n_units];
    let att;

    let use_regression =
        method == CsMethod::OutcomeRegression && !covariates.is_empty();
    if use_regression {
        // Control regression of the outcome change on an intercept plus
        // the covariates; treated means are adjusted by the prediction.
        let mut cols: Vec<(String, Vec<f64>)> = Vec::with_capacity(covariates.len() + 1);
        cols.push(("intercept".to_string(), vec![1.0; controls.len()]));
        for name in covariates {
            let values = ds.covariate(name)?;
            cols.push((
                name.clone(),
                controls.iter().map(|&(ui, _)| values[ui]).collect(),
            ));
        }
        let design = DesignMatrix::from_columns(cols)?;
        let dy_c: Vec<f64> = controls.iter().map(|&(_, d)| d).collect();
        let fit = ols(&design, &dy_c, None)?;
        let kr = fit.retained.len();

        // Covariate rows for treated units, restricted to retained columns.
        let cov_values: Vec<&[f64]> = covariates
            .iter()
            .map(|name| ds.covariate(name))
            .collect::<Result<_>>()?;
        let x_of = |ui: usize| -> Vec<f64> {
            fit.retained
                .iter()
                .map(|&col| if col == 0 { 1.0 } else { cov_values[col - 1][ui] })
                .collect()
        };

        let fitted = |xr: &[f64]| -> f64 {
            xr.iter()
                .zip(fit.coef_vec.iter())
                .map(|(x, b)| x * b)
                .sum()
        };

        let mut mean_x = vec![0.0; kr];
        let mut att_sum = 0.0;
        for &(ui, d) in &treated {
            let xr = x_of(ui);
            att_sum += d - fitted(&xr);
            for (acc, x) in mean_x.iter_mut().zip(&xr) {
                *acc += x;
            }
        }
        att = att_sum / n_g;
        for v in mean_x.iter_mut() {
            *v /= n_g;
        }

        for &(ui, d) in &treated {
            let xr = x_of(ui);
            influence[ui] = (d - fitted(&xr) - att) / g_bar;
        }
        // A = (1/n) Σ_C x xᵀ, so A⁻¹ = n · (X_CᵀX_C)⁻¹.
        // ψ_control = − m_xᵀ A⁻¹ x_i ê_i.
        let mx_ainv: Vec<f64> = (0..kr)
            .map(|j| {
                n * (0..kr).map(|p| mean_x[p] * fit.bread[(p, j)]).sum::<f64>()
            })
            .collect();
        for (ci, &(ui, _)) in controls.iter().enumerate() {
            let xr = x_of(ui);
            let lever: f64 = mx_ainv.iter().zip(&xr).map(|(a, x)| a * x).sum();
            influence[ui] = -lever * fit.residuals[ci];
        }
    } else {
        let mean_g = treated.iter().map(|&(_, d)| d).sum::<f64>() / n_g;
        let mean_c = controls.iter().map(|&(_, d)| d).sum::<f64>() / n_c;
        att = mean_g - mean_c;
        for &(ui, d) in &treated {
            influence[ui] = (d - mean_g) / g_bar;
        }
        for &(ui, d) in &controls {
            influence[ui] = -(d - mean_c) / c_bar;
        }
    }

    let se = influence.iter().map(|p| p * p).sum::<f64>().sqrt() / n;
    Ok(GroupTimeCell {
        g,
        t,
        base,
        att,
        se,
        n_treated: treated.len(),
        n_control: controls.len(),
        influence,
    })
}

/// Estimate every identifiable (g, t) cell: all post cells t ≥ g, and pre
/// cells whose own base period exists. Cohorts starting at the first panel
/// period have no base and are skipped.
pub fn att_gt_all(
    ds: &PanelDataset,
    outcome: &str,
    covariates: &[String],
    method: CsMethod,
) -> Result<Vec<GroupTimeCell>> {
    let cohorts = ds.cohorts();
    if cohorts.is_empty() {
        return Err(Error::NoTreated);
    }
    if ds.never_treated().is_empty() {
        return Err(Error::NoNeverTreated);
    }
    let mut cells = Vec::new();
    for (&g, _) in &cohorts {
        let pg = ds.period_pos(g).expect("cohort periods are panel periods");
        if pg == 0 {
            continue; // no base period for this cohort
        }
        for (pt, &t) in ds.periods().iter().enumerate() {
            if t < g && pt == 0 {
                continue; // pre cell with no earlier base
            }
            cells.push(att_gt(ds, outcome, g, t, covariates, method)?);
        }
    }
    if cells.is_empty() {
        return Err(Error::NoCells);
    }
    Ok(cells)
}

/// Cohort sizes for the cohorts appearing in `cells`, plus the implied
/// total treated count.
fn cohort_sizes(
    cells: &[&GroupTimeCell],
    ds: &PanelDataset,
) -> Result<(BTreeMap<Period, f64>, f64)> {
    let cohorts = ds.cohorts();
    let mut sizes = BTreeMap::new();
    for cell in cells {
        if sizes.contains_key(&cell.g) {
            continue;
        }
        let size = cohorts
            .get(&cell.g)
            .map(|v| v.len())
            .filter(|&s| s > 0)
            .ok_or(Error::EmptyCohort(cell.g))?;
        sizes.insert(cell.g, size as f64);
    }
    let total = sizes.values().sum();
    Ok((sizes, total))
}

/// Weighted aggregate of a set of cells sharing a weighting scheme:
/// estimate Σ_g w_g θ_g where θ_g averages the cohort's cells, with the
/// estimated-weight influence correction.
fn aggregate_cells(cells: &[&GroupTimeCell], ds: &PanelDataset) -> Result<(f64, Vec<f64>)> {
    let n_units = ds.n_units();
    let (sizes, n_treated_total) = cohort_sizes(cells, ds)?;
    let p_t = n_treated_total / n_units as f64;

    // Within-cohort means over the supplied cells.
    let mut by_g: BTreeMap<Period, Vec<&GroupTimeCell>> = BTreeMap::new();
    for cell in cells {
        by_g.entry(cell.g).or_default().push(cell);
    }
    let theta_g: BTreeMap<Period, f64> = by_g
        .iter()
        .map(|(&g, group)| {
            (g, group.iter().map(|c| c.att).sum::<f64>() / group.len() as f64)
        })
        .collect();
    let estimate: f64 = theta_g
        .iter()
        .map(|(g, th)| sizes[g] / n_treated_total * th)
        .sum();

    // ψ = Σ_g w_g · mean of cell influences + weight-estimation term.
    let mut influence = vec![0.0; n_units];
    for (&g, group) in &by_g {
        let w = sizes[&g] / n_treated_total / group.len() as f64;
        for cell in group {
            for (acc, p) in influence.iter_mut().zip(&cell.influence) {
                *acc += w * p;
            }
        }
    }
    let cohorts = ds.cohorts();
    for (&g, members) in &cohorts {
        if let Some(th) = theta_g.get(&g) {
            let wif = (th - estimate) / p_t;
            for &ui in members {
                influence[ui] += wif;
            }
        }
    }
    Ok((estimate, influence))
}

/// Aggregate post-treatment cells (t ≥ g) into a single overall ATT:
/// cohort-share-weighted mean of within-cohort post-cell means. The
/// influence function includes the correction for estimated cohort
/// shares; the standard error is the analytic influence-function value.
///
/// # Errors
/// [`Error::NoCells`] when no post-treatment cell is supplied.
pub fn aggregate_overall(cells: &[GroupTimeCell], ds: &PanelDataset) -> Result<OverallAtt> {
    let post: Vec<&GroupTimeCell> = cells.iter().filter(|c| c.t >= c.g).collect();
    if post.is_empty() {
        return Err(Error::NoCells);
    }
    let n_units = ds.n_units();
    for cell in &post {
        if cell.influence.len() != n_units {
            return Err(Error::Schema(format!(
                "cell ({}, {}) influence length {} != {} units",
                cell.g,
                cell.t,
                cell.influence.len(),
                n_units
            )));
        }
    }
    let (estimate, influence) = aggregate_cells(&post, ds)?;
    let se = influence.iter().map(|p| p * p).sum::<f64>().sqrt() / n_units as f64;
    Ok(OverallAtt {
        estimate,
        se,
        n_units,
        n_cells: post.len(),
        influence,
    })
}

/// Aggregate all cells by event time e = t − g (pre and post), weighting
/// cohorts within each e by size. Pointwise standard errors and the
/// simultaneous band come from the multiplier bootstrap when `b > 0`
/// (with `b ≥ 99` enforced); `b = 0` falls back to analytic standard
/// errors and a plain normal band.
pub fn aggregate_event_study(
    cells: &[GroupTimeCell],
    ds: &PanelDataset,
    b: usize,
    seed: u64,
) -> Result<EventStudySeries> {
    if cells.is_empty() {
        return Err(Error::NoCells);
    }
    let n_units = ds.n_units();
    let mut by_e: BTreeMap<i32, Vec<&GroupTimeCell>> = BTreeMap::new();
    for cell in cells {
        if cell.influence.len() != n_units {
            return Err(Error::Schema(format!(
                "cell ({}, {}) influence length {} != {} units",
                cell.g,
                cell.t,
                cell.influence.len(),
                n_units
            )));
        }
        by_e.entry(cell.event_time()).or_default().push(cell);
    }

    let mut event_times = Vec::new();
    let mut estimates = Vec::new();
    let mut counts = Vec::new();
    let mut psi = DMatrix::<f64>::zeros(n_units, by_e.len());
    for (j, (&e, group)) in by_e.iter().enumerate() {
        let (est, infl) = aggregate_cells(group, ds)?;
        event_times.push(e);
        estimates.push(est);
        counts.push(group.len());
        for (i, p) in infl.iter().enumerate() {
            psi[(i, j)] = *p;
        }
    }

    let analytic_se: Vec<f64> = (0..by_e.len())
        .map(|j| {
            (0..n_units)
                .map(|i| psi[(i, j)] * psi[(i, j)])
                .sum::<f64>()
                .sqrt()
                / n_units as f64
        })
        .collect();

    let (se, band_critical, reps) = if b > 0 {
        let boot = multiplier_bootstrap(&psi, b, seed)?;
        (boot.se, boot.sup_t_crit.max(Z_95), b)
    } else {
        (analytic_se, Z_95, 0)
    };

    let points = event_times
        .iter()
        .enumerate()
        .map(|(j, &e)| EventStudyPoint {
            event_time: e,
            estimate: estimates[j],
            se: se[j],
            ci_lo: estimates[j] - Z_95 * se[j],
            ci_hi: estimates[j] + Z_95 * se[j],
            band_lo: estimates[j] - band_critical * se[j],
            band_hi: estimates[j] + band_critical * se[j],
            n_cells: counts[j],
        })
        .collect();
    Ok(EventStudySeries {
        points,
        band_critical,
        bootstrap_reps: reps,
    })
}

/// Type-1 (inverse-ECDF) quantile of pre-sorted values.
fn quantile_type1_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[idx - 1]
}

/// Mammen multiplier bootstrap over an n×m influence matrix.
///
/// Each replication draws i.i.d. two-point weights v and forms
/// Rᵦⱼ = √n · meanᵢ(vᵢ ψᵢⱼ). Per-column standard errors rescale the
/// interquartile range of Rⱼ by qnorm(0.75) − qnorm(0.25) and divide by
/// √n; the sup-t critical value is the 95% type-1 quantile of
/// maxⱼ |Rᵦⱼ| / σⱼ over replications. Deterministic per seed, with
/// per-replication derived seeds so thread count never changes results.
///
/// # Errors
/// [`Error::Schema`] when `b < 99`; [`Error::DegenerateInfluence`] when
/// every column of the influence matrix is identically zero.
pub fn multiplier_bootstrap(
    influence: &DMatrix<f64>,
    b: usize,
    seed: u64,
) -> Result<BootstrapResult> {
    if b < 99 {
        return Err(Error::Schema(format!(
            "multiplier bootstrap needs at least 99 replications, got {b}"
        )));
    }
    let n = influence.nrows();
    let m = influence.ncols();
    if n == 0 || m == 0 {
        return Err(Error::DegenerateInfluence);
    }
    if influence.iter().all(|v| *v == 0.0) {
        return Err(Error::DegenerateInfluence);
    }

    let sqrt_n = (n as f64).sqrt();
    let draws: Vec<Vec<f64>> = (0..b)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, rep as u64));
            let v = mammen_draw(n, &mut rng);
            (0..m)
                .map(|j| {
                    let s: f64 = (0..n).map(|i| v[i] * influence[(i, j)]).sum();
                    s / sqrt_n
                })
                .collect()
        })
        .collect();

    let mut sigma = vec![0.0; m];
    for (j, s) in sigma.iter_mut().enumerate() {
        let mut col: Vec<f64> = draws.iter().map(|row| row[j]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).expect("finite bootstrap draws"));
        let iqr = quantile_type1_sorted(&col, 0.75) - quantile_type1_sorted(&col, 0.25);
        *s = iqr / IQR_TO_SD;
    }
    if sigma.iter().all(|s| *s == 0.0) {
        return Err(Error::DegenerateInfluence);
    }

    let mut sups: Vec<f64> = draws
        .iter()
        .map(|row| {
            row.iter()
                .zip(&sigma)
                .filter(|(_, s)| **s > 0.0)
                .map(|(r, s)| (r / s).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    sups.sort_by(|a, b| a.partial_cmp(b).expect("finite sup stats"));
    let crit = quantile_type1_sorted(&sups, 0.95);

    let se = sigma.iter().map(|s| s / sqrt_n).collect();
    Ok(BootstrapResult {
        se,
        sup_t_crit: crit,
        draws: b,
    })
}

/// Bootstrap standard error for an overall ATT from its influence column.
///
/// Convenience wrapper around [`multiplier_bootstrap`] for the single-column
/// case; errors as that function does.
pub fn bootstrap_overall_se(overall: &OverallAtt, b: usize, seed: u64) -> Result<f64> {
    let inf = DMatrix::from_column_slice(overall.influence.len(), 1, &overall.influence);
    Ok(multiplier_bootstrap(&inf, b, seed)?.se[0])
}
