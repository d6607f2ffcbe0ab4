//! Two-way fixed-effects estimation of a single treatment coefficient.
//!
//! The outcome is regressed on the absorbing treatment indicator after
//! demeaning both over unit and period fixed effects, optionally
//! augmented with county×period effects and covariate-decile×period
//! effects. Degrees of freedom account for the absorbed factors via the
//! connected-components correction.

use serde::Serialize;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::regress::{demean, encode_factor, ols, DesignMatrix, DEMEAN_MAX_ITER, DEMEAN_TOL};
use crate::variance::{sandwich_vcov, se_from_vcov, VcovContext, VcovSpec};
use crate::zcrit::stars;

/// Fixed-effect factors the estimator can absorb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeFactor {
    Unit,
    Period,
    /// Interaction of the "county" cluster label with the period.
    CountyPeriod,
}

/// Control specification for [`estimate_twfe`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSpec {
    /// Absorbed fixed-effect factors. Unit and period are always
    /// included; listing them here is idempotent.
    pub fe_factors: Vec<FeFactor>,
    /// Covariates whose sample deciles are interacted with the period.
    pub decile_vars: Vec<String>,
}

impl ControlSpec {
    /// Unit and period effects only.
    pub fn none() -> ControlSpec {
        ControlSpec { fe_factors: vec![FeFactor::Unit, FeFactor::Period], decile_vars: vec![] }
    }

    /// Unit, period, county×period, and decile×period effects for the
    /// given covariates.
    pub fn standard(decile_vars: Vec<String>) -> ControlSpec {
        ControlSpec {
            fe_factors: vec![FeFactor::Unit, FeFactor::Period, FeFactor::CountyPeriod],
            decile_vars,
        }
    }

    fn wants_county_period(&self) -> bool {
        self.fe_factors.contains(&FeFactor::CountyPeriod)
    }
}

/// One row of an estimate table.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub outcome: String,
    pub estimator: String,
    pub vcov: String,
    pub estimate: f64,
    pub se: f64,
    pub stars: String,
    pub n: usize,
    pub outcome_mean: f64,
}

/// Decile (or k-tile) bins by the type-1 inverse-ECDF quantile convention:
/// bin b covers values at or below the b/k quantile, ties share the lowest
/// feasible bin, and bins are 1-based.
///
/// # Errors
/// [`Error::EmptySample`] on empty input; [`Error::NonfiniteInput`] on
/// NaN/∞; [`Error::Schema`] when `k == 0`.
pub fn decile_bins(values: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Schema("bin count must be positive".into()));
    }
    if values.is_empty() {
        return Err(Error::EmptySample("decile input is empty".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonfiniteInput("decile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len();
    // Type-1 quantile at p = b/k: sorted[ceil(p·n) − 1].
    let cuts: Vec<f64> = (1..=k)
        .map(|b| {
            let idx = ((b as f64 / k as f64) * n as f64).ceil() as usize;
            sorted[idx.clamp(1, n) - 1]
        })
        .collect();
    Ok(values
        .iter()
        .map(|v| {
            cuts.iter()
                .position(|c| v <= c)
                .map(|p| p + 1)
                .unwrap_or(k) // only reachable for v == max under fp noise
        })
        .collect())
}

/// Number of connected components of the bipartite unit–period graph on
/// the estimation rows (the exact rank deficiency of two absorbed
/// factors).
fn unit_period_components(rows: &[(usize, usize)], n_units: usize, n_periods: usize) -> usize {
    // Union-find over unit nodes [0, n_units) and period nodes
    // [n_units, n_units + n_periods).
    let mut parent: Vec<usize> = (0..n_units + n_periods).collect();
    fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut used = vec![false; n_units + n_periods];
    for &(ui, pi) in rows {
        used[ui] = true;
        used[n_units + pi] = true;
        let a = find(&mut parent, ui);
        let b = find(&mut parent, n_units + pi);
        if a != b {
            parent[a] = b;
        }
    }
    (0..n_units + n_periods)
        .filter(|&x| used[x] && find(&mut parent, x) == x)
        .count()
}

/// Estimate the treatment coefficient of `outcome` under two-way fixed
/// effects with the given absorbed controls and variance scheme.
///
/// Rows with a missing outcome are dropped. The treatment indicator is
/// the absorbing 1[t ≥ adoption] dummy implied by the panel schedule.
/// Cluster labels `"unit"` and `"parish"` cluster on the panel unit; any
/// other label must exist as a unit-level cluster label.
///
/// # Errors
/// [`Error::UnknownColumn`] for unknown names; [`Error::NoTreated`] when
/// no estimation row is treated; [`Error::AllCollinear`] when the
/// indicator is absorbed by the fixed effects; [`Error::MissingCoords`]
/// for CONLEY without complete coordinates; [`Error::Schema`] when fewer
/// than two periods carry data.
pub fn estimate_twfe(
    ds: &PanelDataset,
    outcome: &str,
    controls: &ControlSpec,
    vcov: &VcovSpec,
) -> Result<EstimateRow> {
    let y_col = ds.outcome(outcome)?;
    let n_periods = ds.n_periods();

    let mut rows: Vec<(usize, usize)> = Vec::new();
    let mut y = Vec::new();
    let mut d = Vec::new();
    for ui in 0..ds.n_units() {
        for pi in 0..n_periods {
            if let Some(v) = y_col[ui * n_periods + pi] {
                rows.push((ui, pi));
                y.push(v);
                d.push(if ds.is_treated(ui, pi) { 1.0 } else { 0.0 });
            }
        }
    }
    let n = rows.len();
    {
        let mut seen = vec![false; n_periods];
        for &(_, pi) in &rows {
            seen[pi] = true;
        }
        if seen.iter().filter(|s| **s).count() < 2 {
            return Err(Error::Schema(format!(
                "outcome '{outcome}' is observed in fewer than two periods"
            )));
        }
    }
    if !d.iter().any(|&v| v == 1.0) {
        return Err(Error::NoTreated);
    }

    // Assemble absorbed factors: unit and period always, then optional
    // county×period and decile×period interactions.
    let unit_codes: Vec<usize> = rows.iter().map(|&(ui, _)| ui).collect();
    let (unit_codes, n_unit_levels) = encode_factor(&unit_codes);
    let period_codes_raw: Vec<usize> = rows.iter().map(|&(_, pi)| pi).collect();
    let (period_codes, n_period_levels) = encode_factor(&period_codes_raw);

    let mut factors: Vec<Vec<usize>> = vec![unit_codes, period_codes];
    let mut extra_levels: Vec<usize> = Vec::new();

    if controls.wants_county_period() {
        let county = ds.cluster_label("county")?;
        let keys: Vec<(String, usize)> = rows
            .iter()
            .map(|&(ui, pi)| (county[ui].clone(), pi))
            .collect();
        let (codes, levels) = encode_factor(&keys);
        factors.push(codes);
        extra_levels.push(levels);
    }
    for var in &controls.decile_vars {
        let values = ds.covariate(var)?;
        // Bins over the units entering the estimation sample.
        let mut sample_units: Vec<usize> = rows.iter().map(|&(ui, _)| ui).collect();
        sample_units.dedup();
        let mut uniq = sample_units.clone();
        uniq.sort_unstable();
        uniq.dedup();
        let unit_values: Vec<f64> = uniq.iter().map(|&ui| values[ui]).collect();
        let bins = decile_bins(&unit_values, 10)?;
        let bin_of: HashMap<usize, usize> =
            uniq.iter().copied().zip(bins.iter().copied()).collect();
        let keys: Vec<(usize, usize)> =
            rows.iter().map(|&(ui, pi)| (bin_of[&ui], pi)).collect();
        let (codes, levels) = encode_factor(&keys);
        factors.push(codes);
        extra_levels.push(levels);
    }

    let demeaned = demean(&[y.clone(), d.clone()], &factors, DEMEAN_TOL, DEMEAN_MAX_ITER)?;
    let design = DesignMatrix::from_columns(vec![(
        "treated".to_string(),
        demeaned[1].clone(),
    )])?;
    let fit = ols(&design, &demeaned[0], None)?;

    // Absorbed model dof: rank of the unit+period dummy span is
    // L_u + L_p − C (C = connected components); each extra factor adds an
    // estimated L_k − 1.
    let components = unit_period_components(&rows, ds.n_units(), n_periods);
    let absorbed = n_unit_levels + n_period_levels - components
        + extra_levels.iter().map(|l| l - 1).sum::<usize>();
    let fit = fit.with_absorbed_dof(absorbed);

    // Resolve per-row context for the variance scheme.
    let cluster_codes: Option<Vec<usize>> = match vcov {
        VcovSpec::Cluster(label) if label == "unit" || label == "parish" => {
            Some(rows.iter().map(|&(ui, _)| ui).collect())
        }
        VcovSpec::Cluster(label) => {
            let labels = ds.cluster_label(label)?;
            let keys: Vec<&str> = rows.iter().map(|&(ui, _)| labels[ui].as_str()).collect();
            Some(encode_factor(&keys).0)
        }
        _ => None,
    };
    let coords: Option<Vec<_>> = match vcov {
        VcovSpec::Conley { .. } => {
            let all = ds.coordinates();
            let mut cs = Vec::with_capacity(n);
            for &(ui, _) in &rows {
                match all[ui] {
                    Some(c) => cs.push(c),
                    None => {
                        return Err(Error::MissingCoords(format!(
                            "unit '{}' has no coordinates",
                            ds.units()[ui]
                        )))
                    }
                }
            }
            Some(cs)
        }
        _ => None,
    };
    let ctx = VcovContext {
        clusters: cluster_codes.as_deref(),
        coords: coords.as_deref(),
    };
    let v = sandwich_vcov(&fit, vcov, &ctx)?;
    let estimate = fit.coef_vec[0];
    let se = se_from_vcov(&v, 0);
    let z = if se > 0.0 { estimate / se } else { 0.0 };

    Ok(EstimateRow {
        outcome: outcome.to_string(),
        estimator: "twfe".to_string(),
        vcov: vcov.label(),
        estimate,
        se,
        stars: stars(z).to_string(),
        n,
        outcome_mean: y.iter().sum::<f64>() / n as f64,
    })
}
