//! Synthetic panel generation with known treatment effects, a
//! four-means 2×2 oracle, and a Monte Carlo harness for bias and
//! coverage checks.
//!
//! The outcome model is Y_it = α_i + λ_t + τ(g, t)·1[t ≥ g] + ε_it with
//! optional level selection into treatment and optional spatially
//! correlated noise. Cohort assignment uses largest-remainder rounding of
//! the target shares, so the realized truth is deterministic given the
//! configuration and matches the estimator's aggregation formula exactly.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::attgt::{aggregate_overall, att_gt_all, CsMethod, GroupTimeCell};
use crate::error::{Error, Result};
use crate::panel::{PanelDataset, Period, Treatment, TreatmentSchedule};
use crate::spatial::{great_circle_km, GeoPoint};
use crate::twfe::{estimate_twfe, ControlSpec};
use crate::variance::{derive_seed, VcovSpec};
use crate::zcrit::Z_95;

/// Cohort identity in a share specification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CohortSpec {
    Never,
    At(Period),
}

/// Treatment-effect surface τ(g, t) on post cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectSpec {
    /// The same effect on every post cell.
    Constant { value: f64 },
    /// base + event_slope·(t − g) + cohort_slope·(g − g₀), where g₀ is
    /// the earliest treated cohort.
    Linear { base: f64, event_slope: f64, cohort_slope: f64 },
}

impl EffectSpec {
    /// τ(g, t) for a post cell, given the earliest cohort g₀.
    pub fn tau(&self, g: Period, t: Period, first_cohort: Period) -> f64 {
        match *self {
            EffectSpec::Constant { value } => value,
            EffectSpec::Linear { base, event_slope, cohort_slope } => {
                base + event_slope * (t - g) as f64 + cohort_slope * (g - first_cohort) as f64
            }
        }
    }
}

/// Generator configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DgpConfig {
    pub n_units: usize,
    /// Strictly increasing panel periods.
    pub periods: Vec<Period>,
    /// Cohort shares (must be non-negative and sum to 1).
    pub shares: Vec<(CohortSpec, f64)>,
    pub effect: EffectSpec,
    /// Standard deviation of the unit effects.
    pub unit_sd: f64,
    /// Period effects; empty means all zero, otherwise one per period.
    pub period_effects: Vec<f64>,
    /// Standard deviation of the idiosyncratic noise.
    pub noise_sd: f64,
    /// Constant added to the unit effect of every treated unit (selection
    /// on levels — harmless for difference estimators).
    pub selection_on_level: f64,
    /// When set, noise is drawn with covariance exp(−d/range) between
    /// units (shared across periods).
    pub spatial_noise_range_km: Option<f64>,
    pub seed: u64,
}

impl DgpConfig {
    /// A small, well-behaved baseline configuration.
    pub fn baseline(n_units: usize, seed: u64) -> DgpConfig {
        DgpConfig {
            n_units,
            periods: (1..=6).collect(),
            shares: vec![
                (CohortSpec::At(3), 0.3),
                (CohortSpec::At(5), 0.3),
                (CohortSpec::Never, 0.4),
            ],
            effect: EffectSpec::Constant { value: 1.0 },
            unit_sd: 1.0,
            period_effects: vec![],
            noise_sd: 1.0,
            selection_on_level: 0.0,
            spatial_noise_range_km: None,
            seed,
        }
    }
}

/// Realized truth implied by a configuration: exact cell effects plus
/// their aggregates under the estimator's own weighting rules.
#[derive(Debug, Clone, Serialize)]
pub struct TruthRecord {
    /// τ(g, t) on post cells for realized cohorts with a base period.
    pub att: BTreeMap<(Period, Period), f64>,
    /// Cohort-share-weighted mean of within-cohort post-cell means.
    pub overall: f64,
    /// Event-time aggregates (pre event times are exactly zero).
    pub event_study: BTreeMap<i32, f64>,
    /// Realized cohort sizes.
    pub cohort_sizes: BTreeMap<Period, usize>,
    pub n_never: usize,
}

/// Largest-remainder apportionment of `n` units to shares.
fn apportion(n: usize, shares: &[(CohortSpec, f64)]) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(shares.len());
    let mut fracs: Vec<(usize, f64)> = Vec::with_capacity(shares.len());
    let mut assigned = 0usize;
    for (i, (_, s)) in shares.iter().enumerate() {
        let exact = s * n as f64;
        let base = exact.floor() as usize;
        counts.push(base);
        assigned += base;
        fracs.push((i, exact - base as f64));
    }
    // Distribute the remainder by descending fractional part, ties by
    // specification order (stable sort).
    fracs.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite shares"));
    for k in 0..n.saturating_sub(assigned) {
        counts[fracs[k % fracs.len()].0] += 1;
    }
    counts
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box–Muller; one value per call keeps the draw order obvious.
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

/// Generate a synthetic panel and its truth record.
///
/// Deterministic per configuration: identical configs produce
/// byte-identical datasets. Fixed draw order: unit effects, coordinates,
/// then noise (period-major).
///
/// # Errors
/// [`Error::BadShares`] when shares are negative, don't sum to 1, repeat
/// a cohort, or name a period outside the panel; [`Error::Schema`] on an
/// empty or unsorted period grid or zero units.
pub fn simulate_panel(cfg: &DgpConfig) -> Result<(PanelDataset, TruthRecord)> {
    if cfg.n_units == 0 {
        return Err(Error::Schema("n_units must be positive".into()));
    }
    if cfg.periods.is_empty() || cfg.periods.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Schema(
            "periods must be non-empty and strictly increasing".into(),
        ));
    }
    if !cfg.period_effects.is_empty() && cfg.period_effects.len() != cfg.periods.len() {
        return Err(Error::Schema(format!(
            "{} period effects for {} periods",
            cfg.period_effects.len(),
            cfg.periods.len()
        )));
    }
    if cfg.shares.is_empty() {
        return Err(Error::BadShares("no cohort shares given".into()));
    }
    if cfg.shares.iter().any(|(_, s)| *s < 0.0 || !s.is_finite()) {
        return Err(Error::BadShares("shares must be non-negative".into()));
    }
    let total: f64 = cfg.shares.iter().map(|(_, s)| s).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadShares(format!("shares sum to {total}, expected 1")));
    }
    {
        let mut seen = std::collections::BTreeSet::new();
        for (key, _) in &cfg.shares {
            if !seen.insert(*key) {
                return Err(Error::BadShares(format!("cohort {key:?} listed twice")));
            }
            if let CohortSpec::At(p) = key {
                if !cfg.periods.contains(p) {
                    return Err(Error::BadShares(format!(
                        "cohort period {p} is not a panel period"
                    )));
                }
            }
        }
    }

    let counts = apportion(cfg.n_units, &cfg.shares);
    let width = (cfg.n_units.max(2) - 1).to_string().len();
    let units: Vec<String> = (0..cfg.n_units)
        .map(|i| format!("u{i:0width$}"))
        .collect();
    let mut schedule = TreatmentSchedule::default();
    let mut treatment_of = Vec::with_capacity(cfg.n_units);
    {
        let mut ui = 0usize;
        for ((key, _), &count) in cfg.shares.iter().zip(&counts) {
            for _ in 0..count {
                let tr = match key {
                    CohortSpec::Never => Treatment::Never,
                    CohortSpec::At(p) => Treatment::AtYear(*p),
                };
                schedule.set(units[ui].clone(), tr);
                treatment_of.push(tr);
                ui += 1;
            }
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_units;
    let n_periods = cfg.periods.len();

    let alpha: Vec<f64> = (0..n)
        .map(|ui| {
            let selected = !matches!(treatment_of[ui], Treatment::Never);
            cfg.unit_sd * standard_normal(&mut rng)
                + if selected { cfg.selection_on_level } else { 0.0 }
        })
        .collect();
    let coords: Vec<GeoPoint> = (0..n)
        .map(|_| GeoPoint::new(rng.gen_range(54.5..57.8), rng.gen_range(8.0..13.0)))
        .collect();

    // Optional spatial correlation: one Cholesky factor shared by all
    // periods.
    let chol = match cfg.spatial_noise_range_km {
        Some(range) if range > 0.0 && cfg.noise_sd > 0.0 => {
            let mut sigma = DMatrix::<f64>::from_fn(n, n, |i, j| {
                if i == j {
                    1.0
                } else {
                    (-great_circle_km(coords[i], coords[j]) / range).exp()
                }
            });
            for i in 0..n {
                sigma[(i, i)] += 1e-10;
            }
            Some(
                sigma
                    .cholesky()
                    .ok_or_else(|| Error::Schema("spatial covariance not PD".into()))?,
            )
        }
        Some(range) if range <= 0.0 => {
            return Err(Error::Schema(format!(
                "spatial noise range must be positive, got {range}"
            )))
        }
        _ => None,
    };

    let first_cohort = treatment_of
        .iter()
        .filter_map(|t| match t {
            Treatment::AtYear(p) => Some(*p),
            Treatment::Never => None,
        })
        .min();

    let mut cells: Vec<Option<f64>> = vec![None; n * n_periods];
    for (pi, &t) in cfg.periods.iter().enumerate() {
        let lambda = cfg.period_effects.get(pi).copied().unwrap_or(0.0);
        let eps: Vec<f64> = if let Some(l) = &chol {
            let z = nalgebra::DVector::from_fn(n, |_, _| standard_normal(&mut rng));
            (l.l() * z).iter().map(|v| cfg.noise_sd * v).collect()
        } else {
            (0..n).map(|_| cfg.noise_sd * standard_normal(&mut rng)).collect()
        };
        for ui in 0..n {
            let tau = match treatment_of[ui] {
                Treatment::AtYear(g) if t >= g => {
                    cfg.effect.tau(g, t, first_cohort.expect("treated unit"))
                }
                _ => 0.0,
            };
            cells[ui * n_periods + pi] = Some(alpha[ui] + lambda + tau + eps[ui]);
        }
    }

    let mut ds = PanelDataset::new(units, cfg.periods.clone(), schedule);
    ds.add_outcome("y", cells)?;
    ds.set_coordinates(coords.iter().map(|c| Some(*c)).collect())?;
    // Coarse geographic labels for cluster-robust exercises.
    let county: Vec<String> = coords
        .iter()
        .map(|c| {
            let row = (((c.lat - 54.5) / 3.3 * 4.0) as usize).min(3);
            let col = (((c.lon - 8.0) / 5.0 * 2.0) as usize).min(1);
            format!("county_{row}_{col}")
        })
        .collect();
    let hundred: Vec<String> = coords
        .iter()
        .map(|c| {
            let row = (((c.lat - 54.5) / 3.3 * 6.0) as usize).min(5);
            let col = (((c.lon - 8.0) / 5.0 * 4.0) as usize).min(3);
            format!("hundred_{row}_{col}")
        })
        .collect();
    ds.add_cluster_label("county", county)?;
    ds.add_cluster_label("hundred", hundred)?;

    let truth = truth_record(cfg, &ds)?;
    Ok((ds, truth))
}

/// Exact aggregates implied by the realized cohort counts, following the
/// estimator's own cell enumeration and weighting.
fn truth_record(cfg: &DgpConfig, ds: &PanelDataset) -> Result<TruthRecord> {
    let cohorts = ds.cohorts();
    let cohort_sizes: BTreeMap<Period, usize> =
        cohorts.iter().map(|(g, v)| (*g, v.len())).collect();
    let n_never = ds.never_treated().len();
    let first_cohort = cohort_sizes.keys().next().copied();

    let mut att = BTreeMap::new();
    let mut post_by_g: BTreeMap<Period, Vec<f64>> = BTreeMap::new();
    let mut by_e: BTreeMap<i32, Vec<(Period, f64)>> = BTreeMap::new();
    for (&g, _) in &cohorts {
        let pg = ds.period_pos(g).expect("cohort period is a panel period");
        if pg == 0 {
            continue; // the estimator has no base period for this cohort
        }
        for (pt, &t) in ds.periods().iter().enumerate() {
            if t >= g {
                let tau = cfg.effect.tau(g, t, first_cohort.expect("cohort exists"));
                att.insert((g, t), tau);
                post_by_g.entry(g).or_default().push(tau);
                by_e.entry(t - g).or_default().push((g, tau));
            } else if pt > 0 {
                by_e.entry(t - g).or_default().push((g, 0.0));
            }
        }
    }

    let n_t: usize = post_by_g.keys().map(|g| cohort_sizes[g]).sum();
    let overall = if n_t > 0 {
        post_by_g
            .iter()
            .map(|(g, taus)| {
                cohort_sizes[g] as f64 / n_t as f64 * taus.iter().sum::<f64>()
                    / taus.len() as f64
            })
            .sum()
    } else {
        0.0
    };
    let event_study: BTreeMap<i32, f64> = by_e
        .iter()
        .map(|(&e, entries)| {
            let total: usize = entries.iter().map(|(g, _)| cohort_sizes[g]).sum();
            let value = entries
                .iter()
                .map(|(g, tau)| cohort_sizes[g] as f64 / total as f64 * tau)
                .sum();
            (e, value)
        })
        .collect();

    Ok(TruthRecord { att, overall, event_study, cohort_sizes, n_never })
}

/// Independent 2×2 difference-in-differences: four plain group-period
/// means, (ȲᵍT − Ȳᵍb) − (ȲᶜT − Ȳᶜb), computed with no shared code with
/// the estimator.
///
/// # Errors
/// [`Error::EmptyGroup`] when any of the four group-period means has no
/// observations; [`Error::UnknownColumn`] / [`Error::Schema`] for bad
/// names or periods.
pub fn did_2x2_oracle(
    ds: &PanelDataset,
    outcome: &str,
    g: Period,
    t: Period,
    base: Period,
) -> Result<f64> {
    let y = ds.outcome(outcome)?;
    let pt = ds
        .period_pos(t)
        .ok_or_else(|| Error::Schema(format!("period {t} is not a panel period")))?;
    let pb = ds
        .period_pos(base)
        .ok_or_else(|| Error::Schema(format!("period {base} is not a panel period")))?;
    let n_periods = ds.n_periods();
    let cohorts = ds.cohorts();
    let treated = cohorts.get(&g).cloned().unwrap_or_default();
    let controls = ds.never_treated();

    let group_mean = |units: &[usize], pi: usize| -> Result<f64> {
        let vals: Vec<f64> = units
            .iter()
            .filter_map(|&ui| y[ui * n_periods + pi])
            .collect();
        if vals.is_empty() {
            return Err(Error::EmptyGroup(format!(
                "no observations for one comparison group at period index {pi}"
            )));
        }
        Ok(vals.iter().sum::<f64>() / vals.len() as f64)
    };
    let mt_t = group_mean(&treated, pt)?;
    let mt_b = group_mean(&treated, pb)?;
    let mc_t = group_mean(&controls, pt)?;
    let mc_b = group_mean(&controls, pb)?;
    Ok((mt_t - mt_b) - (mc_t - mc_b))
}

/// Estimator targeted by the Monte Carlo harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Group-time cells aggregated to the overall ATT.
    GroupTime,
    /// Two-way fixed effects with unit clustering.
    Twfe,
}

impl EstimatorKind {
    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::GroupTime => "group_time",
            EstimatorKind::Twfe => "twfe",
        }
    }
}

/// Monte Carlo summary over replications.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloReport {
    pub estimator: String,
    pub reps: usize,
    pub n_failed: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    /// Monte Carlo standard error of the mean estimate (needs ≥ 2 reps).
    pub mc_se: Option<f64>,
    pub mean_se: f64,
    /// Share of replications whose 95% CI covers the truth (needs ≥ 2
    /// reps to be meaningful).
    pub coverage: Option<f64>,
}

fn estimate_once(kind: EstimatorKind, ds: &PanelDataset) -> Result<(f64, f64)> {
    match kind {
        EstimatorKind::GroupTime => {
            let cells = att_gt_all(ds, "y", &[], CsMethod::Simple)?;
            let overall = aggregate_overall(&cells, ds)?;
            Ok((overall.estimate, overall.se))
        }
        EstimatorKind::Twfe => {
            let row = estimate_twfe(
                ds,
                "y",
                &ControlSpec::none(),
                &VcovSpec::Cluster("unit".into()),
            )?;
            Ok((row.estimate, row.se))
        }
    }
}

/// Repeated simulate-and-estimate with per-replication derived seeds
/// (thread-count invariant). The truth is the overall ATT implied by the
/// configuration.
///
/// # Errors
/// [`Error::Schema`] when `reps == 0`; generation errors propagate.
pub fn monte_carlo(
    kind: EstimatorKind,
    cfg: &DgpConfig,
    reps: usize,
    seed: u64,
) -> Result<MonteCarloReport> {
    if reps == 0 {
        return Err(Error::Schema("monte carlo needs at least 1 replication".into()));
    }
    let truth = {
        let mut probe = cfg.clone();
        probe.seed = derive_seed(seed, 0);
        simulate_panel(&probe)?.1.overall
    };
    let results: Vec<Result<(f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rep_cfg = cfg.clone();
            rep_cfg.seed = derive_seed(seed, r as u64);
            let (ds, _) = simulate_panel(&rep_cfg)?;
            estimate_once(kind, &ds)
        })
        .collect();

    let ok: Vec<(f64, f64)> = results.iter().filter_map(|r| r.as_ref().ok()).copied().collect();
    let n_failed = reps - ok.len();
    if ok.is_empty() {
        return match results.into_iter().find(|r| r.is_err()) {
            Some(Err(e)) => Err(e),
            _ => Err(Error::EmptyResult("every replication failed".into())),
        };
    }
    let m = ok.len() as f64;
    let mean_estimate = ok.iter().map(|(e, _)| e).sum::<f64>() / m;
    let mean_se = ok.iter().map(|(_, s)| s).sum::<f64>() / m;
    let mc_se = if ok.len() >= 2 {
        let var = ok
            .iter()
            .map(|(e, _)| (e - mean_estimate) * (e - mean_estimate))
            .sum::<f64>()
            / (m - 1.0);
        Some((var / m).sqrt())
    } else {
        None
    };
    let coverage = if ok.len() >= 2 {
        let covered = ok
            .iter()
            .filter(|(e, s)| (e - truth).abs() <= Z_95 * s)
            .count();
        Some(covered as f64 / m)
    } else {
        None
    };
    Ok(MonteCarloReport {
        estimator: kind.label().to_string(),
        reps,
        n_failed,
        truth,
        mean_estimate,
        bias: mean_estimate - truth,
        mc_se,
        mean_se,
        coverage,
    })
}

/// Rebuild estimator-style cells from a truth record (zero influence),
/// for verifying that the aggregation formulas reproduce the recorded
/// aggregates exactly.
pub fn cells_from_truth(truth: &TruthRecord, ds: &PanelDataset) -> Vec<GroupTimeCell> {
    truth
        .att
        .iter()
        .map(|(&(g, t), &tau)| GroupTimeCell {
            g,
            t,
            base: 0,
            att: tau,
            se: 0.0,
            n_treated: truth.cohort_sizes[&g],
            n_control: truth.n_never,
            influence: vec![0.0; ds.n_units()],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attgt::att_gt;

    #[test]
    fn apportionment_examples() {
        let shares = vec![
            (CohortSpec::At(2), 0.5),
            (CohortSpec::At(3), 0.3),
            (CohortSpec::Never, 0.2),
        ];
        assert_eq!(apportion(10, &shares), vec![5, 3, 2]);
        let thirds = vec![
            (CohortSpec::At(2), 1.0 / 3.0),
            (CohortSpec::At(3), 1.0 / 3.0),
            (CohortSpec::Never, 1.0 / 3.0),
        ];
        // 10/3 each: remainders tie, specification order breaks the tie.
        assert_eq!(apportion(10, &thirds), vec![4, 3, 3]);
        assert_eq!(apportion(9, &thirds), vec![3, 3, 3]);
    }

    #[test]
    fn bad_shares_rejected() {
        let mut cfg = DgpConfig::baseline(20, 1);
        cfg.shares = vec![(CohortSpec::At(3), 0.6), (CohortSpec::Never, 0.6)];
        assert_eq!(simulate_panel(&cfg).unwrap_err().code(), "BAD_SHARES");
        cfg.shares = vec![(CohortSpec::At(3), -0.2), (CohortSpec::Never, 1.2)];
        assert_eq!(simulate_panel(&cfg).unwrap_err().code(), "BAD_SHARES");
        cfg.shares = vec![(CohortSpec::At(99), 0.5), (CohortSpec::Never, 0.5)];
        assert_eq!(simulate_panel(&cfg).unwrap_err().code(), "BAD_SHARES");
        cfg.shares = vec![
            (CohortSpec::At(3), 0.5),
            (CohortSpec::At(3), 0.1),
            (CohortSpec::Never, 0.4),
        ];
        assert_eq!(simulate_panel(&cfg).unwrap_err().code(), "BAD_SHARES");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = DgpConfig::baseline(50, 99);
        let (a, _) = simulate_panel(&cfg).unwrap();
        let (b, _) = simulate_panel(&cfg).unwrap();
        assert_eq!(a.outcome("y").unwrap(), b.outcome("y").unwrap());
        assert_eq!(a.units(), b.units());
        let mut cfg2 = cfg.clone();
        cfg2.seed = 100;
        let (c, _) = simulate_panel(&cfg2).unwrap();
        assert_ne!(a.outcome("y").unwrap(), c.outcome("y").unwrap());
    }

    #[test]
    fn panel_is_valid_and_complete() {
        let cfg = DgpConfig::baseline(40, 3);
        let (ds, truth) = simulate_panel(&cfg).unwrap();
        let report = crate::panel::validate_panel(&ds);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        assert!(ds.outcome("y").unwrap().iter().all(|v| v.is_some()));
        assert_eq!(truth.cohort_sizes[&3] + truth.cohort_sizes[&5] + truth.n_never, 40);
        assert_eq!(truth.cohort_sizes[&3], 12);
        assert_eq!(truth.n_never, 16);
    }

    #[test]
    fn noise_free_panel_estimates_exactly() {
        let mut cfg = DgpConfig::baseline(30, 5);
        cfg.noise_sd = 0.0;
        cfg.effect = EffectSpec::Constant { value: 2.5 };
        cfg.selection_on_level = 4.0; // levels shift, differences don't
        let (ds, truth) = simulate_panel(&cfg).unwrap();
        assert_eq!(truth.overall, 2.5);
        let cells = att_gt_all(&ds, "y", &[], CsMethod::Simple).unwrap();
        for c in &cells {
            let want = if c.t >= c.g { 2.5 } else { 0.0 };
            assert!((c.att - want).abs() < 1e-10, "cell ({},{}) = {}", c.g, c.t, c.att);
        }
        let overall = aggregate_overall(&cells, &ds).unwrap();
        assert!((overall.estimate - 2.5).abs() < 1e-10);
    }

    #[test]
    fn truth_matches_aggregation_formula_exactly() {
        let mut cfg = DgpConfig::baseline(60, 11);
        cfg.effect = EffectSpec::Linear { base: 1.0, event_slope: 0.5, cohort_slope: 0.25 };
        let (ds, truth) = simulate_panel(&cfg).unwrap();
        let cells = cells_from_truth(&truth, &ds);
        let overall = aggregate_overall(&cells, &ds).unwrap();
        assert!(
            (overall.estimate - truth.overall).abs() < 1e-12,
            "aggregate {} vs truth {}",
            overall.estimate,
            truth.overall
        );
        // Event-study points likewise (post cells only in cells_from_truth).
        let series = crate::attgt::aggregate_event_study(&cells, &ds, 0, 1).unwrap();
        for p in &series.points {
            let want = truth.event_study[&p.event_time];
            assert!(
                (p.estimate - want).abs() < 1e-12,
                "e = {}: {} vs {}",
                p.event_time,
                p.estimate,
                want
            );
        }
    }

    #[test]
    fn truth_event_study_has_zero_pre_periods() {
        let cfg = DgpConfig::baseline(40, 2);
        let (_, truth) = simulate_panel(&cfg).unwrap();
        for (&e, &v) in &truth.event_study {
            if e < 0 {
                assert_eq!(v, 0.0, "pre event time {e}");
            }
        }
        // Cohorts 3 and 5 on periods 1..6: event times −3..3 appear.
        assert!(truth.event_study.contains_key(&0));
        assert!(truth.event_study.contains_key(&-2));
    }

    #[test]
    fn oracle_matches_att_gt_exactly() {
        let mut cfg = DgpConfig::baseline(30, 8);
        cfg.periods = vec![1, 2];
        cfg.shares = vec![(CohortSpec::At(2), 0.5), (CohortSpec::Never, 0.5)];
        let (ds, _) = simulate_panel(&cfg).unwrap();
        let oracle = did_2x2_oracle(&ds, "y", 2, 2, 1).unwrap();
        let cell = att_gt(&ds, "y", 2, 2, &[], CsMethod::Simple).unwrap();
        assert!(
            (oracle - cell.att).abs() < 1e-12,
            "oracle {} vs estimator {}",
            oracle,
            cell.att
        );
    }

    #[test]
    fn oracle_empty_group_error() {
        let cfg = DgpConfig::baseline(20, 8);
        let (ds, _) = simulate_panel(&cfg).unwrap();
        let err = did_2x2_oracle(&ds, "y", 4, 5, 1).unwrap_err();
        assert_eq!(err.code(), "EMPTY_GROUP");
    }

    #[test]
    fn spatial_noise_is_deterministic_and_correlated() {
        let mut cfg = DgpConfig::baseline(40, 21);
        cfg.spatial_noise_range_km = Some(100.0);
        cfg.unit_sd = 0.0;
        cfg.effect = EffectSpec::Constant { value: 0.0 };
        cfg.shares = vec![(CohortSpec::Never, 1.0)];
        let (a, _) = simulate_panel(&cfg).unwrap();
        let (b, _) = simulate_panel(&cfg).unwrap();
        assert_eq!(a.outcome("y").unwrap(), b.outcome("y").unwrap());

        // Noise correlation across periods should fall with distance.
        let y = a.outcome("y").unwrap();
        let np = a.n_periods();
        let series = |ui: usize| -> Vec<f64> {
            (0..np).map(|pi| y[ui * np + pi].unwrap()).collect()
        };
        let corr = |x: &[f64], z: &[f64]| -> f64 {
            let mx = x.iter().sum::<f64>() / x.len() as f64;
            let mz = z.iter().sum::<f64>() / z.len() as f64;
            let num: f64 = x.iter().zip(z).map(|(a, b)| (a - mx) * (b - mz)).sum();
            let dx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>().sqrt();
            let dz: f64 = z.iter().map(|b| (b - mz) * (b - mz)).sum::<f64>().sqrt();
            num / (dx * dz)
        };
        // Find the closest and farthest pair to unit 0.
        let c0 = a.coordinates()[0].unwrap();
        let mut nearest = (1, f64::INFINITY);
        let mut farthest = (1, 0.0);
        for ui in 1..40 {
            let d = great_circle_km(c0, a.coordinates()[ui].unwrap());
            if d < nearest.1 {
                nearest = (ui, d);
            }
            if d > farthest.1 {
                farthest = (ui, d);
            }
        }
        let s0 = series(0);
        let c_near = corr(&s0, &series(nearest.0));
        let c_far = corr(&s0, &series(farthest.0));
        assert!(
            c_near > c_far,
            "near ({:.0} km) corr {c_near} should beat far ({:.0} km) corr {c_far}",
            nearest.1,
            farthest.1
        );
    }

    #[test]
    fn monte_carlo_unbiased_group_time() {
        let mut cfg = DgpConfig::baseline(120, 0);
        cfg.noise_sd = 0.5;
        let report = monte_carlo(EstimatorKind::GroupTime, &cfg, 60, 7).unwrap();
        assert_eq!(report.n_failed, 0);
        assert!((report.truth - 1.0).abs() < 1e-12);
        let mc = report.mc_se.unwrap();
        assert!(
            report.bias.abs() < 4.0 * mc,
            "bias {} vs mc se {}",
            report.bias,
            mc
        );
        let cov = report.coverage.unwrap();
        assert!(cov > 0.85, "coverage {cov}");
    }

    #[test]
    fn monte_carlo_exposes_twfe_heterogeneity_bias() {
        // Strongly dynamic effects: already-treated units make bad
        // controls, so static TWFE is biased while the group-time
        // aggregate stays on target.
        let mut cfg = DgpConfig::baseline(150, 0);
        cfg.periods = (1..=8).collect();
        cfg.shares = vec![
            (CohortSpec::At(2), 0.4),
            (CohortSpec::At(6), 0.3),
            (CohortSpec::Never, 0.3),
        ];
        cfg.effect = EffectSpec::Linear { base: 0.2, event_slope: 0.6, cohort_slope: 0.0 };
        cfg.noise_sd = 0.4;
        let cs = monte_carlo(EstimatorKind::GroupTime, &cfg, 40, 13).unwrap();
        let tw = monte_carlo(EstimatorKind::Twfe, &cfg, 40, 13).unwrap();
        assert_eq!(cs.n_failed, 0);
        assert_eq!(tw.n_failed, 0);
        let cs_mc = cs.mc_se.unwrap();
        assert!(
            cs.bias.abs() < 4.0 * cs_mc,
            "group-time bias {} vs mc se {}",
            cs.bias,
            cs_mc
        );
        assert!(
            tw.bias.abs() > 5.0 * cs.bias.abs().max(cs_mc),
            "twfe bias {} should dwarf group-time bias {} (mc se {})",
            tw.bias,
            cs.bias,
            cs_mc
        );
    }

    #[test]
    fn monte_carlo_single_rep_has_no_dispersion_stats() {
        let cfg = DgpConfig::baseline(40, 1);
        let report = monte_carlo(EstimatorKind::GroupTime, &cfg, 1, 5).unwrap();
        assert_eq!(report.reps, 1);
        assert!(report.mc_se.is_none());
        assert!(report.coverage.is_none());
        assert_eq!(
            monte_carlo(EstimatorKind::GroupTime, &cfg, 0, 5)
                .unwrap_err()
                .code(),
            "SCHEMA_ERROR"
        );
    }

    #[test]
    fn monte_carlo_thread_invariant() {
        let cfg = DgpConfig::baseline(40, 1);
        let a = monte_carlo(EstimatorKind::GroupTime, &cfg, 8, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool
            .install(|| monte_carlo(EstimatorKind::GroupTime, &cfg, 8, 3))
            .unwrap();
        assert_eq!(a.mean_estimate, b.mean_estimate);
        assert_eq!(a.mean_se, b.mean_se);
        assert_eq!(a.coverage, b.coverage);
    }

    #[test]
    fn effect_surface_examples() {
        let eff = EffectSpec::Linear { base: 1.0, event_slope: 0.5, cohort_slope: 0.2 };
        assert_eq!(eff.tau(3, 3, 3), 1.0);
        assert_eq!(eff.tau(3, 5, 3), 2.0);
        assert_eq!(eff.tau(5, 5, 3), 1.4);
        let c = EffectSpec::Constant { value: 7.0 };
        assert_eq!(c.tau(2, 9, 2), 7.0);
    }
}
