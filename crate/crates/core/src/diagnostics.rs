//! Sample diagnostics: treated/control balance, distribution comparison,
//! summary statistics, and kernel density export.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::zcrit::stars;

/// Balance regression of a baseline variable on the ever-treated
/// indicator with classical (homoskedastic) standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceRow {
    pub variable: String,
    pub coefficient: f64,
    pub se: f64,
    pub stars: String,
    pub n_treated: usize,
    pub n_control: usize,
}

/// Two-sided two-sample Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n0: usize,
    pub n1: usize,
}

/// One summary-statistics row.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryRow {
    pub variable: String,
    pub n: usize,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

/// Gaussian kernel density on an even grid.
#[derive(Debug, Clone, Serialize)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
    pub n: usize,
}

/// Difference in group means of `values` between ever-treated and control
/// units, with its classical OLS standard error
/// √(s²(1/n₀ + 1/n₁)), s² = RSS/(n−2).
///
/// # Errors
/// [`Error::NoVariation`] when either group is empty;
/// [`Error::EmptySample`] on empty input; [`Error::Schema`] on length
/// mismatch or when no residual degree of freedom remains (n < 3).
pub fn balance_regression(
    variable: &str,
    values: &[f64],
    ever_treated: &[bool],
) -> Result<BalanceRow> {
    if values.is_empty() {
        return Err(Error::EmptySample("balance input is empty".into()));
    }
    if values.len() != ever_treated.len() {
        return Err(Error::Schema(format!(
            "{} values vs {} treatment flags",
            values.len(),
            ever_treated.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonfiniteInput(format!("balance variable '{variable}'")));
    }
    let n1 = ever_treated.iter().filter(|t| **t).count();
    let n0 = values.len() - n1;
    if n0 == 0 || n1 == 0 {
        return Err(Error::NoVariation(
            "both treated and control units are required".into(),
        ));
    }
    let n = values.len();
    if n < 3 {
        return Err(Error::Schema(
            "balance regression needs at least 3 observations".into(),
        ));
    }
    let mean =
        |flag: bool| -> f64 {
            values
                .iter()
                .zip(ever_treated)
                .filter(|(_, t)| **t == flag)
                .map(|(v, _)| *v)
                .sum::<f64>()
                / if flag { n1 as f64 } else { n0 as f64 }
        };
    let m1 = mean(true);
    let m0 = mean(false);
    let coefficient = m1 - m0;
    let rss: f64 = values
        .iter()
        .zip(ever_treated)
        .map(|(v, t)| {
            let fitted = if *t { m1 } else { m0 };
            (v - fitted) * (v - fitted)
        })
        .sum();
    let s2 = rss / (n - 2) as f64;
    let se = (s2 * (1.0 / n0 as f64 + 1.0 / n1 as f64)).sqrt();
    let z = if se > 0.0 { coefficient / se } else { 0.0 };
    Ok(BalanceRow {
        variable: variable.to_string(),
        coefficient,
        se,
        stars: stars(z).to_string(),
        n_treated: n1,
        n_control: n0,
    })
}

/// Survival function of the Kolmogorov distribution, following the usual
/// two-branch evaluation (theta-function form for small λ, alternating
/// series otherwise).
fn kolmogorov_p(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // K(λ) = √(2π)/λ · Σ exp(−(2k−1)²π²/(8λ²)); p = 1 − K.
        let f = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let odd = (2 * k - 1) as f64;
            let term = (-odd * odd * f).exp();
            sum += term;
            if term < 1e-16 {
                break;
            }
        }
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
        (1.0 - cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for k in 1..=100u32 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-16 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Two-sample KS test: D = sup |ECDF₀ − ECDF₁| with the asymptotic
/// Kolmogorov p-value at λ = √(n₀n₁/(n₀+n₁))·D.
///
/// # Errors
/// [`Error::EmptySample`] when either sample is empty;
/// [`Error::NonfiniteInput`] on NaN/∞.
pub fn ks_test(sample0: &[f64], sample1: &[f64]) -> Result<KsResult> {
    if sample0.is_empty() || sample1.is_empty() {
        return Err(Error::EmptySample("ks test needs both samples non-empty".into()));
    }
    if sample0.iter().chain(sample1).any(|v| !v.is_finite()) {
        return Err(Error::NonfiniteInput("ks sample".into()));
    }
    let mut a = sample0.to_vec();
    let mut b = sample1.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite values"));
    let (n0, n1) = (a.len(), b.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n0 || j < n1 {
        // Advance past the smallest remaining value in both samples.
        let x = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < n0 && a[i] <= x {
            i += 1;
        }
        while j < n1 && b[j] <= x {
            j += 1;
        }
        let diff = (i as f64 / n0 as f64 - j as f64 / n1 as f64).abs();
        d = d.max(diff);
    }
    let ne = (n0 as f64 * n1 as f64) / (n0 + n1) as f64;
    let p = kolmogorov_p(ne.sqrt() * d);
    Ok(KsResult { statistic: d, p_value: p, n0, n1 })
}

/// Summary statistics for the named panel columns. Outcome names summarize
/// non-missing unit×period cells; covariate names summarize per-unit
/// values. Outcomes win when a name is both.
pub fn summary_stats(ds: &PanelDataset, variables: &[String]) -> Result<Vec<SummaryRow>> {
    variables
        .iter()
        .map(|name| {
            let values: Vec<f64> = if ds.has_outcome(name) {
                ds.outcome(name)?.iter().flatten().copied().collect()
            } else {
                ds.covariate(name)?.to_vec()
            };
            Ok(summary_of(name, &values))
        })
        .collect()
}

/// Summary of a raw value vector.
pub fn summary_of(name: &str, values: &[f64]) -> SummaryRow {
    let n = values.len();
    if n == 0 {
        return SummaryRow {
            variable: name.to_string(),
            n: 0,
            mean: None,
            sd: None,
            min: None,
            max: None,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd = if n >= 2 {
        Some(
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
                .sqrt(),
        )
    } else {
        None
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    SummaryRow {
        variable: name.to_string(),
        n,
        mean: Some(mean),
        sd,
        min: Some(min),
        max: Some(max),
    }
}

/// Type-7 (linear interpolation) quantile of pre-sorted values, the
/// convention used by the bandwidth rule.
fn quantile_type7_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Gaussian KDE sampled on an even grid spanning the data ±3 bandwidths.
///
/// Bandwidth is the Silverman rule-of-thumb 0.9·min(sd, IQR/1.34)·n^(−1/5),
/// falling back to the standard deviation when the IQR is zero.
///
/// # Errors
/// [`Error::Degenerate`] with fewer than two distinct values;
/// [`Error::Schema`] when `grid_size < 2`;
/// [`Error::NonfiniteInput`] on NaN/∞.
pub fn kde_export(values: &[f64], grid_size: usize) -> Result<KdeCurve> {
    if grid_size < 2 {
        return Err(Error::Schema(format!(
            "kde grid needs at least 2 points, got {grid_size}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonfiniteInput("kde sample".into()));
    }
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    if n < 2 || sorted[0] == sorted[n - 1] {
        return Err(Error::Degenerate(
            "kde needs at least two distinct values".into(),
        ));
    }
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let sd = (sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
        .sqrt();
    let iqr = quantile_type7_sorted(&sorted, 0.75) - quantile_type7_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let bandwidth = 0.9 * spread * (n as f64).powf(-0.2);

    let lo = sorted[0] - 3.0 * bandwidth;
    let hi = sorted[n - 1] + 3.0 * bandwidth;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let norm = 1.0 / ((2.0 * std::f64::consts::PI).sqrt() * bandwidth * n as f64);
    let grid: Vec<f64> = (0..grid_size).map(|i| lo + step * i as f64).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            norm * sorted
                .iter()
                .map(|&x| {
                    let u = (g - x) / bandwidth;
                    (-0.5 * u * u).exp()
                })
                .sum::<f64>()
        })
        .collect();
    Ok(KdeCurve { grid, density, bandwidth, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{PanelDataset, Treatment, TreatmentSchedule};
    use rand::prelude::*;

    #[test]
    fn balance_hand_computed() {
        // Control values {0, 2}, treated {3, 5}: coefficient 3,
        // RSS = 4, s² = 2, se = √(2·(1/2 + 1/2)) = √2.
        let row = balance_regression(
            "x",
            &[0.0, 2.0, 3.0, 5.0],
            &[false, false, true, true],
        )
        .unwrap();
        assert!((row.coefficient - 3.0).abs() < 1e-12);
        assert!((row.se - 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!((row.n_treated, row.n_control), (2, 2));
    }

    #[test]
    fn balance_matches_ols_dummy_regression() {
        let mut rng = StdRng::seed_from_u64(77);
        let n = 25;
        let flags: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
        let vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let row = balance_regression("v", &vals, &flags).unwrap();
        // Independent check through the general OLS path with classical
        // variance s²(XᵀX)⁻¹.
        let design = crate::regress::DesignMatrix::from_columns(vec![
            ("intercept".into(), vec![1.0; n]),
            (
                "treated".into(),
                flags.iter().map(|t| if *t { 1.0 } else { 0.0 }).collect(),
            ),
        ])
        .unwrap();
        let fit = crate::regress::ols(&design, &vals, None).unwrap();
        let beta = fit.coefficient("treated").unwrap();
        let rss: f64 = fit.residuals.iter().map(|e| e * e).sum();
        let s2 = rss / (n - 2) as f64;
        let se = (s2 * fit.bread[(1, 1)]).sqrt();
        assert!((row.coefficient - beta).abs() < 1e-10);
        assert!((row.se - se).abs() < 1e-10);
    }

    #[test]
    fn balance_errors() {
        assert_eq!(
            balance_regression("x", &[1.0, 2.0], &[true, true])
                .unwrap_err()
                .code(),
            "NO_VARIATION"
        );
        assert_eq!(balance_regression("x", &[], &[]).unwrap_err().code(), "EMPTY_SAMPLE");
    }

    #[test]
    fn ks_simple_example() {
        // {1,2,3} vs {2,3,4}: ECDFs differ by exactly 1/3 at every jump.
        let r = ks_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-12);
        assert!(r.p_value > 0.9, "p {}", r.p_value);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let same = ks_test(&a, &a).unwrap();
        assert_eq!(same.statistic, 0.0);
        assert_eq!(same.p_value, 1.0);
        let far = ks_test(&a, &[10.0, 11.0, 12.0, 13.0]).unwrap();
        assert_eq!(far.statistic, 1.0);
        assert!(far.p_value < 0.1);
    }

    #[test]
    fn ks_detects_shift_on_large_samples() {
        let mut rng = StdRng::seed_from_u64(2);
        let a: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..400).map(|_| rng.gen_range(0.3..1.3)).collect();
        let r = ks_test(&a, &b).unwrap();
        assert!(r.p_value < 1e-6, "shifted sample should reject, p {}", r.p_value);
        let c: Vec<f64> = (0..400).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r2 = ks_test(&a, &c).unwrap();
        assert!(r2.p_value > 0.01, "same-law sample should not reject, p {}", r2.p_value);
    }

    #[test]
    fn ks_p_value_matches_reference_points() {
        // Kolmogorov survival function at λ = 1: 2Σ(−1)^{k−1}e^{−2k²} =
        // 0.2699996716773545212… (checked against a 60-digit evaluation of
        // both the alternating and theta-function forms, which agree there).
        let p = kolmogorov_p(1.0);
        assert!((p - 0.26999967167735456).abs() < 1e-12, "p {}", p);
        // Small-λ branch continuity against the series branch near 1: the
        // density there is ≈ 1.07, so a 1e-9 step moves p by ≈ 1.07e-9.
        let lo = kolmogorov_p(1.0 - 1e-9);
        assert!((lo - p).abs() < 1e-7, "branch gap {}", (lo - p).abs());
    }

    #[test]
    fn ks_handles_ties_across_samples() {
        let r = ks_test(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        // ECDF0: 2/3 at 1, 1 at 2; ECDF1: 1/3 at 1, 1 at 2 → D = 1/3.
        assert!((r.statistic - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn summary_example() {
        let row = summary_of("v", &[1.0, 2.0, 3.0]);
        assert_eq!(row.n, 3);
        assert_eq!(row.mean, Some(2.0));
        assert_eq!(row.sd, Some(1.0));
        assert_eq!(row.min, Some(1.0));
        assert_eq!(row.max, Some(3.0));
        let empty = summary_of("v", &[]);
        assert_eq!(empty.n, 0);
        assert_eq!(empty.mean, None);
        let single = summary_of("v", &[5.0]);
        assert_eq!(single.mean, Some(5.0));
        assert_eq!(single.sd, None);
    }

    #[test]
    fn summary_resolves_outcomes_and_covariates() {
        let mut schedule = TreatmentSchedule::default();
        schedule.set("a".to_string(), Treatment::Never);
        schedule.set("b".to_string(), Treatment::Never);
        let mut ds = PanelDataset::new(
            vec!["a".into(), "b".into()],
            vec![1, 2],
            schedule,
        );
        ds.add_outcome("y", vec![Some(1.0), None, Some(3.0), Some(5.0)]).unwrap();
        ds.add_covariate("x", vec![10.0, 20.0]).unwrap();
        let rows = summary_stats(&ds, &["y".into(), "x".into()]).unwrap();
        assert_eq!(rows[0].n, 3); // missing cell dropped
        assert_eq!(rows[0].mean, Some(3.0));
        assert_eq!(rows[1].n, 2);
        assert_eq!(rows[1].mean, Some(15.0));
        assert_eq!(
            summary_stats(&ds, &["zzz".into()]).unwrap_err().code(),
            "UNKNOWN_COLUMN"
        );
    }

    #[test]
    fn kde_integrates_to_one_and_is_symmetric() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut values: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
        // Symmetrize the sample exactly.
        let mirrored: Vec<f64> = values.iter().map(|v| -v).collect();
        values.extend(mirrored);
        let kde = kde_export(&values, 512).unwrap();
        let step = kde.grid[1] - kde.grid[0];
        let mass: f64 = kde
            .density
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) * step)
            .sum();
        assert!((mass - 1.0).abs() < 0.01, "mass {mass}");
        // Symmetric data on a symmetric grid: density mirrors.
        let m = kde.density.len();
        for i in 0..m / 2 {
            assert!(
                (kde.density[i] - kde.density[m - 1 - i]).abs() < 1e-9,
                "asymmetry at {i}"
            );
        }
        assert!(kde.density.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn kde_bandwidth_follows_silverman_rule() {
        let values: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let kde = kde_export(&values, 16).unwrap();
        let sd = (values.iter().map(|v| (v - 5.5) * (v - 5.5)).sum::<f64>() / 9.0).sqrt();
        let iqr = 7.75 - 3.25; // type-7 quartiles of 1..10
        let expect = 0.9 * sd.min(iqr / 1.34) * 10.0f64.powf(-0.2);
        assert!((kde.bandwidth - expect).abs() < 1e-12);
        // Zero-IQR guard: clustered data with outliers still gets a
        // positive bandwidth from the sd fallback.
        let mut clustered = vec![5.0; 30];
        clustered.push(0.0);
        clustered.push(10.0);
        let kde2 = kde_export(&clustered, 16).unwrap();
        assert!(kde2.bandwidth > 0.0);
    }

    #[test]
    fn kde_degenerate_cases() {
        assert_eq!(kde_export(&[3.0; 5], 16).unwrap_err().code(), "DEGENERATE");
        assert_eq!(kde_export(&[1.0], 16).unwrap_err().code(), "DEGENERATE");
        assert_eq!(kde_export(&[], 16).unwrap_err().code(), "DEGENERATE");
        assert_eq!(kde_export(&[1.0, 2.0], 1).unwrap_err().code(), "SCHEMA_ERROR");
    }
}
