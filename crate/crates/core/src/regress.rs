//! Numerical estimation engines: OLS/WLS via an order-preserving LDLᵀ
//! decomposition with deterministic collinearity drops, high-dimensional
//! fixed-effect demeaning by alternating projections, and Poisson maximum
//! likelihood via iteratively reweighted least squares.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on the decomposition diagonal below which a column is
/// dropped as collinear.
pub const COLLINEARITY_REL_TOL: f64 = 1e-10;

/// Default tolerance for demeaning convergence (max within-group mean).
pub const DEMEAN_TOL: f64 = 1e-8;

/// Default sweep cap for demeaning.
pub const DEMEAN_MAX_ITER: usize = 1000;

/// Maximum IRLS iterations for Poisson fits.
pub const IRLS_MAX_ITER: usize = 50;

/// Deviance-change convergence threshold for IRLS.
pub const IRLS_DEVIANCE_TOL: f64 = 1e-10;

/// Score max-norm required at a declared Poisson optimum.
pub const IRLS_SCORE_TOL: f64 = 1e-6;

/// Coefficient magnitude beyond which a Poisson fit is declared separated.
pub const SEPARATION_BOUND: f64 = 1e6;

/// Named design matrix (columns in estimation order; order determines which
/// of a collinear set survives).
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    names: Vec<String>,
    data: DMatrix<f64>,
}

impl DesignMatrix {
    /// Build from named columns; all columns must share a length.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Schema("design matrix needs at least one column".into()));
        }
        let n = columns[0].1.len();
        for (name, col) in &columns {
            if col.len() != n {
                return Err(Error::Schema(format!(
                    "column '{}' has length {} != {}",
                    name,
                    col.len(),
                    n
                )));
            }
        }
        let names: Vec<String> = columns.iter().map(|(n, _)| n.clone()).collect();
        let mut data = DMatrix::zeros(n, names.len());
        for (j, (_, col)) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[(i, j)] = *v;
            }
        }
        Ok(DesignMatrix { names, data })
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    fn check_finite(&self) -> Result<()> {
        for j in 0..self.data.ncols() {
            for i in 0..self.data.nrows() {
                if !self.data[(i, j)].is_finite() {
                    return Err(Error::NonfiniteInput(format!(
                        "design column '{}' row {} is not finite",
                        self.names[j], i
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Result of an OLS/WLS or Poisson fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Estimated coefficients of the retained columns.
    pub coefficients: BTreeMap<String, f64>,
    /// Columns dropped as collinear, in drop order.
    pub dropped_columns: Vec<String>,
    /// Response residuals (for Poisson: y - mu).
    pub residuals: DVector<f64>,
    /// Residual degrees of freedom: rows − retained columns − absorbed
    /// fixed-effect parameters.
    pub dof_residual: i64,
    /// Per-row score contributions s_i = w_i e_i x_i (rows × retained
    /// columns); the sandwich meat is built from these.
    pub scores: DMatrix<f64>,
    /// Log-likelihood (Poisson fits only).
    pub log_likelihood: Option<f64>,
    /// Original indices of retained columns, ascending.
    pub retained: Vec<usize>,
    /// Names of retained columns, in retained order.
    pub retained_names: Vec<String>,
    /// (XᵀWX)⁻¹ on the retained columns (sandwich bread; for Poisson the
    /// inverse Hessian at the optimum).
    pub bread: DMatrix<f64>,
    /// Number of absorbed fixed-effect parameters already removed from the
    /// data (set by demeaning callers).
    pub absorbed_dof: usize,
    /// Coefficients in retained order (convenience mirror of the map).
    pub coef_vec: DVector<f64>,
}

impl FitResult {
    pub fn n_rows(&self) -> usize {
        self.residuals.len()
    }

    /// Number of estimated parameters: retained columns plus absorbed
    /// fixed effects.
    pub fn n_params(&self) -> usize {
        self.retained.len() + self.absorbed_dof
    }

    /// Account for fixed effects absorbed by demeaning before this fit:
    /// deducts them from the residual degrees of freedom.
    pub fn with_absorbed_dof(mut self, absorbed: usize) -> FitResult {
        self.absorbed_dof = absorbed;
        self.dof_residual = self.n_rows() as i64 - self.retained.len() as i64 - absorbed as i64;
        self
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficients.get(name).copied()
    }
}

/// In-order LDLᵀ factorization of a Gram matrix with relative-tolerance
/// column drops. Deterministic given column order: a column is dropped when
/// its pivot falls below `rel_tol` times its original diagonal.
struct LdlFactor {
    l: DMatrix<f64>,
    d: Vec<f64>,
    retained: Vec<usize>,
    dropped: Vec<usize>,
}

fn ldl_with_drop(g: &DMatrix<f64>, rel_tol: f64) -> LdlFactor {
    let k = g.nrows();
    let mut l = DMatrix::<f64>::identity(k, k);
    let mut d = vec![0.0; k];
    let mut retained: Vec<usize> = Vec::new();
    let mut dropped: Vec<usize> = Vec::new();
    for j in 0..k {
        let mut dj = g[(j, j)];
        for &m in &retained {
            dj -= l[(j, m)] * l[(j, m)] * d[m];
        }
        let threshold = rel_tol * g[(j, j)].abs();
        if g[(j, j)] <= 0.0 || dj <= threshold {
            dropped.push(j);
            continue;
        }
        d[j] = dj;
        for i in (j + 1)..k {
            let mut v = g[(i, j)];
            for &m in &retained {
                v -= l[(i, m)] * l[(j, m)] * d[m];
            }
            l[(i, j)] = v / dj;
        }
        retained.push(j);
    }
    LdlFactor { l, d, retained, dropped }
}

impl LdlFactor {
    /// Solve LDLᵀ b = c over the retained columns (others get 0).
    fn solve(&self, c: &DVector<f64>) -> DVector<f64> {
        let k = c.len();
        let mut y = DVector::zeros(k);
        for &j in &self.retained {
            let mut v = c[j];
            for &m in &self.retained {
                if m >= j {
                    break;
                }
                v -= self.l[(j, m)] * y[m];
            }
            y[j] = v;
        }
        for &j in &self.retained {
            y[j] /= self.d[j];
        }
        let mut b = DVector::zeros(k);
        for &j in self.retained.iter().rev() {
            let mut v = y[j];
            for &i in self.retained.iter().rev() {
                if i <= j {
                    break;
                }
                v -= self.l[(i, j)] * b[i];
            }
            b[j] = v;
        }
        b
    }

    /// Inverse of the retained-column Gram block, in retained order.
    fn inverse_retained(&self, k: usize) -> DMatrix<f64> {
        let r = self.retained.len();
        let mut inv = DMatrix::zeros(r, r);
        for (col, &j) in self.retained.iter().enumerate() {
            let mut e = DVector::zeros(k);
            e[j] = 1.0;
            let sol = self.solve(&e);
            for (row, &i) in self.retained.iter().enumerate() {
                inv[(row, col)] = sol[i];
            }
        }
        // Symmetrize away round-off.
        for a in 0..r {
            for b in (a + 1)..r {
                let m = 0.5 * (inv[(a, b)] + inv[(b, a)]);
                inv[(a, b)] = m;
                inv[(b, a)] = m;
            }
        }
        inv
    }
}

fn check_vector_finite(name: &str, v: &[f64]) -> Result<()> {
    for (i, x) in v.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonfiniteInput(format!("{name} row {i} is not finite")));
        }
    }
    Ok(())
}

/// Weighted least squares core shared by [`ols`] and the IRLS loop.
///
/// Returns the fit built from the weighted normal equations with in-order
/// collinearity drops; `scores` and `bread` use the same weights.
fn wls_core(x: &DesignMatrix, y: &DVector<f64>, w: &DVector<f64>) -> Result<FitResult> {
    let n = x.n_rows();
    let k = x.n_cols();
    let xm = x.matrix();

    // Gram = XᵀWX and c = XᵀWy accumulated explicitly.
    let mut g = DMatrix::zeros(k, k);
    let mut c = DVector::zeros(k);
    for i in 0..n {
        let wi = w[i];
        for a in 0..k {
            let xa = xm[(i, a)];
            if xa == 0.0 {
                continue;
            }
            c[a] += wi * xa * y[i];
            for b in a..k {
                g[(a, b)] += wi * xa * xm[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }

    let factor = ldl_with_drop(&g, COLLINEARITY_REL_TOL);
    if factor.retained.is_empty() {
        return Err(Error::AllCollinear);
    }
    let beta_full = factor.solve(&c);

    let fitted = xm * &beta_full;
    let residuals = y - &fitted;

    let retained = factor.retained.clone();
    let retained_names: Vec<String> = retained.iter().map(|&j| x.names()[j].clone()).collect();
    let dropped_columns: Vec<String> =
        factor.dropped.iter().map(|&j| x.names()[j].clone()).collect();

    let mut scores = DMatrix::zeros(n, retained.len());
    for i in 0..n {
        let we = w[i] * residuals[i];
        for (jj, &j) in retained.iter().enumerate() {
            scores[(i, jj)] = we * xm[(i, j)];
        }
    }

    let bread = factor.inverse_retained(k);
    let coef_vec = DVector::from_iterator(retained.len(), retained.iter().map(|&j| beta_full[j]));
    let coefficients: BTreeMap<String, f64> = retained_names
        .iter()
        .cloned()
        .zip(coef_vec.iter().copied())
        .collect();

    Ok(FitResult {
        coefficients,
        dropped_columns,
        residuals,
        dof_residual: n as i64 - retained.len() as i64,
        scores,
        log_likelihood: None,
        retained,
        retained_names,
        bread,
        absorbed_dof: 0,
        coef_vec,
    })
}

/// Ordinary (or weighted) least squares.
///
/// Minimizes Σ wᵢ (yᵢ − xᵢ'b)²; collinear columns are dropped
/// deterministically in column order with a relative pivot tolerance of
/// [`COLLINEARITY_REL_TOL`].
///
/// # Errors
/// [`Error::NonfiniteInput`] on NaN/inf inputs or nonpositive weights;
/// [`Error::AllCollinear`] when no column survives.
pub fn ols(x: &DesignMatrix, y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    x.check_finite()?;
    check_vector_finite("response", y)?;
    if y.len() != x.n_rows() {
        return Err(Error::Schema(format!(
            "response length {} != {} design rows",
            y.len(),
            x.n_rows()
        )));
    }
    let w = match weights {
        Some(w) => {
            check_vector_finite("weights", w)?;
            if w.len() != x.n_rows() {
                return Err(Error::Schema(format!(
                    "weights length {} != {} design rows",
                    w.len(),
                    x.n_rows()
                )));
            }
            if let Some((i, _)) = w.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                return Err(Error::NonfiniteInput(format!("weight row {i} is not positive")));
            }
            DVector::from_column_slice(w)
        }
        None => DVector::from_element(y.len(), 1.0),
    };
    wls_core(x, &DVector::from_column_slice(y), &w)
}

/// Encode an arbitrary categorical column into dense level codes 0..L,
/// levels numbered by first appearance. Returns (codes, level count).
pub fn encode_factor<T: Eq + Hash + Clone>(values: &[T]) -> (Vec<usize>, usize) {
    let mut codes = Vec::with_capacity(values.len());
    let mut map: HashMap<T, usize> = HashMap::new();
    for v in values {
        let next = map.len();
        let code = *map.entry(v.clone()).or_insert(next);
        codes.push(code);
    }
    let count = map.len();
    (codes, count)
}

/// Remove fixed effects from columns by alternating projections.
///
/// Each factor is a dense level code per row (see [`encode_factor`]).
/// Sweeps subtract within-level means factor by factor until every
/// within-level mean is below `tol` in absolute value.
///
/// # Errors
/// [`Error::NoConvergence`] after `max_iter` sweeps, reporting the largest
/// remaining within-level mean.
pub fn demean(
    columns: &[Vec<f64>],
    factors: &[Vec<usize>],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<Vec<f64>>> {
    let n = columns.first().map(|c| c.len()).unwrap_or(0);
    for f in factors {
        if f.len() != n {
            return Err(Error::Schema(format!(
                "factor length {} != {} rows",
                f.len(),
                n
            )));
        }
    }
    let level_counts: Vec<usize> = factors
        .iter()
        .map(|f| f.iter().max().map(|&m| m + 1).unwrap_or(0))
        .collect();
    let mut out: Vec<Vec<f64>> = columns.to_vec();
    if factors.is_empty() || n == 0 {
        return Ok(out);
    }

    // Row counts per level never change; compute once per factor.
    let counts: Vec<Vec<f64>> = factors
        .iter()
        .zip(&level_counts)
        .map(|(f, &lc)| {
            let mut c = vec![0.0; lc];
            for &code in f {
                c[code] += 1.0;
            }
            c
        })
        .collect();

    let mut max_mean = 0.0f64;
    for _sweep in 0..max_iter {
        for (fi, f) in factors.iter().enumerate() {
            let lc = level_counts[fi];
            for col in out.iter_mut() {
                let mut sums = vec![0.0; lc];
                for (i, &code) in f.iter().enumerate() {
                    sums[code] += col[i];
                }
                for (s, c) in sums.iter_mut().zip(&counts[fi]) {
                    *s /= c;
                }
                for (i, &code) in f.iter().enumerate() {
                    col[i] -= sums[code];
                }
            }
        }
        // Convergence: largest |within-level mean| over all factors/columns.
        max_mean = 0.0;
        for (fi, f) in factors.iter().enumerate() {
            let lc = level_counts[fi];
            for col in &out {
                let mut sums = vec![0.0; lc];
                for (i, &code) in f.iter().enumerate() {
                    sums[code] += col[i];
                }
                for (s, c) in sums.iter().zip(&counts[fi]) {
                    max_mean = max_mean.max((s / c).abs());
                }
            }
        }
        if max_mean < tol {
            return Ok(out);
        }
    }
    Err(Error::NoConvergence(format!(
        "demeaning stalled after {max_iter} sweeps, max within-group mean {max_mean:.3e}"
    )))
}

/// Natural log of y! for the Poisson log-likelihood, by direct summation.
fn ln_factorial_table(max_y: u64) -> Vec<f64> {
    let mut table = Vec::with_capacity(max_y as usize + 1);
    table.push(0.0);
    let mut acc = 0.0;
    for k in 1..=max_y {
        acc += (k as f64).ln();
        table.push(acc);
    }
    table
}

/// Poisson regression with log link via IRLS.
///
/// Starting values: `log(mean(y) + 0.1)` on the first all-ones column (zero
/// elsewhere). Converged when the deviance changes by less than
/// [`IRLS_DEVIANCE_TOL`] and the score max-norm is below
/// [`IRLS_SCORE_TOL`].
///
/// # Errors
/// [`Error::Separation`] when coefficients diverge (or y is identically 0);
/// [`Error::NoConvergence`] after [`IRLS_MAX_ITER`] iterations or when the
/// final score check fails; [`Error::NonfiniteInput`] on bad inputs.
pub fn poisson_fit(x: &DesignMatrix, y: &[f64]) -> Result<FitResult> {
    x.check_finite()?;
    check_vector_finite("response", y)?;
    if y.len() != x.n_rows() {
        return Err(Error::Schema(format!(
            "response length {} != {} design rows",
            y.len(),
            x.n_rows()
        )));
    }
    if let Some((i, _)) = y.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NonfiniteInput(format!("count row {i} is negative")));
    }
    let n = x.n_rows();
    let k = x.n_cols();
    if n == 0 {
        return Err(Error::Schema("empty response".into()));
    }
    if y.iter().all(|&v| v == 0.0) {
        // The MLE diverges to -inf on the intercept: the log(0) limit.
        return Err(Error::Separation(f64::INFINITY));
    }

    let xm = x.matrix();
    let ybar = y.iter().sum::<f64>() / n as f64;

    // Identify the first constant-one column as the intercept for the start.
    let intercept_col = (0..k).find(|&j| (0..n).all(|i| xm[(i, j)] == 1.0));
    let mut beta = DVector::zeros(k);
    if let Some(j) = intercept_col {
        beta[j] = (ybar + 0.1).ln();
    }

    let deviance = |mu: &DVector<f64>| -> f64 {
        let mut dev = 0.0;
        for i in 0..n {
            let yi = y[i];
            let term = if yi > 0.0 {
                yi * (yi / mu[i]).ln() - (yi - mu[i])
            } else {
                mu[i]
            };
            dev += term;
        }
        2.0 * dev
    };

    let eta_cap = 500.0; // keeps exp() finite; separation check handles blowups
    let mut last_dev = f64::INFINITY;
    let mut fit: Option<FitResult> = None;
    for _iter in 0..IRLS_MAX_ITER {
        let eta = xm * &beta;
        let mu = eta.map(|e| e.min(eta_cap).exp());
        let dev = deviance(&mu);

        // Working response z = eta + (y - mu)/mu, weights w = mu.
        let z = DVector::from_iterator(
            n,
            (0..n).map(|i| eta[i].min(eta_cap) + (y[i] - mu[i]) / mu[i]),
        );
        let step = wls_core(x, &z, &mu)?;
        // Expand retained coefficients back to full width.
        let mut new_beta = DVector::zeros(k);
        for (jj, &j) in step.retained.iter().enumerate() {
            new_beta[j] = step.coef_vec[jj];
        }
        beta = new_beta;

        let max_abs = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        if max_abs > SEPARATION_BOUND {
            return Err(Error::Separation(max_abs));
        }

        if (dev - last_dev).abs() < IRLS_DEVIANCE_TOL {
            fit = Some(step);
            break;
        }
        last_dev = dev;
    }
    let Some(mut fit) = fit else {
        return Err(Error::NoConvergence(format!(
            "IRLS did not converge in {IRLS_MAX_ITER} iterations (deviance {last_dev:.6e})"
        )));
    };

    // Recompute everything at the final beta so scores/bread/residuals are
    // evaluated at the optimum itself.
    let eta = xm * &beta;
    let mu = eta.map(|e| e.min(eta_cap).exp());
    let final_w = mu.clone();
    let refit = wls_core(
        x,
        &DVector::from_iterator(n, (0..n).map(|i| eta[i].min(eta_cap) + (y[i] - mu[i]) / mu[i])),
        &final_w,
    )?;
    fit.bread = refit.bread;
    fit.retained = refit.retained;
    fit.retained_names = refit.retained_names;
    fit.dropped_columns = refit.dropped_columns;

    let residuals = DVector::from_iterator(n, (0..n).map(|i| y[i] - mu[i]));
    // Score s_j = Σ_i (y_i - mu_i) x_ij must vanish at the optimum.
    let mut max_score = 0.0f64;
    let mut scores = DMatrix::zeros(n, fit.retained.len());
    for (jj, &j) in fit.retained.iter().enumerate() {
        let mut total = 0.0;
        for i in 0..n {
            let s = residuals[i] * xm[(i, j)];
            scores[(i, jj)] = s;
            total += s;
        }
        max_score = max_score.max(total.abs());
    }
    if max_score >= IRLS_SCORE_TOL {
        return Err(Error::NoConvergence(format!(
            "score max-norm {max_score:.3e} at the declared optimum exceeds {IRLS_SCORE_TOL:.0e}"
        )));
    }

    let max_y = y.iter().fold(0.0f64, |m, &v| m.max(v)) as u64;
    let lnfact = ln_factorial_table(max_y);
    let mut ll = 0.0;
    for i in 0..n {
        ll += y[i] * eta[i].min(eta_cap) - mu[i] - lnfact[y[i] as usize];
    }

    let coef_vec =
        DVector::from_iterator(fit.retained.len(), fit.retained.iter().map(|&j| beta[j]));
    let coefficients: BTreeMap<String, f64> = fit
        .retained_names
        .iter()
        .cloned()
        .zip(coef_vec.iter().copied())
        .collect();

    Ok(FitResult {
        coefficients,
        dropped_columns: fit.dropped_columns,
        residuals,
        dof_residual: n as i64 - fit.retained.len() as i64,
        scores,
        log_likelihood: Some(ll),
        retained: fit.retained,
        retained_names: fit.retained_names,
        bread: fit.bread,
        absorbed_dof: 0,
        coef_vec,
    })
}
