//! Panel difference-in-differences engine.
//!
//! Implements the estimation pipeline of a staggered-adoption panel study:
//!
//! - [`panel`] — the unit×period dataset, absorbing treatment schedules,
//!   validation, and complete-case selection.
//! - [`micro`] — aggregation of individual census records into parish-year
//!   outcome columns.
//! - [`spatial`] — great-circle geometry, distance covariates, and
//!   inverse-distance access densities.
//! - [`regress`] — OLS/WLS with deterministic collinearity handling,
//!   fixed-effect demeaning by alternating projections, and Poisson IRLS.
//! - [`variance`] — HC1 / cluster-robust (CR1) / spatial-HAC sandwich
//!   estimators and Mammen multiplier weights.
//! - [`twfe`] — the two-way fixed-effects treatment regression with
//!   decile×period and county×period controls.
//! - [`attgt`] — group-time average treatment effects with never-treated
//!   controls, overall and event-study aggregation, multiplier bootstrap.
//! - [`diagnostics`] — balance regressions, Kolmogorov–Smirnov tests,
//!   summary statistics, kernel densities.
//! - [`dgp`] — synthetic staggered-adoption data generators with known
//!   effects, brute-force oracles, and a Monte Carlo harness.
//! - [`io`] — CSV ingestion/serialization for panels, micro records, sites,
//!   and anchor paths.

pub mod attgt;
pub mod dgp;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod micro;
pub mod panel;
pub mod regress;
pub mod spatial;
pub mod twfe;
pub mod variance;

pub use error::{Error, Result};

/// Two-sided normal critical values used for stars and intervals.
pub mod zcrit {
    /// 90% two-sided critical value.
    pub const Z_90: f64 = 1.6448536269514722;
    /// 95% two-sided critical value.
    pub const Z_95: f64 = 1.959963984540054;
    /// 99% two-sided critical value.
    pub const Z_99: f64 = 2.5758293035489004;

    /// Significance stars at the 0.10 / 0.05 / 0.01 two-sided levels.
    pub fn stars(z: f64) -> &'static str {
        let a = z.abs();
        if a > Z_99 {
            "***"
        } else if a > Z_95 {
            "**"
        } else if a > Z_90 {
            "*"
        } else {
            ""
        }
    }
}
