//! Shared error type for the whole engine.
//!
//! Every failure carries a stable machine-readable code (the SCREAMING_SNAKE
//! prefix of its message) so batch front-ends can map errors to JSON without
//! string-scraping.

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All recoverable failures the engine can report.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// A filter or aggregation produced an empty result set.
    #[error("EMPTY_RESULT: {0}")]
    EmptyResult(String),

    /// A unit id was not found in the panel.
    #[error("UNKNOWN_UNIT: no unit named '{0}' in the panel")]
    UnknownUnit(String),

    /// An outcome or covariate name was not found.
    #[error("UNKNOWN_COLUMN: no column named '{0}' in the panel")]
    UnknownColumn(String),

    /// Micro records passed to a cell aggregator span several parish-years.
    #[error("MIXED_CELL: {0}")]
    MixedCell(String),

    /// Market-access floor must be strictly positive.
    #[error("NONPOSITIVE_FLOOR: floor_km must be > 0, got {0}")]
    NonpositiveFloor(f64),

    /// A path distance was requested against an empty polyline.
    #[error("EMPTY_PATH: path must contain at least one point")]
    EmptyPath,

    /// Every design column was dropped as collinear.
    #[error("ALL_COLLINEAR: every design column was dropped as collinear")]
    AllCollinear,

    /// A design matrix, outcome, or weight vector contains NaN/inf.
    #[error("NONFINITE_INPUT: {0}")]
    NonfiniteInput(String),

    /// An iterative solver ran out of iterations.
    #[error("NO_CONVERGENCE: {0}")]
    NoConvergence(String),

    /// Poisson coefficients diverged (quasi-separation).
    #[error("SEPARATION: Poisson fit diverged, max |coefficient| = {0:.3e}")]
    Separation(f64),

    /// The bread matrix X'WX is singular on the retained columns.
    #[error("SINGULAR_BREAD: X'WX is singular on the retained columns")]
    SingularBread,

    /// Spatial inference was requested but coordinates are missing.
    #[error("MISSING_COORDS: {0}")]
    MissingCoords(String),

    /// A variance matrix failed the positive-semidefiniteness check.
    #[error("NOT_PSD: variance matrix has eigenvalue {0:.3e} below -1e-10")]
    NotPsd(f64),

    /// No treated observations in the estimation sample.
    #[error("NO_TREATED: no treated observations in the estimation sample")]
    NoTreated,

    /// Group-time estimation requires a never-treated control group.
    #[error("NO_NEVER_TREATED: group-time estimation requires never-treated units")]
    NoNeverTreated,

    /// No period exists before the cohort (or placebo) period to difference against.
    #[error("NO_BASE_PERIOD: {0}")]
    NoBasePeriod(String),

    /// A cohort has no complete-case units.
    #[error("EMPTY_COHORT: no units first treated at {0}")]
    EmptyCohort(i32),

    /// An aggregation received no usable group-time cells.
    #[error("NO_CELLS: no group-time cells to aggregate")]
    NoCells,

    /// A multiplier bootstrap was handed an all-zero influence matrix.
    #[error("DEGENERATE_INFLUENCE: influence values are all zero")]
    DegenerateInfluence,

    /// A balance regression has only one group.
    #[error("NO_VARIATION: {0}")]
    NoVariation(String),

    /// A distribution test received an empty sample.
    #[error("EMPTY_SAMPLE: {0}")]
    EmptySample(String),

    /// A density estimate was requested for a degenerate sample.
    #[error("DEGENERATE: {0}")]
    Degenerate(String),

    /// Simulation cohort shares are invalid.
    #[error("BAD_SHARES: {0}")]
    BadShares(String),

    /// A 2x2 oracle group is empty at the requested periods.
    #[error("EMPTY_GROUP: {0}")]
    EmptyGroup(String),

    /// A file failed to parse at a specific line.
    #[error("PARSE_ERROR: {file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },

    /// An input file is missing a required column or has a malformed header.
    #[error("SCHEMA_ERROR: {0}")]
    Schema(String),

    /// Underlying I/O failure (path and cause flattened to text).
    #[error("IO_ERROR: {0}")]
    Io(String),

    /// An error re-raised with added context (e.g. which outcome was being
    /// estimated); the original machine code is preserved.
    #[error("{message}")]
    Context {
        code: &'static str,
        message: String,
    },
}

impl Error {
    /// Stable machine-readable code for this error.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyResult(_) => "EMPTY_RESULT",
            Error::UnknownUnit(_) => "UNKNOWN_UNIT",
            Error::UnknownColumn(_) => "UNKNOWN_COLUMN",
            Error::MixedCell(_) => "MIXED_CELL",
            Error::NonpositiveFloor(_) => "NONPOSITIVE_FLOOR",
            Error::EmptyPath => "EMPTY_PATH",
            Error::AllCollinear => "ALL_COLLINEAR",
            Error::NonfiniteInput(_) => "NONFINITE_INPUT",
            Error::NoConvergence(_) => "NO_CONVERGENCE",
            Error::Separation(_) => "SEPARATION",
            Error::SingularBread => "SINGULAR_BREAD",
            Error::MissingCoords(_) => "MISSING_COORDS",
            Error::NotPsd(_) => "NOT_PSD",
            Error::NoTreated => "NO_TREATED",
            Error::NoNeverTreated => "NO_NEVER_TREATED",
            Error::NoBasePeriod(_) => "NO_BASE_PERIOD",
            Error::EmptyCohort(_) => "EMPTY_COHORT",
            Error::NoCells => "NO_CELLS",
            Error::DegenerateInfluence => "DEGENERATE_INFLUENCE",
            Error::NoVariation(_) => "NO_VARIATION",
            Error::EmptySample(_) => "EMPTY_SAMPLE",
            Error::Degenerate(_) => "DEGENERATE",
            Error::BadShares(_) => "BAD_SHARES",
            Error::EmptyGroup(_) => "EMPTY_GROUP",
            Error::Parse { .. } => "PARSE_ERROR",
            Error::Schema(_) => "SCHEMA_ERROR",
            Error::Io(_) => "IO_ERROR",
            Error::Context { code, .. } => code,
        }
    }

    /// Re-raise with a context prefix, keeping the machine code.
    pub fn with_context(self, ctx: impl std::fmt::Display) -> Error {
        let code = self.code();
        Error::Context { code, message: format!("{ctx}: {self}") }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
