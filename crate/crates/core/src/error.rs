//! Error type shared by all modules.
//!
//! Every variant carries a stable machine-readable code (see [`Error::code`])
//! so CLI consumers can dispatch on failures without parsing messages.

use thiserror::Error;

/// Library-wide error enum.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    // -- correlator validation / evaluation --
    #[error("atom weight must be positive, got {0}")]
    NonpositiveWeight(f64),
    #[error("atom rate must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("linear slope must be nonnegative, got {0}")]
    NegativeSlope(f64),
    #[error("duplicate atom rate {0}; rates must be strictly increasing")]
    DuplicateRate(f64),
    #[error("argument must be nonnegative, got {0}")]
    NegativeArgument(f64),
    #[error("regularization level M={m} below admissible threshold {threshold}")]
    MTooSmall { m: f64, threshold: f64 },
    #[error("overlap {q} outside [-{r}, {r}]")]
    OverlapOutOfRange { q: f64, r: f64 },

    // -- state space / order parameter --
    #[error("ball state spaces are not supported by this operation")]
    BallVariantUnsupported,
    #[error("{0} sequence is not strictly increasing")]
    NotStrictlyIncreasing(&'static str),
    #[error("{what} value {value} outside open interval ({lo}, {hi})")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid state space: {0}")]
    InvalidStateSpace(String),

    // -- PDE / recursion solvers --
    #[error("y-grid too narrow: need half-width >= {needed}, have {have}")]
    GridTooNarrow { needed: f64, have: f64 },
    #[error("non-finite value encountered in {0}")]
    NonfiniteValue(&'static str),
    #[error("finite-difference time step violates stability bound (dt={dt}, limit={limit})")]
    CflViolation { dt: f64, limit: f64 },
    #[error("lambda infimum diverges: r={r} outside attainable range [{lo}, {hi}]")]
    InfimumDiverges { r: f64, lo: f64, hi: f64 },
    #[error("M-plateau not reached: deviation {dev} exceeds {limit}")]
    PlateauNotReached { dev: f64, limit: f64 },
    #[error("no feasible r in [0, {d}]")]
    AllRInfeasible { d: f64 },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),

    // -- Crisanti-Sommers --
    #[error("q_max={q_max} must lie strictly below r={r}")]
    QmaxAtBoundary { q_max: f64, r: f64 },
    #[error("nonpositive argument {0} to logarithm in the Crisanti-Sommers functional")]
    NonpositiveLogArgument(f64),

    // -- cascades --
    #[error("cascade tree with {leaves} leaves exceeds cap {cap}")]
    TreeTooLarge { leaves: usize, cap: usize },
    #[error("leaf paths have different depths ({0} vs {1})")]
    DepthMismatch(usize, usize),
    #[error("PPP truncation bound {bound} dominates standard error {stderr}")]
    TruncationDominates { bound: f64, stderr: f64 },
    #[error("PPP exponent must lie in (0,1), got {0}")]
    ExponentOutOfRange(f64),

    // -- monte carlo --
    #[error("covariance matrix not PSD (ridge {ridge} insufficient)")]
    NotPsd { ridge: f64 },
    #[error("{points} sample points exceed cap {cap}")]
    TooManyPoints { points: usize, cap: usize },
    #[error("state-space enumeration of size {size} exceeds cap {cap}")]
    EnumerationTooLarge { size: usize, cap: usize },
    #[error("overlap-series tail bound {bound} exceeds tolerance {tol}")]
    TailTooLarge { bound: f64, tol: f64 },
    #[error("coupling tensor of {count} entries exceeds memory cap {cap}")]
    MemoryCap { count: usize, cap: usize },

    // -- config / cli --
    #[error("config error at {path}: {message}")]
    SchemaError { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code for the variant.
    pub fn code(&self) -> &'static str {
        use Error::*;
        match self {
            NonpositiveWeight(_) => "nonpositive_weight",
            NonpositiveRate(_) => "nonpositive_rate",
            NegativeSlope(_) => "negative_slope",
            DuplicateRate(_) => "duplicate_rate",
            NegativeArgument(_) => "negative_argument",
            MTooSmall { .. } => "m_too_small",
            OverlapOutOfRange { .. } => "overlap_out_of_range",
            BallVariantUnsupported => "ball_variant_unsupported",
            NotStrictlyIncreasing(_) => "not_strictly_increasing",
            OutOfRange { .. } => "out_of_range",
            InvalidStateSpace(_) => "invalid_state_space",
            GridTooNarrow { .. } => "grid_too_narrow",
            NonfiniteValue(_) => "nonfinite_value",
            CflViolation { .. } => "cfl_violation",
            InfimumDiverges { .. } => "infimum_diverges",
            PlateauNotReached { .. } => "plateau_not_reached",
            AllRInfeasible { .. } => "all_r_infeasible",
            InvalidConfig(_) => "invalid_config",
            QmaxAtBoundary { .. } => "qmax_at_boundary",
            NonpositiveLogArgument(_) => "nonpositive_log_argument",
            TreeTooLarge { .. } => "tree_too_large",
            DepthMismatch(..) => "depth_mismatch",
            TruncationDominates { .. } => "truncation_dominates",
            ExponentOutOfRange(_) => "exponent_out_of_range",
            NotPsd { .. } => "not_psd",
            TooManyPoints { .. } => "too_many_points",
            EnumerationTooLarge { .. } => "enumeration_too_large",
            TailTooLarge { .. } => "tail_too_large",
            MemoryCap { .. } => "memory_cap",
            SchemaError { .. } => "schema_error",
            Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
