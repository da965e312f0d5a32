use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
///
/// Variants split into two families: input validation (bad files, bad
/// arguments, malformed tables) and estimation degeneracy (rank loss,
/// irrelevant instruments, undefined estimands). [`IvError::is_degenerate`]
/// tells them apart; the CLI maps them to different exit codes.
#[derive(Debug, Error)]
pub enum IvError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("column `{column}` not found in header")]
    MissingColumn { column: String },

    #[error("unparseable cell at row {row}, column `{column}`: {value:?}")]
    BadCell {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        value: String,
    },

    #[error("dataset has no rows")]
    Empty,

    #[error("column `{column}` has length {got}, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        got: usize,
    },

    #[error("instrument column `{column}` is constant")]
    ConstantInstrument { column: String },

    #[error("non-binary value {value} in column `{column}` at row {row}")]
    NonBinary {
        row: usize,
        column: String,
        value: f64,
    },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank-deficient design{}", match .column { Some(c) => format!(" (column `{c}`)"), None => String::new() })]
    RankDeficient { column: Option<String> },

    #[error("need more observations than parameters: n = {n}, p = {p}")]
    TooFewObservations { n: usize, p: usize },

    #[error("instrument irrelevant: first-stage denominator {denominator:e}")]
    IrrelevantInstrument { denominator: f64 },

    #[error("monotonicity violated or instrument irrelevant: ITT on treatment = {itt_x}")]
    NonPositiveCompliance { itt_x: f64 },

    #[error("undefined: {0}")]
    Undefined(String),
}

impl IvError {
    /// True for failures of the estimation problem itself rather than of
    /// the input (rank loss, irrelevance, undefined estimands).
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            IvError::RankDeficient { .. }
                | IvError::TooFewObservations { .. }
                | IvError::IrrelevantInstrument { .. }
                | IvError::NonPositiveCompliance { .. }
                | IvError::Undefined(_)
        )
    }

    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            IvError::Io { .. } => "io",
            IvError::Csv(_) => "csv",
            IvError::MissingColumn { .. } => "missing_column",
            IvError::BadCell { .. } => "bad_cell",
            IvError::Empty => "empty",
            IvError::LengthMismatch { .. } => "length_mismatch",
            IvError::ConstantInstrument { .. } => "constant_instrument",
            IvError::NonBinary { .. } => "non_binary",
            IvError::InvalidTable(_) => "invalid_table",
            IvError::InvalidArgument(_) => "invalid_argument",
            IvError::RankDeficient { .. } => "rank_deficient",
            IvError::TooFewObservations { .. } => "too_few_observations",
            IvError::IrrelevantInstrument { .. } => "irrelevant_instrument",
            IvError::NonPositiveCompliance { .. } => "non_positive_compliance",
            IvError::Undefined(_) => "undefined",
        }
    }
}

pub type Result<T, E = IvError> = std::result::Result<T, E>;
