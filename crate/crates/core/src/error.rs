use thiserror::Error;

use crate::structures::{Level, StructureKind, Var};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("field `{field}` = {value} is outside the allowed range {range}")]
    OutOfRange {
        field: String,
        value: f64,
        range: &'static str,
    },

    #[error("structure {kind} requires field `{field}`")]
    MissingField { kind: StructureKind, field: String },

    #[error("structure {kind} does not take field `{field}`")]
    ExtraField { kind: StructureKind, field: String },

    #[error("stratum {var}={level} has zero probability")]
    DegenerateStratum { var: Var, level: Level },

    #[error("ratio is undefined: {0}")]
    UndefinedRatio(String),

    #[error("exposure and adjustment variable {0} are perfectly collinear")]
    SingularDesign(Var),

    #[error("variable {var} is not part of structure {kind}")]
    UnknownVariable { kind: StructureKind, var: Var },

    #[error("query not supported: {0}")]
    Unsupported(String),

    #[error("grid resolution must be at least 2, got {0}")]
    InvalidResolution(usize),

    #[error("sample size must be at least 1")]
    EmptySample,

    #[error("parse error: {0}")]
    Parse(String),
}
