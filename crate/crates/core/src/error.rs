use thiserror::Error;

use crate::grid::Combo;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid with {k} combinations exceeds the enumeration cap of {cap}")]
    CapExceeded { k: usize, cap: usize },

    #[error("degenerate {rows}x{cols} grid: need at least two levels of each agent")]
    DegenerateGrid { rows: usize, cols: usize },

    #[error("combination ({}, {}) is outside the {rows}x{cols} grid", .combo.i, .combo.j)]
    ComboOutOfGrid { combo: Combo, rows: usize, cols: usize },

    #[error("invalid ordering: {0}")]
    InvalidOrdering(String),

    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),

    #[error("invalid parameter domain [{lo}, {hi}]")]
    InvalidDomain { lo: f64, hi: f64 },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("data are not heterogeneous (need at least one DLT and one non-DLT)")]
    NotHeterogeneous,

    #[error("root not bracketed in [{lo}, {hi}]: {what}")]
    RootNotBracketed { what: String, lo: f64, hi: f64 },

    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("scenario has no MTC (no combination with toxicity equal to the target)")]
    NoMtc,

    #[error("ordering belongs to the correct group; W-sets are undefined")]
    CorrectOrdering,

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("rows not coverable by any column: {0:?}")]
    Uncoverable(Vec<usize>),

    #[error("empty selection")]
    EmptySelection,

    #[error("skeleton amendment infeasible: {0}")]
    Infeasible(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
