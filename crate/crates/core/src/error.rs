use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("p must be prime ≥ 5 and ≤ {max}, got {p}")]
    InvalidModulus { p: u32, max: u32 },
    #[error("mismatched moduli: {0} vs {1}")]
    ModulusMismatch(u32, u32),
    #[error("inversion of zero")]
    ZeroInverse,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("space too large: {p}^{dim} exceeds the configured limit of {limit} points")]
    SpaceTooLarge { p: u32, dim: usize, limit: usize },
    #[error("basis vectors are linearly dependent")]
    DependentBasis,
    #[error("length {len} is not a power of {p}")]
    NotAPowerOfP { len: usize, p: u32 },
    #[error("subspace is not contained in the domain")]
    NotContained,
    #[error("functions live on different domains")]
    DomainMismatch,
    #[error("function exceeds magnitude 1 at index {index} (|f| = {magnitude})")]
    Unbounded { index: usize, magnitude: f64 },
    #[error("function is not real-valued (index {index}, imaginary part {imag})")]
    NotReal { index: usize, imag: f64 },
    #[error("function is not measurable with respect to the factor: atom {atom} is not constant")]
    NotMeasurable { atom: usize },
    #[error("complexity {d} exceeds the cap {cap}")]
    ComplexityCap { d: usize, cap: usize },
    #[error("rank separation fails at level {required}: combination {lambda:?} has rank {rank}")]
    RankSeparation {
        required: usize,
        lambda: Vec<u32>,
        rank: usize,
    },
    #[error("naive evaluation refused: |W| = {size} exceeds {limit}")]
    NaiveTooLarge { size: usize, limit: usize },
    #[error("exhaustive oracle refused: dimension {dim} over the cap {cap}; use the derivative-fit oracle")]
    OracleDimension { dim: usize, cap: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("set is empty")]
    EmptySet,
    #[error("set contains a 4-term progression starting at index {start} with step index {step}")]
    ContainsProgression { start: usize, step: usize },
    #[error("energy stalled at iteration {iteration}: increment {increment:e} below {delta_min:e}")]
    EnergyStall {
        iteration: usize,
        increment: f64,
        delta_min: f64,
    },
    #[error("iteration cap {cap} reached without regularity")]
    IterationCap { cap: usize },
    #[error("theory violation: {0}")]
    TheoryViolation(String),
    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Failures that indicate the oracle (or the desk-scale parameters) was too weak
    /// for the guarantee, rather than a bug or bad input.
    pub fn is_theory_violation(&self) -> bool {
        matches!(
            self,
            Error::TheoryViolation(_) | Error::EnergyStall { .. } | Error::IterationCap { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
