use thiserror::Error;

/// Failures of the certified orbit pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OrbitError {
    /// The enclosure meets a partition endpoint or more than one branch
    /// domain, so no single digit can be assigned.
    #[error("enclosure straddles a branch boundary")]
    BranchStraddle,

    /// Doubling the working precision reached the cap without separating
    /// the enclosure from every partition endpoint.
    #[error("precision cap of {cap} bits reached while separating digits")]
    PrecisionExhausted { cap: u32 },

    /// A shift or distance was requested past the end of the digit budget.
    #[error("digit budget too small: need {needed} digits, have {have}")]
    InsufficientDigits { needed: usize, have: usize },

    /// The point leaves the coded support (for example the middle-third
    /// gap of the Cantor set), or its expansion terminates.
    #[error("point is outside the coded support of the system")]
    OutsideSupport,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BuildError {
    #[error("beta must satisfy beta > 1, got {0}")]
    BetaOutOfRange(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CylinderError {
    /// Enumeration would exceed the configured cylinder budget.
    #[error("cylinder count exceeds guard of {guard}")]
    TooMany { guard: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    /// Rejection sampler exceeded its proposal budget.
    #[error("rejection sampler stalled after {0} proposals")]
    SamplerStall(u32),
}

/// Failures of a whole estimator run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("sample {index}: resample cap {cap} exceeded ({source})")]
    ResampleCapExceeded {
        index: usize,
        cap: u32,
        source: OrbitError,
    },
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Cylinders(#[from] CylinderError),
    #[error("ambiguous-classification rate {rate:.6} exceeds cap {cap}")]
    AmbiguityBudget { rate: f64, cap: f64 },
}
