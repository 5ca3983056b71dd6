use thiserror::Error;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("policy space exceeds cap: {count} > {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("max_iter exceeded after {iterations} iterations (residual {residual:e})")]
    MaxIterExceeded { iterations: usize, residual: f64 },

    #[error("eigenvalue iteration failed to converge ({dim}x{dim} matrix)")]
    EigenNoConvergence { dim: usize },

    #[error("delta outside hull at state {state}: delta {delta} not in [{lo}, {hi}]")]
    DeltaOutsideHull {
        state: usize,
        delta: f64,
        lo: f64,
        hi: f64,
    },

    #[error("eta not certified at depth {depth}: max product norm {max_norm:e} > eta^L {bound:e}")]
    EtaNotCertified {
        depth: usize,
        max_norm: f64,
        bound: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
