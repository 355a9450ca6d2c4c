//! Eigenvector localization in graph Laplacians and the robustness of
//! second-order oscillator networks to rank-one dynamic perturbations.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: graphs, Laplacians, the banded example family, file formats.
//! * [`spectral`]: symmetric eigendecomposition, second-order modes, localization.
//! * [`perturbation`]: the four rank-one scenarios and first-order sensitivities.
//! * [`frequency`]: state-space triples, transfer functions, H-infinity norms, pseudospectra.
//! * [`smallgain`]: destabilizing perturbations at the stability margin.
//! * [`simulate`]: fixed-step time integration with static, delayed and all-pass feedback.
//! * [`pipeline`]: end-to-end experiments writing CSV/JSON artifacts.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod frequency;
pub mod graph;
pub mod linalg;
pub mod output;
pub mod perturbation;
pub mod pipeline;
pub mod simulate;
pub mod smallgain;
pub mod spectral;

pub use exec::Exec;
pub use graph::{Graph, Laplacian};
pub use perturbation::{PerturbationVectors, Scenario};
pub use spectral::{LocalizationParams, LocalizationReport, Spectrum};

pub use num_complex::Complex64;

use thiserror::Error;

/// Errors raised by the library.
///
/// Variants split into validation failures (bad input) and numeric failures
/// (the computation itself could not be carried out); see [`Error::is_numeric`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("self-loop at node {node}")]
    SelfLoop { node: usize },

    #[error("duplicate edge ({i}, {j})")]
    DuplicateEdge { i: usize, j: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("vector is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("empty node set")]
    EmptySet,

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("repeated eigenvalues {lambda_i} (index {i}) and {lambda_j} (index {j})")]
    Degenerate {
        i: usize,
        j: usize,
        lambda_i: f64,
        lambda_j: f64,
    },

    #[error("ambiguous eigenvector matching for nominal index {index}")]
    AmbiguousMatch { index: usize },

    #[error("resolvent singular at s = {re}{im:+}j")]
    Singular { re: f64, im: f64 },

    #[error("observable pole {re}{im:+}j is not in the open left half-plane")]
    UnstablePole { re: f64, im: f64 },

    #[error("peak frequency is 0; use the static destabilizer")]
    ZeroFrequency,

    #[error("destabilizer is stale: |delta(j w)| * ||M|| = {0}")]
    StaleDestabilizer(f64),

    #[error("step size {h} exceeds the limit {limit}")]
    StepSize { h: f64, limit: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Eigen(_)
                | Error::Degenerate { .. }
                | Error::AmbiguousMatch { .. }
                | Error::Singular { .. }
                | Error::UnstablePole { .. }
                | Error::ZeroFrequency
                | Error::StaleDestabilizer(_)
                | Error::NonFinite { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
