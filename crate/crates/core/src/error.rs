use std::path::PathBuf;

use thiserror::Error;

/// Preconditions of a Landauer process. A violation names the one that failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// (i) the process involves a system and a reservoir.
    SystemAndReservoir,
    /// (ii) the initial system-reservoir state is uncorrelated.
    Uncorrelated,
    /// (iii) the reservoir starts in its Gibbs state.
    GibbsReservoir,
    /// (iv) the system-reservoir interaction is unitary.
    UnitaryInteraction,
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Criterion::SystemAndReservoir => "(i) system and reservoir",
            Criterion::Uncorrelated => "(ii) uncorrelated initial state",
            Criterion::GibbsReservoir => "(iii) Gibbs reservoir",
            Criterion::UnitaryInteraction => "(iv) unitary interaction",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("composition error: {0}")]
    Composition(String),
    #[error("unknown qubit label `{0}`")]
    UnknownLabel(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("criterion {criterion} violated: {detail}")]
    Protocol { criterion: Criterion, detail: String },
    #[error("protocol error: {0}")]
    Circuit(String),
    #[error("identity check failed: {0}")]
    Identity(String),
    #[error("pulse compilation failed: {0}")]
    Compilation(String),
    #[error("z compensation failed: {0}")]
    Correction(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("heat distribution error: {0}")]
    Distribution(String),
    #[error("gap fit failed: {0}")]
    Fit(String),
    #[error("sweep point at (beta hbar)^-1 = {beta_inv_hz} Hz failed: {source}")]
    Sweep {
        beta_inv_hz: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
