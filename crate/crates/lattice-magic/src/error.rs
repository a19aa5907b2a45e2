use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },

    #[error("invalid {field}: {reason}")]
    Invariant { field: String, reason: String },

    #[error("lattice at {wavelength_nm} nm is {detuning_hz:.3e} Hz from line {line}, too close to resonance")]
    Resonance { line: String, wavelength_nm: f64, detuning_hz: f64 },

    #[error("scalar polarizability {0:.6e} Hz/(W/cm^2) of the lower level does not trap")]
    NotTrapping(f64),

    #[error("operator is not Hermitian (max asymmetry {0:.3e})")]
    NonHermitian(f64),

    #[error("operator couples {row} to {col} with different m (element {value:.3e})")]
    BlockStructure { row: String, col: String, value: f64 },

    #[error("tensor decomposition leaves residual {0:.3e} (relative) after reassembly")]
    Decomposition(f64),

    #[error("adiabatic label {label} is ambiguous (overlap {overlap:.3})")]
    Degenerate { label: String, overlap: f64 },

    #[error("light-shift slope has no sign change in [{lo}, {hi}] G or its mirror")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: String, iterations: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("untrapped ensemble: temperature {temperature_uk} uK is not below depth {depth_uk} uK")]
    Untrapped { temperature_uk: f64, depth_uk: f64 },

    #[error("column '{column}': {reason}")]
    Schema { column: String, reason: String },

    #[error("row {row}, column '{column}': {reason}")]
    Cell { row: usize, column: String, reason: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }

    pub(crate) fn invariant(field: &str, reason: impl Into<String>) -> Self {
        Error::Invariant { field: field.to_string(), reason: reason.into() }
    }
}
