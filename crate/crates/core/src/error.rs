use thiserror::Error;

/// Errors raised by the solvers, oracles and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("diffusion function vanishes everywhere on the grid; noise is unconstrained")]
    DegenerateDiffusion,

    #[error("degenerate connectivity: {0}")]
    DegenerateConnectivity(String),

    #[error("time step {requested:e} exceeds the admissible bound {admissible:e} ({constraint})")]
    TimeStepTooLarge {
        requested: f64,
        admissible: f64,
        constraint: &'static str,
    },

    #[error("profile is not normalizable: {0}")]
    NonNormalizable(String),

    #[error("density has zero mass")]
    ZeroMass,

    #[error("reference profile is identically zero")]
    ZeroReference,

    #[error("shape mismatch: expected {expected}, got {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("argument outside the domain of definition: {0}")]
    OutOfDomain(String),

    #[error("negative density {value:e} at opinion node {node}, connectivity {connectivity}")]
    NegativeDensity {
        value: f64,
        node: usize,
        connectivity: usize,
    },

    #[error("linear system is not diagonally dominant: {0}")]
    NonDominant(String),

    #[error("configuration error{}: {message}", location(.line, .key))]
    Config {
        line: Option<usize>,
        key: Option<String>,
        message: String,
    },

    #[error("step {step} (t = {time:.6}): {source}")]
    AtStep {
        step: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn location(line: &Option<usize>, key: &Option<String>) -> String {
    match (line, key) {
        (Some(l), Some(k)) => format!(" at line {l}, key `{k}`"),
        (Some(l), None) => format!(" at line {l}"),
        (None, Some(k)) => format!(" for key `{k}`"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Wraps the error with the step index and time it occurred at.
    pub fn at_step(self, step: usize, time: f64) -> Self {
        Error::AtStep {
            step,
            time,
            source: Box::new(self),
        }
    }

    /// Stable machine-readable kind, used for CLI error JSON and FFI codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DegenerateDiffusion => "degenerate_diffusion",
            Error::DegenerateConnectivity(_) => "degenerate_connectivity",
            Error::TimeStepTooLarge { .. } => "time_step_too_large",
            Error::NonNormalizable(_) => "non_normalizable",
            Error::ZeroMass => "zero_mass",
            Error::ZeroReference => "zero_reference",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::Unsupported(_) => "unsupported",
            Error::OutOfDomain(_) => "out_of_domain",
            Error::NegativeDensity { .. } => "negative_density",
            Error::NonDominant(_) => "non_dominant",
            Error::Config { .. } => "config",
            Error::AtStep { source, .. } => source.kind(),
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
