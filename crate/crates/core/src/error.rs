use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("conjugate gradient met a direction of non-positive curvature at iteration {iteration} (pAp = {curvature:.3e})")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("point ({x}, {y}) is outside the mesh")]
    Location { x: f64, y: f64 },

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("flow solver failed at mu = {mu} (Re = {reynolds:.3}): {reason}")]
    Flow {
        mu: f64,
        reynolds: f64,
        reason: String,
    },

    #[error("reduced Newton iteration failed at mu = {mu} after {iterations} iterations (residual {residual:.3e}); enrich the basis")]
    RomNonConvergence {
        mu: f64,
        iterations: usize,
        residual: f64,
    },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("CFL condition violated: dt * max|u| / h_min = {cfl:.3} > 1; reduce the time step")]
    Cfl { cfl: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Short machine-readable category used by the CLI.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Contract(_) | Error::DimensionMismatch { .. } | Error::Degenerate(_) => {
                "contract"
            }
            Error::NonConvergence { .. }
            | Error::Indefinite { .. }
            | Error::Factorization(_)
            | Error::Flow { .. }
            | Error::RomNonConvergence { .. }
            | Error::Cfl { .. } => "numerical",
            Error::Parse { .. } | Error::Mesh(_) => "parse",
            Error::Location { .. } => "location",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Step { source, .. } | Error::Stage { source, .. } => source.category(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
