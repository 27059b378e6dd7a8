use thiserror::Error;

/// Errors raised by model construction, evaluation and integration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Bad arguments: wrong vector lengths, invalid dimensions or parameters.
    #[error("input error: {0}")]
    Input(String),

    /// A model failed its defining identities when it was built.
    #[error("construction error: {0}")]
    Construction(String),

    /// The Legendre transform is (numerically) singular.
    #[error("regularity error at {context}: condition estimate {condition:.3e}")]
    Regularity { context: String, condition: f64 },

    /// A Newton iteration did not converge.
    #[error("solve error: {context} (after {iterations} iterations, residual {residual:.3e})")]
    Solve {
        context: String,
        iterations: usize,
        residual: f64,
    },

    /// The trajectory left the coordinate chart of the model.
    #[error("chart exit at t = {t}: coordinate {coordinate} = {value} outside [{lo}, {hi}]")]
    ChartExit {
        t: f64,
        coordinate: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// A morphism could not be applied (for example a singular fiber map).
    #[error("morphism error: {0}")]
    Morphism(String),
}

impl Error {
    pub(crate) fn dims(what: &str, expected: usize, got: usize) -> Self {
        Error::Input(format!("{what}: expected length {expected}, got {got}"))
    }

    /// Prefix the context of a solver error with `t = ...`, unless it already has one.
    pub(crate) fn at_time(self, t: f64) -> Self {
        let stamped = |c: &str| c.starts_with("t = ");
        match self {
            Error::Regularity { ref context, .. } | Error::Solve { ref context, .. } if stamped(context) => self,
            Error::Regularity { context, condition } => Error::Regularity {
                context: format!("t = {t}: {context}"),
                condition,
            },
            Error::Solve {
                context,
                iterations,
                residual,
            } => Error::Solve {
                context: format!("t = {t}: {context}"),
                iterations,
                residual,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
