use thiserror::Error;

/// Errors raised by the numerical routines and the simulation engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mechanism: {0}")]
    InvalidMechanism(String),

    #[error("supercritical mechanism (alpha = {alpha}) is not supported")]
    Supercritical { alpha: f64 },

    #[error("non-extinguishing mechanism: Grey's condition fails")]
    NonExtinguishing,

    #[error("undecidable: {0}")]
    Undecidable(String),

    #[error("quadrature did not converge on [{lo}, {hi}] (estimated error {error:e})")]
    Quadrature { lo: f64, hi: f64, error: f64 },

    #[error("root bracketing failed for target {target}: last bracket [{lo}, {hi}]")]
    Bracket { target: f64, lo: f64, hi: f64 },

    #[error("root finding stalled for target {target} at {at} (residual {residual:e})")]
    RootStalled { target: f64, at: f64, residual: f64 },

    #[error("Laplace inversion did not converge at x = {x} (precision M = {precision}, spread {spread:e})")]
    Inversion { x: f64, precision: usize, spread: f64 },

    #[error("crosscheck failed for {what}: {primary} vs {secondary}")]
    Crosscheck { what: String, primary: f64, secondary: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("estimator guard tripped: {0}")]
    Estimator(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidMechanism(_)
                | Error::Supercritical { .. }
                | Error::NonExtinguishing
                | Error::Undecidable(_)
                | Error::Domain(_)
                | Error::Config(_)
        )
    }
}
