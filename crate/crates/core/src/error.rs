use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid interval ({lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("rank deficient: {0}")]
    RankDeficient(&'static str),
    #[error("singular system at lambda = {0}")]
    Singular(f64),
    #[error("hard case system is infeasible: {0}")]
    Infeasible(&'static str),
    #[error("null space of dimension {0} is not supported")]
    UnsupportedDegeneracy(usize),
    #[error("start point coincides with sensor {0}")]
    SingularJacobian(usize),
    #[error("normal matrix condition number {0:e} exceeds 1e12")]
    IllConditioned(f64),
    #[error("Gauss-Newton diverged after {0} iterations")]
    Divergence(usize),
}

impl Error {
    /// `true` for errors caused by the caller's inputs or settings rather
    /// than by a numerical breakdown.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidScenario(_) | Error::Config(_) | Error::InvalidInput(_) | Error::InvalidInterval { .. }
        )
    }
}
