use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("degenerate coupling: bright mode undefined for zero coupling")]
    DegenerateCoupling,

    #[error("vector is not normalized (norm = {0})")]
    NotNormalized(f64),

    #[error("matrix is not unitary (max |U†U - I| = {0:e})")]
    NotUnitary(f64),

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("scheduling error: {0}")]
    Schedule(String),

    #[error("singular detunings: {0}")]
    Singular(String),

    #[error("resonance pole in driven solution for pair ({0}, {1})")]
    ResonancePole(usize, usize),

    #[error("undefined overlap: reference has zero energy")]
    UndefinedOverlap,

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("conditioning on a zero-probability pattern {0:?}")]
    Conditioning(Vec<u8>),

    #[error("no policy branch for measurement pattern {0:?}")]
    Policy(Vec<u8>),

    #[error("constraint solve did not converge: {0}")]
    Derivation(String),

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("IO error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Self::Config { path: path.into(), msg: msg.into() }
    }

    /// True for errors caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Self::Divergence(_)
                | Self::StepSize(_)
                | Self::Conditioning(_)
                | Self::Derivation(_)
                | Self::UndefinedOverlap
                | Self::ResonancePole(..)
        )
    }
}
