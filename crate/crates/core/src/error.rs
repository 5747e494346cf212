use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A simulation produced a non-finite value.
    #[error("numeric error at {context}: non-finite value")]
    Numeric { context: String },

    /// A declared Lipschitz or boundedness constant was contradicted by a spot check.
    #[error("declared constant violated: {0}")]
    ConstantViolation(String),

    #[error("unknown innovation law `{0}`")]
    UnknownLaw(String),

    #[error("degenerate Π factor at step {step}: {factor}")]
    DegenerateFactor { step: usize, factor: f64 },

    #[error("degenerate weight vector")]
    DegenerateWeights,

    #[error("rate analysis requires a parametric family")]
    NotParametric,

    /// Every validation failure found in a configuration, not just the first.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numeric(context: impl Into<String>) -> Self {
        Error::Numeric { context: context.into() }
    }
}
