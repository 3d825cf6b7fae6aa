use alloc::string::String;

/// Errors raised by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix has a strongly negative eigenvalue {0:e}")]
    NegativeEigenvalue(f64),
    #[error("ontology: {0}")]
    Ontology(String),
    #[error("non-differentiable top-L boundary: singular values {0:e} and {1:e} coincide")]
    DegenerateGap(f64, f64),
    #[error("rank deficiency: {rank} usable canonical directions, {needed} requested")]
    RankDeficient { rank: usize, needed: usize },
    #[error("degenerate fold pairing: {0}")]
    DegenerateFold(String),
    #[error("missing forward cache for {0}")]
    MissingCache(&'static str),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("{context}: {inner}")]
    Context {
        context: String,
        inner: alloc::boxed::Box<Error>,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// Wraps the error with a description of what was running.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            inner: alloc::boxed::Box::new(self),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
