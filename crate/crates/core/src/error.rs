use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("{link} link: linear predictor {eta} is outside the admissible range")]
    LinkDomain { link: &'static str, eta: f64 },

    #[error("{family} family: mean {mu} is not admissible")]
    MeanDomain { family: &'static str, mu: f64 },

    #[error("design point {index} is not admissible: {source}")]
    Point { index: usize, source: Box<Error> },

    #[error("link {link} is not admissible for the {family} family")]
    Inadmissible {
        family: &'static str,
        link: &'static str,
    },

    #[error("information matrix is singular")]
    Singular,

    #[error("prior draw {0} gives a singular information matrix")]
    SingularDraw(usize),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub(crate) fn at_point(self, index: usize) -> Self {
        Error::Point {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
