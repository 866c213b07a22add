use thiserror::Error;

/// Library-wide error type.
///
/// The variants map onto the CLI exit-code policy: `Domain` and
/// `Degenerate` are configuration problems (exit 2), `ShapeViolation`
/// and `Numeric` are runtime numerical failures (exit 3).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input outside an operation's documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Parameter combination for which the model has no well-defined
    /// update rule (e.g. the admission rule's denominator vanishes).
    #[error("degenerate model: {0}")]
    Degenerate(String),

    /// An update map outside the supported shape family, e.g. one whose
    /// graph crosses the diagonal more than three times.
    #[error("shape violation: {0}")]
    ShapeViolation(String),

    /// An iterative scheme failed to converge or to bracket a root.
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
