use thiserror::Error;

use crate::config::Violation;

/// Errors surfaced by the analytic engines and the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error in {func}: {detail}")]
    Domain { func: &'static str, detail: String },

    #[error("enumeration cap exceeded: order {order} > {cap}")]
    CapExceeded { order: usize, cap: usize },

    #[error(
        "quadrature did not converge for `{name}` (estimate {estimate:e}, error {error:e}, tolerance {tolerance:e})"
    )]
    Quadrature { name: String, estimate: f64, error: f64, tolerance: f64 },

    #[error("p.m.f. truncation cap {cap} reached with tail mass {tail:e} above {eps:e}")]
    Truncation { cap: usize, tail: f64, eps: f64 },

    #[error("invalid parameters: {}", format_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("config parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("insufficient conditioning samples for {what}: {got} drops")]
    InsufficientSamples { what: &'static str, got: u64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| format!("{}: {}", x.field, x.message)).collect::<Vec<_>>().join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(func: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain { func, detail: detail.into() }
}
