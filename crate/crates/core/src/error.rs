use alloc::string::String;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A requested size exceeds a hard guard.
    Size { what: &'static str, value: usize, limit: usize },
    /// Mesh connectivity is not a closed oriented genus-0 manifold.
    Topology(String),
    /// A surface chart degenerated (`√g` at or below tolerance).
    DegenerateGeometry { sqrt_g: f64 },
    /// Third-order evaluation requested at an extraordinary vertex.
    Singularity,
    /// Rod stretch collapsed below the guard.
    DegenerateStretch { nu3: f64 },
    /// Point location did not converge.
    Locate { theta: [f64; 2], residual: f64 },
    /// Argument outside the domain of a formula.
    Domain(&'static str),
    /// A vector had the wrong length.
    Dimension { expected: usize, got: usize },
    /// Non-finite value where a finite one was required.
    NonFinite(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Size { what, value, limit } => {
                write!(f, "{what} = {value} exceeds the limit {limit}")
            }
            Error::Topology(msg) => write!(f, "invalid mesh topology: {msg}"),
            Error::DegenerateGeometry { sqrt_g } => {
                write!(f, "degenerate surface chart (sqrt_g = {sqrt_g:e})")
            }
            Error::Singularity => {
                write!(f, "evaluation requested exactly at an extraordinary vertex")
            }
            Error::DegenerateStretch { nu3 } => write!(f, "rod stretch collapsed (nu3 = {nu3:e})"),
            Error::Locate { theta, residual } => write!(
                f,
                "could not locate theta = ({}, {}) on the reference surface (residual {residual:e})",
                theta[0], theta[1]
            ),
            Error::Domain(msg) => write!(f, "argument out of domain: {msg}"),
            Error::Dimension { expected, got } => {
                write!(f, "expected {expected} values, got {got}")
            }
            Error::NonFinite(what) => write!(f, "non-finite value in {what}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
