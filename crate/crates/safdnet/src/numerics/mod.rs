//! Tensor storage, the real FFT pair, reverse-mode differentiation, and
//! the finite-difference gradient checker.

pub mod fft;
pub mod gradcheck;
pub mod graph;
pub mod scalar;
pub mod tensor;

pub use fft::ComplexSpectrum;
pub use gradcheck::{gradcheck, GradCheckReport, GradEval};
pub use graph::{Gradients, Graph, NodeId};
pub use scalar::Scalar;
pub use tensor::Tensor;

#[derive(Debug, Clone)]
pub enum NumericsError {
    InvalidLength {
        what: &'static str,
        len: usize,
        expected: String,
    },
    InvalidEps(f64),
    NonFiniteLoss {
        context: String,
    },
    MissingGradients(String),
}

impl std::fmt::Display for NumericsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NumericsError::InvalidLength {
                what,
                len,
                expected,
            } => write!(f, "{} has invalid length {} (expected {})", what, len, expected),
            NumericsError::InvalidEps(eps) => {
                write!(f, "gradcheck eps {} outside [1e-7, 1e-3]", eps)
            }
            NumericsError::NonFiniteLoss { context } => {
                write!(f, "non-finite loss during {}", context)
            }
            NumericsError::MissingGradients(what) => {
                write!(f, "evaluation returned no gradients for {}", what)
            }
        }
    }
}

impl std::error::Error for NumericsError {}
