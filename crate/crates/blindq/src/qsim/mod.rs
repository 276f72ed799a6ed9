//! Ideal statevector simulation backend.
//!
//! Two execution paths share one circuit representation:
//!
//! * [`dense`] — exact full-vector simulation, branch enumeration and
//!   amplitude extraction; the verification oracle.
//! * [`factored`] — per-shot sampling over a lazily-tensored product of
//!   small registers; the server's production path for large shot counts.

mod circuit;
pub mod dense;
pub mod factored;

pub use circuit::{Circuit, Gate, Instruction};
pub use dense::{enumerate_branches, fidelity, run_unitary, Branch, Statevector};
pub use factored::run_shots;

use thiserror::Error;

/// Hard resource guards for the desk-scale simulator.
pub const MAX_QUBITS: usize = 24;
pub const MAX_MEASURED_FOR_ENUMERATION: usize = 16;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("qubit index {index} out of range for {num_qubits} qubits")]
    QubitOutOfRange { index: usize, num_qubits: usize },
    #[error("clbit index {index} out of range for {num_clbits} clbits")]
    ClbitOutOfRange { index: usize, num_clbits: usize },
    #[error("gate {gate} expects {expected} qubit operands, got {got}")]
    BadArity {
        gate: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("duplicate qubit operand in multi-qubit gate")]
    DuplicateOperand,
    #[error("measure instruction passed to the unitary path")]
    MeasureOnUnitaryPath,
    #[error("circuit has no measured clbits")]
    NoMeasurements,
    #[error("too many qubits: {0} (limit {MAX_QUBITS})")]
    TooManyQubits(usize),
    #[error("too many measured qubits for branch enumeration: {0} (limit {MAX_MEASURED_FOR_ENUMERATION})")]
    TooManyMeasured(usize),
    #[error("statevector dimension mismatch: {0} vs {1} qubits")]
    DimensionMismatch(usize, usize),
    #[error("branch {bits}: measured qubits are not in a definite computational state")]
    NonFactorizableResidual { bits: String },
    #[error("invalid circuit JSON: {0}")]
    BadJson(String),
}
