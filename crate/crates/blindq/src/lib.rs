//! Blind delegated quantum computation at desk scale.
//!
//! A fully classical client compiles a circuit into a measurement pattern,
//! blinds the measurement angles, has the initial states prepared remotely
//! through 8-state trapdoor-function gadgets, delegates the composed circuit
//! to a server running an ideal statevector simulator, and filters and
//! decodes the returned shots.

pub mod angle;
pub mod mbqc;
pub mod protocol;
pub mod qfactory;
pub mod qsim;
pub mod stats;
pub mod ubqc;

pub use angle::Angle8;
