//! Simulation toolkit for counterfactual entanglement in separable states.
//!
//! The library shows, by exact computation and seeded Monte Carlo sampling,
//! that measurement records taken on two particles in a separable (or even
//! factorable) mixed state can later be partitioned, keyed on the outcome of a
//! measurement on a disentangled ancilla, into subensembles that display
//! entangled-state statistics and maximal CHSH violation. A consistent-histories
//! checker certifies the associated retrodictive claim.
//!
//! Layers, bottom up:
//!
//! * [`qcore`]: dense complex linear algebra for up to six qubits: state
//!   vectors, density matrices, tensor products, partial traces, spin and Bell
//!   projectors.
//! * [`born`]: Born-rule engine: exact outcome probabilities, collapse,
//!   sequential measurement, seeded per-trial sampling streams.
//! * [`protocols`]: the two end-to-end scenarios (GHZ ancilla and factorable
//!   two-ancilla), record partitioning, correlator estimation, CHSH evaluation
//!   and angle scans, and the Bayesian pre/post-selection equivalence check.
//! * [`histories`]: decoherence-functional consistency conditions and chain
//!   probabilities for the counterfactual certificate.
//! * [`cli`]: command-line front end with JSONL record logs and JSON reports.

pub mod born;
pub mod cli;
pub mod histories;
pub mod protocols;
pub mod qcore;

use thiserror::Error as ThisError;

/// Crate-wide error type.
#[derive(Debug, ThisError)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid operator: {0}")]
    InvalidOperator(String),
    #[error("invalid projector family: {0}")]
    InvalidFamily(String),
    #[error("particle index {particle} out of range for {num_qubits} qubits")]
    ParticleOutOfRange { particle: usize, num_qubits: usize },
    #[error("empty particle set")]
    EmptyParticleSet,
    #[error("zero-probability outcome at index {0}")]
    ZeroProbability(usize),
    #[error("invalid measurement direction: {0}")]
    InvalidDirection(String),
    #[error("inconsistent history chain: defect {0:.3e} exceeds tolerance")]
    InconsistentChain(f64),
    #[error("vanishing denominator Tr(D F)")]
    VanishingDenominator,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed record at line {line}: {msg}")]
    MalformedRecord { line: usize, msg: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
