//! Classical simulation of quantum circuits on complex RBM quantum states.
//!
//! A wave function over N qubits is parameterized by a restricted Boltzmann
//! machine with complex weights ([`rbm::RbmState`]). Diagonal and Pauli gates
//! map to closed-form parameter updates ([`gates`]); Hadamard gates have no
//! such rule and are applied approximately by stochastic minimization of a
//! log-overlap loss ([`learner`]). Markov-chain sampling from |Psi|^2 drives
//! both the gate learner and variational ground-state search ([`sampler`],
//! [`groundstate`]). Everything is checked against a dense statevector
//! backend where that is still tractable ([`oracle`]).

pub mod error;
pub mod math;
pub mod rng;

pub mod rbm;
pub mod circuit;
pub mod sampler;

pub mod gates;
pub mod oracle;

pub mod groundstate;
pub mod io;
pub mod learner;

pub use error::{NqsError, Result};
