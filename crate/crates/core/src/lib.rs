//! Identification of sparsely interconnected dynamical systems with ADMM.
//!
//! The network `u(k) = Γ y(k) + B u₀(k)`, `y₀(k) = C y(k)` is reduced to
//! `minimize Σ‖Tᵢ(θᵢ) zᵢ‖² s.t. z = A x + b, θ = E θ₀`, where `x` collects
//! the unmeasured outputs, and solved by alternating minimization of the
//! augmented Lagrangian. See [`admm`] for the centralized solver and
//! [`distributed`] for the coordinator/worker execution of the same
//! iteration.

pub mod admm;
pub mod banded;
pub mod config;
pub mod dataset;
pub mod distributed;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod models;
pub mod oracle;
pub mod problem;
pub mod signal;
pub mod simulate;
pub mod sparse;
pub mod topology;
pub mod verify;

pub use error::{NetidError, Result};
pub use exec::Execution;
