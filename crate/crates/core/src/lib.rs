//! Jacobi-preconditioned temporal-difference learning, end to end.
//!
//! * [`linalg`]: dense solves and eigenvalue routines.
//! * [`mdp`]: tabular Markov reward processes and their exact solutions.
//! * [`precond`]: TD iteration matrices, regular splittings and the spectral
//!   comparison between plain and Jacobi-preconditioned updates.
//! * [`solver`]: the preconditioned fixed-point iteration and its measured rate.
//! * [`returns`]: truncated λ-returns, TD errors and the TDprop statistic.
//! * [`optim`]: TDprop, Adam and SGD update rules.
//! * [`agent`]: synchronous n-step Expected SARSA on toy environments.
//! * [`sweep`]: random hyperparameter search and its statistical analysis.

pub mod agent;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod optim;
pub mod precond;
pub mod returns;
pub mod rng;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
