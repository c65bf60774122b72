//! n-step Expected SARSA on toy control problems.
//!
//! * [`env`]: gridworld and slippery chain with a fully known model.
//! * [`qfunc`]: tabular, linear and one-hidden-layer action values.
//! * [`sarsa`]: rollouts, stored errors, training and the exact
//!   policy-evaluation oracle.

pub mod env;
pub mod qfunc;
pub mod sarsa;

pub use env::{EnvSpec, FeatureMap, ToyEnv};
pub use qfunc::{QFunction, QKind};
pub use sarsa::{
    expected_q, oracle_gap, policy_evaluation, policy_probs, train, Actor, CurveRow, SarsaConfig,
    StoredError, TrainResult,
};
