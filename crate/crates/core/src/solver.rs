//! Deterministic preconditioned value iteration `v ← v − α B⁻¹(H v − r_eff)`
//! and measurement of its empirical contraction rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Vector};
use crate::precond::{exact_solution, SplitKind, Splitting, TdSystem};

/// Error level above which a run is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;
/// Errors at or below this are treated as the floating-point floor.
pub const ERROR_FLOOR: f64 = 1e-13;
pub const DEFAULT_BURN_IN: usize = 50;
/// Minimum number of post-burn-in iterations for a rate estimate.
pub const MIN_RATE_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    /// `‖v_t − v*‖∞` for t = 0, 1, ….
    pub errors: Vec<f64>,
    pub alpha: f64,
    pub splitting_kind: SplitKind,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveTrace {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "error_inf_norm"])?;
        for (t, e) in self.errors.iter().enumerate() {
            w.write_record([t.to_string(), e.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn iterate(sys: &TdSystem, s: &Splitting, alpha: f64, v0: &[f64], max_iters: usize, tol: f64) -> Result<SolveTrace> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidArg(format!("alpha must be positive, got {alpha}")));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidArg(format!("tolerance must be nonnegative, got {tol}")));
    }
    let n = sys.n_states();
    if v0.len() != n {
        return Err(Error::DimMismatch { expected: n, actual: v0.len() });
    }
    if s.b.rows() != n {
        return Err(Error::DimMismatch { expected: n, actual: s.b.rows() });
    }
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("v0"));
    }
    let v_star = exact_solution(sys)?;
    let h = s.h();
    let err = |v: &[f64]| v.iter().zip(&v_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let mut v: Vector = v0.to_vec();
    let mut errors = vec![err(&v)];
    let mut iterations = 0;
    while errors[iterations] > tol && iterations < max_iters {
        let residual: Vector = h.matvec(&v).iter().zip(&sys.r_eff).map(|(hv, r)| hv - r).collect();
        let step = s.apply_b_inv(&residual)?;
        v.iter_mut().zip(&step).for_each(|(x, d)| *x -= alpha * d);
        iterations += 1;
        let e = err(&v);
        if !(e <= DIVERGENCE_THRESHOLD) {
            return Err(Error::Diverged { iteration: iterations, error: e });
        }
        errors.push(e);
    }
    let converged = errors[iterations] <= tol;
    Ok(SolveTrace { errors, alpha, splitting_kind: s.kind, iterations, converged })
}

/// Geometric-mean contraction `(e_T / e_b)^{1/(T−b)}` after `burn_in`, where
/// `T` is the last iteration before the errors reach the floating-point floor.
pub fn empirical_rate(trace: &SolveTrace, burn_in: usize) -> Result<f64> {
    let above = trace.errors.iter().take_while(|&&e| e > ERROR_FLOOR).count();
    if above < burn_in + MIN_RATE_WINDOW + 1 {
        return Err(Error::InsufficientData(format!(
            "{above} iterations above the error floor, need {}",
            burn_in + MIN_RATE_WINDOW + 1
        )));
    }
    let last = above - 1;
    Ok((trace.errors[last] / trace.errors[burn_in]).powf(1.0 / (last - burn_in) as f64))
}

/// Iterations needed to reach `tol`, if reached.
pub fn iterations_to_tol(trace: &SolveTrace, tol: f64) -> Option<usize> {
    trace.errors.iter().position(|&e| e <= tol)
}

/// Largest-magnitude error, for reporting.
pub fn peak_error(trace: &SolveTrace) -> f64 {
    norm_inf(&trace.errors)
}
