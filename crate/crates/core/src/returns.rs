//! Truncated λ-returns, TD errors and the per-parameter TDprop statistic on
//! a single trajectory segment.

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// `n` consecutive transitions with value estimates and their gradients at
/// all `n + 1` visited states.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySegment {
    /// `r_t … r_{t+n−1}`.
    pub rewards: Vec<f64>,
    /// `ŷ_t … ŷ_{t+n}`.
    pub values: Vec<f64>,
    /// `∇ŷ_t … ∇ŷ_{t+n}`.
    pub value_grads: Vec<Vector>,
    pub gamma: f64,
    pub lambda: f64,
    /// The last state is terminal: its value and gradient count as zero.
    pub bootstrap_terminal: bool,
}

impl TrajectorySegment {
    pub fn new(
        rewards: Vec<f64>,
        values: Vec<f64>,
        value_grads: Vec<Vector>,
        gamma: f64,
        lambda: f64,
        bootstrap_terminal: bool,
    ) -> Result<Self> {
        let n = rewards.len();
        if n == 0 {
            return Err(Error::InvalidArg("segment needs at least one reward".into()));
        }
        if values.len() != n + 1 {
            return Err(Error::DimMismatch { expected: n + 1, actual: values.len() });
        }
        if value_grads.len() != n + 1 {
            return Err(Error::DimMismatch { expected: n + 1, actual: value_grads.len() });
        }
        let d = value_grads[0].len();
        if let Some(g) = value_grads.iter().find(|g| g.len() != d) {
            return Err(Error::DimMismatch { expected: d, actual: g.len() });
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidArg(format!("gamma must lie in (0,1], got {gamma}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::InvalidArg(format!("lambda must lie in [0,1], got {lambda}")));
        }
        if rewards.iter().chain(&values).chain(value_grads.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("trajectory segment"));
        }
        Ok(Self { rewards, values, value_grads, gamma, lambda, bootstrap_terminal })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.value_grads[0].len()
    }

    fn value(&self, k: usize) -> f64 {
        if k == self.len() && self.bootstrap_terminal {
            0.0
        } else {
            self.values[k]
        }
    }

    fn grad(&self, k: usize) -> Option<&[f64]> {
        if k == self.len() && self.bootstrap_terminal {
            None
        } else {
            Some(&self.value_grads[k])
        }
    }
}

/// `δ_{t+k} = r_{t+k} + γ ŷ_{t+k+1} − ŷ_{t+k}`.
pub fn one_step_delta(seg: &TrajectorySegment, k: usize) -> Result<f64> {
    if k >= seg.len() {
        return Err(Error::IndexOutOfRange { index: k, len: seg.len() });
    }
    Ok(seg.rewards[k] + seg.gamma * seg.value(k + 1) - seg.value(k))
}

/// `ŷ_t + Σ_{k=1}^{n} (γλ)^{k−1} δ_{t+k−1}`.
pub fn lambda_return(seg: &TrajectorySegment) -> f64 {
    seg.values[0] + multi_step_error(seg)
}

/// `δ^λ = G^λ − ŷ_t`, summed directly rather than by subtraction.
pub fn multi_step_error(seg: &TrajectorySegment) -> f64 {
    let gl = seg.gamma * seg.lambda;
    let mut w = 1.0;
    let mut acc = 0.0;
    for k in 0..seg.len() {
        acc += w * (seg.rewards[k] + seg.gamma * seg.value(k + 1) - seg.value(k));
        w *= gl;
    }
    acc
}

/// `∇δ^λ = Σ_{k=1}^{n} (γλ)^{k−1} (γ ∇ŷ_{t+k} − ∇ŷ_{t+k−1})`.
pub fn grad_error(seg: &TrajectorySegment) -> Vector {
    let gl = seg.gamma * seg.lambda;
    let mut out = vec![0.0; seg.n_params()];
    let mut w = 1.0;
    for k in 1..=seg.len() {
        if let Some(next) = seg.grad(k) {
            out.iter_mut().zip(next).for_each(|(o, g)| *o += w * seg.gamma * g);
        }
        out.iter_mut().zip(&seg.value_grads[k - 1]).for_each(|(o, g)| *o -= w * g);
        w *= gl;
    }
    out
}

/// Per-sample `−∇δ^λ ⊙ ∇ŷ_t`.
pub fn tdprop_statistic(seg: &TrajectorySegment) -> Vector {
    grad_error(seg).iter().zip(&seg.value_grads[0]).map(|(d, g)| -d * g).collect()
}

/// The same statistic regrouped by state:
/// `∇ŷ_t⊙∇ŷ_t − λ^{n−1}γⁿ ∇ŷ_{t+n}⊙∇ŷ_t + Σ_{k=1}^{n−1} (γλ)^{k−1}(γλ−γ) ∇ŷ_{t+k}⊙∇ŷ_t`.
pub fn expanded_statistic(seg: &TrajectorySegment) -> Vector {
    let n = seg.len();
    let (g, l) = (seg.gamma, seg.lambda);
    let g0 = &seg.value_grads[0];
    let mut out: Vector = g0.iter().map(|x| x * x).collect();
    if let Some(last) = seg.grad(n) {
        let c = l.powi(n as i32 - 1) * g.powi(n as i32);
        out.iter_mut().zip(last).zip(g0).for_each(|((o, a), b)| *o -= c * a * b);
    }
    for k in 1..n {
        let c = (g * l).powi(k as i32 - 1) * (g * l - g);
        out.iter_mut().zip(&seg.value_grads[k]).zip(g0).for_each(|((o, a), b)| *o += c * a * b);
    }
    out
}
