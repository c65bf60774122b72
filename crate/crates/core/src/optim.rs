//! Per-parameter update rules over flat parameter vectors: TDprop, Adam and
//! momentum SGD.
//!
//! All three step in the ascent direction `θ ← θ + α·(…)` with first moments
//! built from `grad_term = δ·∇ŷ`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_l2, Vector};

pub const DEFAULT_CLIP_NORM: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    TdProp,
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 3] = [OptimizerKind::TdProp, OptimizerKind::Adam, OptimizerKind::Sgd];

    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::TdProp => "tdprop",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tdprop" => Ok(OptimizerKind::TdProp),
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::InvalidArg(format!("unknown optimizer '{s}' (expected tdprop, adam or sgd)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    /// Step size; zero freezes the parameters.
    pub alpha: f64,
    #[serde(default)]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Global L2 clip applied to `grad_term` before the moment updates.
    #[serde(default = "default_clip")]
    pub grad_clip_norm: Option<f64>,
    /// Standard Adam bias correction; off reproduces the uncorrected rule.
    #[serde(default)]
    pub bias_correction: bool,
}

fn default_beta2() -> f64 {
    0.99
}

fn default_epsilon() -> f64 {
    1e-8
}

fn default_clip() -> Option<f64> {
    Some(DEFAULT_CLIP_NORM)
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            alpha: 1e-3,
            beta1: 0.0,
            beta2: default_beta2(),
            epsilon: default_epsilon(),
            grad_clip_norm: default_clip(),
            bias_correction: false,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArg(m));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be finite and nonnegative, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return bad(format!("beta1 must lie in [0,1), got {}", self.beta1));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return bad(format!("beta2 must lie in [0,1), got {}", self.beta2));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0) {
                return bad(format!("grad_clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub g: Vector,
    /// Second moment; `None` for SGD.
    pub z: Option<Vector>,
    pub t: u64,
    pub hp: Hyperparams,
}

impl OptimizerState {
    /// Fresh state: `g = 0`, `z = 1` for TDprop, `z = 0` for Adam.
    pub fn new(kind: OptimizerKind, hp: Hyperparams, n_params: usize) -> Result<Self> {
        hp.validate()?;
        let z = match kind {
            OptimizerKind::TdProp => Some(vec![1.0; n_params]),
            OptimizerKind::Adam => Some(vec![0.0; n_params]),
            OptimizerKind::Sgd => None,
        };
        Ok(Self { kind, g: vec![0.0; n_params], z, t: 0, hp })
    }

    pub fn n_params(&self) -> usize {
        self.g.len()
    }

    pub fn z_range(&self) -> Option<(f64, f64)> {
        self.z.as_ref().map(|z| {
            z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("optimizer state always serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let st: Self = serde_json::from_str(s)?;
        st.hp.validate()?;
        if let Some(z) = &st.z {
            if z.len() != st.g.len() {
                return Err(Error::DimMismatch { expected: st.g.len(), actual: z.len() });
            }
        }
        Ok(st)
    }

    fn check(&self, kind: OptimizerKind, theta: &[f64], vs: &[&[f64]]) -> Result<()> {
        if self.kind != kind {
            return Err(Error::InvalidArg(format!("{} update on {} state", kind, self.kind)));
        }
        let n = self.n_params();
        for v in std::iter::once(&theta).chain(vs) {
            if v.len() != n {
                return Err(Error::DimMismatch { expected: n, actual: v.len() });
            }
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("theta"));
        }
        if vs.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFiniteInput("update input"));
        }
        Ok(())
    }

    fn clipped(&self, grad_term: &[f64]) -> Vector {
        let mut g = grad_term.to_vec();
        if let Some(c) = self.hp.grad_clip_norm {
            let norm = norm_l2(&g);
            if norm > c {
                g.iter_mut().for_each(|x| *x *= c / norm);
            }
        }
        g
    }

    fn update_first_moment(&mut self, grad_term: &[f64]) {
        let b1 = self.hp.beta1;
        let gt = self.clipped(grad_term);
        self.g.iter_mut().zip(&gt).for_each(|(g, x)| *g = b1 * *g + (1.0 - b1) * x);
    }

    fn update_second_moment(&mut self, sample: &[f64]) {
        let b2 = self.hp.beta2;
        let z = self.z.as_mut().expect("adaptive state carries a second moment");
        z.iter_mut().zip(sample).for_each(|(z, s)| *z = b2 * *z + (1.0 - b2) * s * s);
    }

    /// `θ + α · ĝ ⊘ (√ẑ + ε)`.
    fn adaptive_step(&self, theta: &[f64]) -> Vector {
        let z = self.z.as_ref().expect("adaptive state carries a second moment");
        let (c1, c2) = if self.hp.bias_correction && self.kind == OptimizerKind::Adam {
            let t = self.t as i32;
            (1.0 - self.hp.beta1.powi(t), 1.0 - self.hp.beta2.powi(t))
        } else {
            (1.0, 1.0)
        };
        theta
            .iter()
            .zip(&self.g)
            .zip(z)
            .map(|((th, g), z)| th + self.hp.alpha * (g / c1) / ((z / c2).sqrt() + self.hp.epsilon))
            .collect()
    }
}

/// TDprop: second moment tracks the squared per-parameter statistic.
pub fn tdprop_update(state: &mut OptimizerState, theta: &[f64], grad_term: &[f64], stat: &[f64]) -> Result<Vector> {
    state.check(OptimizerKind::TdProp, theta, &[grad_term, stat])?;
    state.t += 1;
    state.update_first_moment(grad_term);
    state.update_second_moment(stat);
    Ok(state.adaptive_step(theta))
}

/// Adam without bias correction unless `hp.bias_correction` is set.
pub fn adam_update(state: &mut OptimizerState, theta: &[f64], grad_term: &[f64]) -> Result<Vector> {
    state.check(OptimizerKind::Adam, theta, &[grad_term])?;
    state.t += 1;
    // The second moment sees the same (clipped) signal as the first.
    let gt = state.clipped(grad_term);
    state.update_first_moment(grad_term);
    state.update_second_moment(&gt);
    Ok(state.adaptive_step(theta))
}

/// Momentum SGD `g ← β₁g + (1−β₁)·grad_term`, `θ ← θ + α·g`.
pub fn sgd_update(state: &mut OptimizerState, theta: &[f64], grad_term: &[f64]) -> Result<Vector> {
    state.check(OptimizerKind::Sgd, theta, &[grad_term])?;
    state.t += 1;
    state.update_first_moment(grad_term);
    Ok(theta.iter().zip(&state.g).map(|(th, g)| th + state.hp.alpha * g).collect())
}

/// Dispatches on `state.kind`; `stat` is only read by TDprop.
pub fn step(state: &mut OptimizerState, theta: &[f64], grad_term: &[f64], stat: &[f64]) -> Result<Vector> {
    match state.kind {
        OptimizerKind::TdProp => tdprop_update(state, theta, grad_term, stat),
        OptimizerKind::Adam => adam_update(state, theta, grad_term),
        OptimizerKind::Sgd => sgd_update(state, theta, grad_term),
    }
}
