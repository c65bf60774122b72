//! Action-value functions over a flat parameter vector with exact gradients.

use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::env::{EnvSpec, FeatureMap};
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QKind {
    Tabular,
    /// `Q(s,a) = w_a · φ(s)`.
    Linear { features: FeatureMap },
    /// One tanh hidden layer and a linear head per action.
    Mlp { features: FeatureMap, hidden: usize },
}

impl FromStr for QKind {
    type Err = Error;

    /// `tabular`, `linear[:FEATURES]` or `mlp[:HIDDEN[:FEATURES]]`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArg(format!("unknown q-function '{s}' (expected tabular, linear[:F] or mlp[:H[:F]])"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["tabular"] => Ok(QKind::Tabular),
            ["linear"] => Ok(QKind::Linear { features: FeatureMap::OneHot }),
            ["linear", f] => Ok(QKind::Linear { features: f.parse()? }),
            ["mlp"] => Ok(QKind::Mlp { features: FeatureMap::Coordinates, hidden: 16 }),
            ["mlp", h] => Ok(QKind::Mlp { features: FeatureMap::Coordinates, hidden: h.parse().map_err(|_| bad())? }),
            ["mlp", h, f] => Ok(QKind::Mlp { features: f.parse()?, hidden: h.parse().map_err(|_| bad())? }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QFunction {
    pub kind: QKind,
    pub n_actions: usize,
    /// φ(s) for every state, precomputed.
    features: Vec<Vector>,
    pub theta: Vector,
}

impl QFunction {
    /// Tabular and linear start at zero; the MLP draws uniform weights scaled
    /// by fan-in, with zero biases.
    pub fn new(kind: QKind, env: &EnvSpec, seed: u64) -> Result<Self> {
        let n_states = env.n_states();
        let n_actions = env.n_actions();
        let features: Vec<Vector> = match kind {
            QKind::Tabular => Vec::new(),
            QKind::Linear { features } | QKind::Mlp { features, .. } => {
                (0..n_states).map(|s| env.features(s, features)).collect()
            }
        };
        let d = features.first().map_or(0, |f| f.len());
        let theta = match kind {
            QKind::Tabular => vec![0.0; n_states * n_actions],
            QKind::Linear { .. } => vec![0.0; n_actions * d],
            QKind::Mlp { hidden, .. } => {
                if hidden == 0 {
                    return Err(Error::InvalidArg("mlp needs at least one hidden unit".into()));
                }
                let mut r = rng::seeded(seed);
                let mut theta = Vec::with_capacity(hidden * d + hidden + n_actions * hidden + n_actions);
                let s1 = 1.0 / (d as f64).sqrt();
                theta.extend((0..hidden * d).map(|_| r.gen_range(-s1..s1)));
                theta.extend(std::iter::repeat(0.0).take(hidden));
                let s2 = 1.0 / (hidden as f64).sqrt();
                theta.extend((0..n_actions * hidden).map(|_| r.gen_range(-s2..s2)));
                theta.extend(std::iter::repeat(0.0).take(n_actions));
                theta
            }
        };
        Ok(Self { kind, n_actions, features, theta })
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn n_states(&self) -> usize {
        match self.kind {
            QKind::Tabular => self.theta.len() / self.n_actions,
            _ => self.features.len(),
        }
    }

    fn input_dim(&self) -> usize {
        self.features.first().map_or(0, |f| f.len())
    }

    pub fn value(&self, s: usize, a: usize) -> f64 {
        match self.kind {
            QKind::Tabular => self.theta[s * self.n_actions + a],
            QKind::Linear { .. } => {
                let d = self.input_dim();
                self.theta[a * d..(a + 1) * d].iter().zip(&self.features[s]).map(|(w, x)| w * x).sum()
            }
            QKind::Mlp { .. } => self.mlp_forward(s, a).0,
        }
    }

    pub fn values(&self, s: usize) -> Vector {
        (0..self.n_actions).map(|a| self.value(s, a)).collect()
    }

    /// `∇_θ Q(s,a)`.
    pub fn grad(&self, s: usize, a: usize) -> Vector {
        match self.kind {
            QKind::Tabular => {
                let mut g = vec![0.0; self.n_params()];
                g[s * self.n_actions + a] = 1.0;
                g
            }
            QKind::Linear { .. } => {
                let d = self.input_dim();
                let mut g = vec![0.0; self.n_params()];
                g[a * d..(a + 1) * d].copy_from_slice(&self.features[s]);
                g
            }
            QKind::Mlp { .. } => self.mlp_value_and_grad(s, a).1,
        }
    }

    fn hidden(&self) -> usize {
        match self.kind {
            QKind::Mlp { hidden, .. } => hidden,
            _ => 0,
        }
    }

    /// Returns `(Q(s,a), hidden activations)`.
    fn mlp_forward(&self, s: usize, a: usize) -> (f64, Vector) {
        let (h, d) = (self.hidden(), self.input_dim());
        let x = &self.features[s];
        let (w1, rest) = self.theta.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(self.n_actions * h);
        let act: Vector = (0..h)
            .map(|j| (b1[j] + w1[j * d..(j + 1) * d].iter().zip(x).map(|(w, x)| w * x).sum::<f64>()).tanh())
            .collect();
        let q = b2[a] + w2[a * h..(a + 1) * h].iter().zip(&act).map(|(w, z)| w * z).sum::<f64>();
        (q, act)
    }

    /// Forward pass and reverse-mode gradient of `Q(s,a)`.
    ///
    /// Parameter layout: `W1` (hidden × input, row-major), `b1`, `W2`
    /// (actions × hidden), `b2`.
    pub fn mlp_value_and_grad(&self, s: usize, a: usize) -> (f64, Vector) {
        assert!(matches!(self.kind, QKind::Mlp { .. }), "mlp_value_and_grad on a non-mlp q-function");
        let (h, d) = (self.hidden(), self.input_dim());
        let (q, act) = self.mlp_forward(s, a);
        let x = &self.features[s];
        let w2 = &self.theta[h * d + h..h * d + h + self.n_actions * h];
        let mut g = vec![0.0; self.n_params()];
        for j in 0..h {
            let dpre = w2[a * h + j] * (1.0 - act[j] * act[j]);
            for (k, xk) in x.iter().enumerate() {
                g[j * d + k] = dpre * xk;
            }
            g[h * d + j] = dpre;
            g[h * d + h + a * h + j] = act[j];
        }
        g[h * d + h + self.n_actions * h + a] = 1.0;
        (q, g)
    }
}
