//! Tabular Markov reward processes (policy already folded in) and their exact
//! solution `v* = (I − γP)⁻¹ r`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::rng;

const ROW_SUM_TOL: f64 = 1e-12;
const SINKHORN_MAX_SWEEPS: usize = 10_000;

/// A Markov reward process `(P, r, γ)`.
///
/// Serialises as `{"gamma": γ, "r": [..], "p": [[..], ..]}`; `serde_json`
/// writes shortest round-trip representations, so values survive exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpJson", into = "MdpJson")]
pub struct Mdp {
    p: Matrix,
    r: Vector,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct MdpJson {
    gamma: f64,
    r: Vec<f64>,
    p: Vec<Vec<f64>>,
}

impl TryFrom<MdpJson> for Mdp {
    type Error = Error;

    fn try_from(j: MdpJson) -> Result<Self> {
        Mdp::new(Matrix::from_rows(&j.p)?, j.r, j.gamma)
    }
}

impl From<Mdp> for MdpJson {
    fn from(m: Mdp) -> Self {
        MdpJson { gamma: m.gamma, r: m.r, p: m.p.to_rows() }
    }
}

impl Mdp {
    /// Validates row-stochasticity of `p`, `γ ∈ (0,1)` and finiteness of `r`.
    pub fn new(p: Matrix, r: Vector, gamma: f64) -> Result<Self> {
        let n = p.rows();
        if !p.is_square() {
            return Err(Error::NotSquare { rows: p.rows(), cols: p.cols() });
        }
        if r.len() != n {
            return Err(Error::DimMismatch { expected: n, actual: r.len() });
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArg(format!("gamma must lie in (0,1), got {gamma}")));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("reward vector"));
        }
        for i in 0..n {
            let row = p.row(i);
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidArg(format!("row {i} of P has an entry outside [0,1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidArg(format!("row {i} of P sums to {s}")));
            }
        }
        Ok(Self { p, r, gamma })
    }

    pub fn p(&self) -> &Matrix {
        &self.p
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_states(&self) -> usize {
        self.r.len()
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(self.p.clone(), self.r.clone(), gamma)
    }

    pub fn with_rewards(&self, r: Vector) -> Result<Self> {
        Self::new(self.p.clone(), r, self.gamma)
    }

    /// `H = I − γP`.
    pub fn system_matrix(&self) -> Matrix {
        Matrix::identity(self.n_states()).sub(&self.p.scale(self.gamma))
    }

    /// `‖r + (γP − I)v‖∞`.
    pub fn bellman_residual(&self, v: &[f64]) -> f64 {
        let pv = self.p.matvec(v);
        (0..self.n_states())
            .map(|i| (self.r[i] + self.gamma * pv[i] - v[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("Mdp serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Solution of the Bellman equation with its ∞-norm residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub v_star: Vector,
    pub residual: f64,
}

/// Solves `(I − γP)v = r` directly.
pub fn exact_value(m: &Mdp) -> Result<ExactSolution> {
    let v_star = linalg::solve_linear(&m.system_matrix(), &m.r)?;
    let residual = m.bellman_residual(&v_star);
    Ok(ExactSolution { v_star, residual })
}

/// Random MRP: each row picks `branching` distinct successors uniformly and
/// weights them with normalised unit-exponential draws (a flat Dirichlet);
/// rewards are uniform in `[0,1)`.
pub fn random_mdp(seed: u64, n_states: usize, branching: usize, gamma: f64) -> Result<Mdp> {
    if n_states < 2 {
        return Err(Error::InvalidArg(format!("n_states must be at least 2, got {n_states}")));
    }
    if branching == 0 || branching > n_states {
        return Err(Error::InvalidArg(format!("branching must lie in 1..={n_states}, got {branching}")));
    }
    let mut rng = rng::seeded(seed);
    let mut p = Matrix::zeros(n_states, n_states);
    for i in 0..n_states {
        let succ = sample(&mut rng, n_states, branching);
        let w: Vec<f64> = (0..branching).map(|_| -(1.0 - rng.gen::<f64>()).ln() + f64::MIN_POSITIVE).collect();
        let total: f64 = w.iter().sum();
        for (j, wj) in succ.iter().zip(&w) {
            p[(i, j)] = wj / total;
        }
        fix_row_sum(p.row_mut(i));
    }
    let r = (0..n_states).map(|_| rng.gen::<f64>()).collect();
    Mdp::new(p, r, gamma)
}

/// Random MRP with a symmetric, doubly stochastic transition matrix, so that
/// `I − γP` is symmetric positive definite.
///
/// A random positive matrix is symmetrised, Sinkhorn-balanced until rows and
/// columns sum to one within `1e-12`, then symmetrised again.
pub fn symmetric_mdp(seed: u64, n_states: usize, gamma: f64) -> Result<Mdp> {
    if n_states < 2 {
        return Err(Error::InvalidArg(format!("n_states must be at least 2, got {n_states}")));
    }
    let mut rng = rng::seeded(seed);
    let mut a = Matrix::zeros(n_states, n_states);
    for i in 0..n_states {
        for j in 0..=i {
            let v = 1e-3 + rng.gen::<f64>();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let n = n_states;
    let mut balanced = false;
    for _ in 0..SINKHORN_MAX_SWEEPS {
        for i in 0..n {
            let s: f64 = a.row(i).iter().sum();
            a.row_mut(i).iter_mut().for_each(|x| *x /= s);
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| a[(i, j)]).sum();
            for i in 0..n {
                a[(i, j)] /= s;
            }
        }
        let worst_row = (0..n).map(|i| (a.row(i).iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
        if worst_row <= 0.25 * ROW_SUM_TOL {
            balanced = true;
            break;
        }
    }
    if !balanced {
        return Err(Error::NoConvergence { iterations: SINKHORN_MAX_SWEEPS, last_estimate: f64::NAN });
    }
    let mut p = a.add(&a.transpose()).scale(0.5);
    for i in 0..n {
        for j in 0..i {
            p[(j, i)] = p[(i, j)];
        }
    }
    let r = (0..n).map(|_| rng.gen::<f64>()).collect();
    Mdp::new(p, r, gamma)
}

/// Birth-death chain with absorbing ends. Interior states move left with
/// probability `p_left`, right with `p_right` and stay otherwise; the
/// transition into the right terminal pays 1.
pub fn chain_mdp(n_states: usize, p_left: f64, p_right: f64, gamma: f64) -> Result<Mdp> {
    if n_states < 3 {
        return Err(Error::InvalidArg(format!("chain needs at least 3 states, got {n_states}")));
    }
    if p_left < 0.0 || p_right < 0.0 || p_left + p_right > 1.0 {
        return Err(Error::InvalidArg(format!("invalid move probabilities ({p_left}, {p_right})")));
    }
    let n = n_states;
    let mut p = Matrix::zeros(n, n);
    let mut r = vec![0.0; n];
    p[(0, 0)] = 1.0;
    p[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        p[(i, i - 1)] = p_left;
        p[(i, i + 1)] = p_right;
        p[(i, i)] = 1.0 - p_left - p_right;
    }
    r[n - 2] = p_right;
    Mdp::new(p, r, gamma)
}

/// Pushes the rounding residue of a probability row onto its largest entry.
fn fix_row_sum(row: &mut [f64]) {
    let s: f64 = row.iter().sum();
    if let Some(k) = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])) {
        row[k] += 1.0 - s;
    }
}
