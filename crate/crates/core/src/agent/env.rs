//! Small episodic control problems with a fully known model.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::rng::{self, Rng};

pub const DEFAULT_MAX_EPISODE_STEPS: usize = 500;

/// Environment description; cheap to clone, so each actor builds its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    /// Start in the top-left corner; actions up, right, down, left; moves into
    /// a wall leave the agent in place. Entering `goal` pays `goal_reward` and
    /// ends the episode, every other step pays `step_reward`.
    Gridworld { width: usize, height: usize, goal: (usize, usize), step_reward: f64, goal_reward: f64 },
    /// `n_states` cells whose two ends are terminal; start in the middle.
    /// Actions left and right are reversed with probability `slip`. Reaching
    /// the right end pays 1, everything else 0.
    WindyChain { n_states: usize, slip: f64 },
}

impl EnvSpec {
    pub fn gridworld(width: usize, height: usize) -> Self {
        EnvSpec::Gridworld { width, height, goal: (width - 1, height - 1), step_reward: -0.01, goal_reward: 1.0 }
    }

    pub fn chain(n_states: usize, slip: f64) -> Self {
        EnvSpec::WindyChain { n_states, slip }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EnvSpec::Gridworld { width, height, goal, step_reward, goal_reward } => {
                if width * height < 2 {
                    return Err(Error::InvalidArg("gridworld needs at least two cells".into()));
                }
                if goal.0 >= width || goal.1 >= height || goal == (0, 0) {
                    return Err(Error::InvalidArg(format!("goal {goal:?} must be a non-start cell of the grid")));
                }
                if !step_reward.is_finite() || !goal_reward.is_finite() {
                    return Err(Error::NonFiniteInput("gridworld rewards"));
                }
            }
            EnvSpec::WindyChain { n_states, slip } => {
                if n_states < 3 {
                    return Err(Error::InvalidArg("chain needs at least three states".into()));
                }
                if !(0.0..=1.0).contains(&slip) {
                    return Err(Error::InvalidArg(format!("slip must lie in [0,1], got {slip}")));
                }
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        match *self {
            EnvSpec::Gridworld { width, height, .. } => width * height,
            EnvSpec::WindyChain { n_states, .. } => n_states,
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            EnvSpec::Gridworld { .. } => 4,
            EnvSpec::WindyChain { .. } => 2,
        }
    }

    pub fn start_state(&self) -> usize {
        match *self {
            EnvSpec::Gridworld { .. } => 0,
            EnvSpec::WindyChain { n_states, .. } => (n_states - 1) / 2,
        }
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        match *self {
            EnvSpec::Gridworld { width, goal, .. } => s == goal.1 * width + goal.0,
            EnvSpec::WindyChain { n_states, .. } => s == 0 || s == n_states - 1,
        }
    }

    /// Deterministic effect of an action, before any slip.
    fn mv(&self, s: usize, a: usize) -> usize {
        match *self {
            EnvSpec::Gridworld { width, height, .. } => {
                let (x, y) = (s % width, s / width);
                let (x, y) = match a {
                    0 => (x, y.saturating_sub(1)),
                    1 => ((x + 1).min(width - 1), y),
                    2 => (x, (y + 1).min(height - 1)),
                    _ => (x.saturating_sub(1), y),
                };
                y * width + x
            }
            EnvSpec::WindyChain { .. } => {
                if a == 0 {
                    s - 1
                } else {
                    s + 1
                }
            }
        }
    }

    fn reward(&self, next: usize) -> f64 {
        match *self {
            EnvSpec::Gridworld { step_reward, goal_reward, .. } => {
                if self.is_terminal(next) {
                    goal_reward
                } else {
                    step_reward
                }
            }
            EnvSpec::WindyChain { n_states, .. } => {
                if next == n_states - 1 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Outcome distribution of `a` in nonterminal `s`, merged by successor.
    pub fn transitions(&self, s: usize, a: usize) -> Vec<Transition> {
        let outcomes: Vec<(f64, usize)> = match *self {
            EnvSpec::Gridworld { .. } => vec![(1.0, self.mv(s, a))],
            EnvSpec::WindyChain { slip, .. } => vec![(1.0 - slip, self.mv(s, a)), (slip, self.mv(s, 1 - a))],
        };
        let mut out: Vec<Transition> = Vec::new();
        for (p, next) in outcomes.into_iter().filter(|(p, _)| *p > 0.0) {
            match out.iter_mut().find(|t| t.next == next) {
                Some(t) => t.prob += p,
                None => out.push(Transition { prob: p, next, reward: self.reward(next), terminal: self.is_terminal(next) }),
            }
        }
        out
    }

    /// Per-state input vector for function approximators.
    pub fn features(&self, s: usize, map: FeatureMap) -> Vector {
        match map {
            FeatureMap::OneHot => {
                let mut v = vec![0.0; self.n_states()];
                v[s] = 1.0;
                v
            }
            FeatureMap::Coordinates => match *self {
                EnvSpec::Gridworld { width, height, .. } => {
                    let sx = (width.max(2) - 1) as f64;
                    let sy = (height.max(2) - 1) as f64;
                    vec![1.0, (s % width) as f64 / sx, (s / width) as f64 / sy]
                }
                EnvSpec::WindyChain { n_states, .. } => vec![1.0, s as f64 / (n_states - 1) as f64],
            },
        }
    }

    /// Best achievable undiscounted return from the start state, by value
    /// iteration on the known model.
    pub fn optimal_start_value(&self) -> f64 {
        let n = self.n_states();
        let mut v = vec![0.0; n];
        for _ in 0..100_000 {
            let mut delta: f64 = 0.0;
            for s in (0..n).filter(|&s| !self.is_terminal(s)) {
                let best = (0..self.n_actions())
                    .map(|a| {
                        self.transitions(s, a)
                            .iter()
                            .map(|t| t.prob * (t.reward + if t.terminal { 0.0 } else { v[t.next] }))
                            .sum::<f64>()
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < 1e-13 {
                break;
            }
        }
        v[self.start_state()]
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Gridworld { width, height, .. } => write!(f, "gridworld:{width}x{height}"),
            EnvSpec::WindyChain { n_states, slip } => write!(f, "chain:{n_states}:{slip}"),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    /// `gridworld`, `gridworld:WxH`, `chain`, `chain:N` or `chain:N:SLIP`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArg(format!("unknown environment '{s}' (expected gridworld[:WxH] or chain[:N[:SLIP]])"));
        let mut parts = s.split(':');
        let spec = match parts.next() {
            Some("gridworld") => match parts.next() {
                None => EnvSpec::gridworld(5, 5),
                Some(dims) => {
                    let (w, h) = dims.split_once('x').ok_or_else(bad)?;
                    EnvSpec::gridworld(w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?)
                }
            },
            Some("chain") => {
                let n = parts.next().map(|x| x.parse().map_err(|_| bad())).transpose()?.unwrap_or(19);
                let slip = parts.next().map(|x| x.parse().map_err(|_| bad())).transpose()?.unwrap_or(0.1);
                EnvSpec::chain(n, slip)
            }
            _ => return Err(bad()),
        };
        if parts.next().is_some() {
            return Err(bad());
        }
        if let EnvSpec::Gridworld { width, height, .. } = spec {
            if width == 0 || height == 0 {
                return Err(bad());
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMap {
    #[default]
    OneHot,
    /// Bias plus normalised position.
    Coordinates,
}

impl FromStr for FeatureMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "onehot" | "one_hot" => Ok(FeatureMap::OneHot),
            "coords" | "coordinates" => Ok(FeatureMap::Coordinates),
            _ => Err(Error::InvalidArg(format!("unknown feature map '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub prob: f64,
    pub next: usize,
    pub reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub reward: f64,
    pub next_state: usize,
    /// Reached a terminal state or the episode step cap.
    pub done: bool,
}

/// A running episode of an [`EnvSpec`] with its own random stream.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    pub spec: EnvSpec,
    pub state: usize,
    pub max_episode_steps: usize,
    steps: usize,
    rng: Rng,
}

impl ToyEnv {
    pub fn new(spec: EnvSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let state = spec.start_state();
        Ok(Self { spec, state, max_episode_steps: DEFAULT_MAX_EPISODE_STEPS, steps: 0, rng: rng::seeded(seed) })
    }

    pub fn reset(&mut self) -> usize {
        self.state = self.spec.start_state();
        self.steps = 0;
        self.state
    }

    pub fn episode_steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, a: usize) -> StepResult {
        assert!(a < self.spec.n_actions(), "action {a} out of range");
        let ts = self.spec.transitions(self.state, a);
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut chosen = ts[ts.len() - 1];
        for t in &ts {
            acc += t.prob;
            if u < acc {
                chosen = *t;
                break;
            }
        }
        self.state = chosen.next;
        self.steps += 1;
        StepResult { reward: chosen.reward, next_state: chosen.next, done: chosen.terminal || self.steps >= self.max_episode_steps }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gridworld_dynamics() {
        let spec = EnvSpec::gridworld(5, 5);
        let mut env = ToyEnv::new(spec.clone(), 0).unwrap();
        assert_eq!(env.step(0), StepResult { reward: -0.01, next_state: 0, done: false });
        assert_eq!(env.step(3).next_state, 0);
        assert_eq!(env.step(1).next_state, 1);
        assert_eq!(env.step(2).next_state, 6);
        assert!(spec.is_terminal(24));
        let t = spec.transitions(23, 1);
        assert_eq!(t, vec![Transition { prob: 1.0, next: 24, reward: 1.0, terminal: true }]);
        assert!((spec.optimal_start_value() - 0.93).abs() < 1e-12);
    }

    #[test]
    fn episode_cap() {
        let mut env = ToyEnv::new(EnvSpec::gridworld(5, 5), 0).unwrap();
        for _ in 0..499 {
            assert!(!env.step(0).done);
        }
        assert!(env.step(0).done);
    }

    #[test]
    fn chain_dynamics() {
        let spec = EnvSpec::chain(5, 0.0);
        assert_eq!(spec.start_state(), 2);
        let mut env = ToyEnv::new(spec.clone(), 3).unwrap();
        assert_eq!(env.step(1), StepResult { reward: 0.0, next_state: 3, done: false });
        assert_eq!(env.step(1), StepResult { reward: 1.0, next_state: 4, done: true });
        env.reset();
        env.step(0);
        assert_eq!(env.step(0), StepResult { reward: 0.0, next_state: 0, done: true });
        assert_eq!(spec.optimal_start_value(), 1.0);

        let slippery = EnvSpec::chain(5, 0.25);
        let t = slippery.transitions(2, 1);
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].prob + t[1].prob, 1.0);
        let mut env = ToyEnv::new(slippery, 9).unwrap();
        let reversed = (0..20_000)
            .filter(|_| {
                env.reset();
                env.step(1).next_state == 1
            })
            .count();
        assert!((reversed as f64 / 20_000.0 - 0.25).abs() < 0.015);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = |seed| {
            let mut env = ToyEnv::new(EnvSpec::chain(19, 0.3), seed).unwrap();
            (0..200).map(|i| env.step(i % 2).next_state).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
    }

    #[test]
    fn parsing() {
        assert_eq!("gridworld".parse::<EnvSpec>().unwrap(), EnvSpec::gridworld(5, 5));
        assert_eq!("gridworld:2x1".parse::<EnvSpec>().unwrap().n_states(), 2);
        assert_eq!("chain:5:0".parse::<EnvSpec>().unwrap(), EnvSpec::chain(5, 0.0));
        assert_eq!("chain".parse::<EnvSpec>().unwrap(), EnvSpec::chain(19, 0.1));
        assert!("chain:2".parse::<EnvSpec>().is_err());
        assert!("gridworld:1x1".parse::<EnvSpec>().is_err());
        assert!("maze".parse::<EnvSpec>().is_err());
    }

    #[test]
    fn features() {
        let g = EnvSpec::gridworld(5, 5);
        assert_eq!(g.features(7, FeatureMap::Coordinates), vec![1.0, 0.5, 0.25]);
        assert_eq!(g.features(2, FeatureMap::OneHot).iter().sum::<f64>(), 1.0);
    }
}
