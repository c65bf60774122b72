//! Synchronous n-step Expected SARSA with ε-greedy behaviour.
//!
//! Every actor rolls out up to `n` steps with the shared parameters, stores
//! one λ=1 error per anchor offset, and all stored errors are averaged into a
//! single optimizer update.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::env::{EnvSpec, ToyEnv};
use super::qfunc::QFunction;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, Vector};
use crate::optim::{self, Hyperparams, OptimizerKind, OptimizerState};
use crate::returns::{self, TrajectorySegment};
use crate::rng::{self, Rng};

pub const EVAL_WINDOW: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SarsaConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_epsilon_greedy")]
    pub epsilon_greedy: f64,
    #[serde(default = "default_actors")]
    pub actors: usize,
    /// Environment steps per actor; the run takes `actors × total_steps`
    /// transitions in all.
    pub total_steps: u64,
    pub optimizer: OptimizerKind,
    pub hp: Hyperparams,
    /// Store an error for every anchor offset, not only the first.
    #[serde(default = "default_true")]
    pub all_offsets: bool,
    #[serde(default)]
    pub reward_clip: bool,
    #[serde(default = "default_max_episode_steps")]
    pub max_episode_steps: usize,
    /// A curve row is emitted each time this many per-actor steps elapse.
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_n() -> usize {
    5
}
fn default_gamma() -> f64 {
    0.99
}
fn default_epsilon_greedy() -> f64 {
    0.01
}
fn default_actors() -> usize {
    16
}
fn default_true() -> bool {
    true
}
fn default_max_episode_steps() -> usize {
    super::env::DEFAULT_MAX_EPISODE_STEPS
}
fn default_log_every() -> u64 {
    1000
}

impl SarsaConfig {
    pub fn new(optimizer: OptimizerKind, hp: Hyperparams, total_steps: u64, seed: u64) -> Self {
        Self {
            n: default_n(),
            gamma: default_gamma(),
            epsilon_greedy: default_epsilon_greedy(),
            actors: default_actors(),
            total_steps,
            optimizer,
            hp,
            all_offsets: true,
            reward_clip: false,
            max_episode_steps: default_max_episode_steps(),
            log_every: default_log_every(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArg(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0,1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.epsilon_greedy) {
            return bad(format!("epsilon_greedy must lie in [0,1], got {}", self.epsilon_greedy));
        }
        if self.actors == 0 {
            return bad("actors must be at least 1".into());
        }
        if self.max_episode_steps == 0 || self.log_every == 0 {
            return bad("max_episode_steps and log_every must be positive".into());
        }
        self.hp.validate()
    }
}

/// `π(a|s) = ε/|A| + (1−ε)·1[a = argmax]`, ties to the lowest index.
pub fn policy_probs(q_values: &[f64], epsilon: f64) -> Vector {
    let n = q_values.len();
    let best = argmax(q_values);
    let mut p = vec![epsilon / n as f64; n];
    p[best] += 1.0 - epsilon;
    p
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub fn expected_q(q: &QFunction, s: usize, epsilon: f64) -> f64 {
    let v = q.values(s);
    linalg::dot(&policy_probs(&v, epsilon), &v)
}

/// Gradient of [`expected_q`] with the policy held fixed.
pub fn expected_q_grad(q: &QFunction, s: usize, epsilon: f64) -> Vector {
    let probs = policy_probs(&q.values(s), epsilon);
    let mut g = vec![0.0; q.n_params()];
    for (a, p) in probs.iter().enumerate().filter(|(_, p)| **p > 0.0) {
        g.iter_mut().zip(q.grad(s, a)).for_each(|(g, x)| *g += p * x);
    }
    g
}

/// How the value after the last transition of a path is formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bootstrap {
    Terminal,
    /// `Σ_a π(a|s) Q(s,a)`.
    Expected(usize),
    /// `Q(s,a)` for a given next action.
    Action(usize, usize),
}

/// A run of transitions `(s_k, a_k) → r_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    pub pairs: Vec<(usize, usize)>,
    pub rewards: Vec<f64>,
    pub bootstrap: Bootstrap,
}

/// Segment anchored at `Q(s_i, a_i)` running to the end of the path.
pub fn path_segment(q: &QFunction, path: &ControlPath, i: usize, gamma: f64, lambda: f64, epsilon: f64) -> Result<TrajectorySegment> {
    let mut values: Vec<f64> = path.pairs[i..].iter().map(|&(s, a)| q.value(s, a)).collect();
    let mut grads: Vec<Vector> = path.pairs[i..].iter().map(|&(s, a)| q.grad(s, a)).collect();
    let (v, g, terminal) = match path.bootstrap {
        Bootstrap::Terminal => (0.0, vec![0.0; q.n_params()], true),
        Bootstrap::Expected(s) => (expected_q(q, s, epsilon), expected_q_grad(q, s, epsilon), false),
        Bootstrap::Action(s, a) => (q.value(s, a), q.grad(s, a), false),
    };
    values.push(v);
    grads.push(g);
    TrajectorySegment::new(path.rewards[i..].to_vec(), values, grads, gamma, lambda, terminal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredError {
    pub offset: usize,
    pub horizon: usize,
    /// `δ^{λ=1}` anchored at the offset.
    pub delta: f64,
    /// `δ · ∇Q(s_i, a_i)`.
    pub grad_term: Vector,
    pub stat: Vector,
}

pub fn errors_from_path(q: &QFunction, path: &ControlPath, gamma: f64, epsilon: f64, all_offsets: bool) -> Result<Vec<StoredError>> {
    let m = if all_offsets { path.pairs.len() } else { 1 };
    (0..m)
        .map(|i| {
            let seg = path_segment(q, path, i, gamma, 1.0, epsilon)?;
            let delta = returns::multi_step_error(&seg);
            Ok(StoredError {
                offset: i,
                horizon: seg.len(),
                delta,
                grad_term: seg.value_grads[0].iter().map(|g| delta * g).collect(),
                stat: returns::tdprop_statistic(&seg),
            })
        })
        .collect()
}

/// One rollout stream with its own environment and behaviour randomness.
#[derive(Debug, Clone)]
pub struct Actor {
    pub env: ToyEnv,
    rng: Rng,
    episode_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub path: ControlPath,
    pub errors: Vec<StoredError>,
    /// Undiscounted, unclipped return of an episode that ended in this window.
    pub finished_episode: Option<f64>,
}

impl Actor {
    pub fn new(spec: &EnvSpec, seed: u64, max_episode_steps: usize) -> Result<Self> {
        let mut env = ToyEnv::new(spec.clone(), rng::split(seed, 0))?;
        env.max_episode_steps = max_episode_steps;
        Ok(Self { env, rng: rng::substream(seed, 1), episode_return: 0.0 })
    }

    fn sample_action(&mut self, q: &QFunction, s: usize, epsilon: f64) -> usize {
        let probs = policy_probs(&q.values(s), epsilon);
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (a, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        probs.len() - 1
    }

    /// Advances up to `n` steps (fewer if the episode ends) and computes the
    /// stored errors with the parameters as they were at the window start.
    pub fn rollout_and_errors(&mut self, q: &QFunction, cfg: &SarsaConfig) -> Result<Window> {
        let mut pairs = Vec::with_capacity(cfg.n);
        let mut rewards = Vec::with_capacity(cfg.n);
        let mut s = self.env.state;
        let mut finished_episode = None;
        let mut bootstrap = None;
        for _ in 0..cfg.n {
            let a = self.sample_action(q, s, cfg.epsilon_greedy);
            let res = self.env.step(a);
            pairs.push((s, a));
            self.episode_return += res.reward;
            rewards.push(if cfg.reward_clip { res.reward.clamp(-1.0, 1.0) } else { res.reward });
            s = res.next_state;
            if res.done {
                finished_episode = Some(self.episode_return);
                self.episode_return = 0.0;
                self.env.reset();
                bootstrap = Some(Bootstrap::Terminal);
                break;
            }
        }
        let path = ControlPath { pairs, rewards, bootstrap: bootstrap.unwrap_or(Bootstrap::Expected(s)) };
        let errors = errors_from_path(q, &path, cfg.gamma, cfg.epsilon_greedy, cfg.all_offsets)?;
        Ok(Window { path, errors, finished_episode })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: u64,
    pub episodes_completed: u64,
    pub avg_return_100ep: Option<f64>,
    pub param_norm: f64,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
}

pub fn write_curve_csv<W: std::io::Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["step", "episodes_completed", "avg_return_100ep", "param_norm", "z_min", "z_max"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub curve: Vec<CurveRow>,
    pub episode_returns: Vec<f64>,
    pub q: QFunction,
    pub optimizer: OptimizerState,
    pub steps: u64,
    pub diverged: bool,
    pub divergence: Option<String>,
}

impl TrainResult {
    /// Mean of the sliding-window average over all logged rows.
    pub fn avg_return(&self) -> f64 {
        let xs: Vec<f64> = self.curve.iter().filter_map(|r| r.avg_return_100ep).collect();
        if xs.is_empty() {
            f64::NAN
        } else {
            xs.iter().sum::<f64>() / xs.len() as f64
        }
    }

    /// Mean return of the final evaluation window of episodes.
    pub fn asymptotic_return(&self) -> f64 {
        tail_mean(&self.episode_returns, EVAL_WINDOW).unwrap_or(f64::NAN)
    }

    /// Best sliding-window average seen during training.
    pub fn best_window_return(&self) -> f64 {
        self.curve.iter().filter_map(|r| r.avg_return_100ep).fold(f64::NAN, f64::max)
    }
}

fn tail_mean(xs: &[f64], k: usize) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let tail = &xs[xs.len().saturating_sub(k)..];
    Some(tail.iter().sum::<f64>() / tail.len() as f64)
}

fn curve_row(step: u64, returns: &[f64], q: &QFunction, st: &OptimizerState) -> CurveRow {
    let z = st.z_range();
    CurveRow {
        step,
        episodes_completed: returns.len() as u64,
        avg_return_100ep: tail_mean(returns, EVAL_WINDOW),
        param_norm: linalg::norm_l2(&q.theta),
        z_min: z.map(|z| z.0),
        z_max: z.map(|z| z.1),
    }
}

/// Trains `q` in place of a copy; deterministic in `(env, q, cfg)`.
///
/// A non-finite update stops the run and marks it diverged; the curve keeps
/// every row logged before that point.
pub fn train(env: &EnvSpec, q: &QFunction, cfg: &SarsaConfig) -> Result<TrainResult> {
    cfg.validate()?;
    env.validate()?;
    let mut q = q.clone();
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.hp, q.n_params())?;
    let mut actors: Vec<Actor> = (0..cfg.actors)
        .map(|i| Actor::new(env, rng::split(cfg.seed, 100 + i as u64), cfg.max_episode_steps))
        .collect::<Result<_>>()?;
    let mut returns_seen = Vec::new();
    let mut curve = vec![curve_row(0, &returns_seen, &q, &opt)];
    let budget = cfg.total_steps * cfg.actors as u64;
    let mut frames = 0u64;
    let mut steps = 0u64;
    let mut next_log = cfg.log_every;
    let mut divergence = None;
    let d = q.n_params();

    while frames < budget {
        let mut grad_sum = vec![0.0; d];
        let mut stat_sum = vec![0.0; d];
        let mut count = 0usize;
        for actor in actors.iter_mut() {
            let w = actor.rollout_and_errors(&q, cfg)?;
            frames += w.path.pairs.len() as u64;
            if let Some(r) = w.finished_episode {
                returns_seen.push(r);
            }
            for e in &w.errors {
                grad_sum.iter_mut().zip(&e.grad_term).for_each(|(a, b)| *a += b);
                stat_sum.iter_mut().zip(&e.stat).for_each(|(a, b)| *a += b);
            }
            count += w.errors.len();
        }
        steps = frames / cfg.actors as u64;
        let inv = 1.0 / count as f64;
        grad_sum.iter_mut().for_each(|x| *x *= inv);
        stat_sum.iter_mut().for_each(|x| *x *= inv);
        match optim::step(&mut opt, &q.theta, &grad_sum, &stat_sum) {
            Ok(theta) if theta.iter().all(|x| x.is_finite()) => q.theta = theta,
            Ok(_) => divergence = Some(format!("non-finite parameters after {steps} steps")),
            Err(e) => divergence = Some(format!("update failed after {steps} steps: {e}")),
        }
        if divergence.is_some() {
            break;
        }
        if steps >= next_log || frames >= budget {
            curve.push(curve_row(steps, &returns_seen, &q, &opt));
            while next_log <= steps {
                next_log += cfg.log_every;
            }
        }
    }
    if divergence.is_some() && curve.last().map(|r| r.step) != Some(steps) {
        curve.push(curve_row(steps, &returns_seen, &q, &opt));
    }
    Ok(TrainResult {
        curve,
        episode_returns: returns_seen,
        q,
        optimizer: opt,
        steps,
        diverged: divergence.is_some(),
        divergence,
    })
}

/// Exact `Q^π` of the ε-greedy policy induced by `q`, from the known model.
/// Terminal states have all-zero rows.
pub fn policy_evaluation(env: &EnvSpec, q: &QFunction, epsilon: f64, gamma: f64) -> Result<Vec<Vector>> {
    let (ns, na) = (env.n_states(), env.n_actions());
    let live: Vec<usize> = (0..ns).filter(|&s| !env.is_terminal(s)).collect();
    let mut index = vec![usize::MAX; ns];
    for (k, &s) in live.iter().enumerate() {
        index[s] = k;
    }
    let probs: Vec<Vector> = (0..ns).map(|s| policy_probs(&q.values(s), epsilon)).collect();
    let m = live.len() * na;
    let mut a_mat = Matrix::identity(m);
    let mut b = vec![0.0; m];
    for &s in &live {
        for a in 0..na {
            let row = index[s] * na + a;
            for t in env.transitions(s, a) {
                b[row] += t.prob * t.reward;
                if !t.terminal {
                    for (a2, p2) in probs[t.next].iter().enumerate() {
                        a_mat[(row, index[t.next] * na + a2)] -= gamma * t.prob * p2;
                    }
                }
            }
        }
    }
    let sol = linalg::solve_linear(&a_mat, &b)?;
    Ok((0..ns)
        .map(|s| if env.is_terminal(s) { vec![0.0; na] } else { sol[index[s] * na..(index[s] + 1) * na].to_vec() })
        .collect())
}

/// Largest gap between `q` and the exact action values of its own ε-greedy
/// policy, over nonterminal states.
pub fn oracle_gap(env: &EnvSpec, q: &QFunction, epsilon: f64, gamma: f64) -> Result<f64> {
    let exact = policy_evaluation(env, q, epsilon, gamma)?;
    let mut gap: f64 = 0.0;
    for s in (0..env.n_states()).filter(|&s| !env.is_terminal(s)) {
        for (a, v) in exact[s].iter().enumerate() {
            gap = gap.max((q.value(s, a) - v).abs());
        }
    }
    Ok(gap)
}
