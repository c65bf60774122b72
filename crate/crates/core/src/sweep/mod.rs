//! Random hyperparameter search and the analysis of its results.
//!
//! * [`sample_configs`] draws optimizer settings uniformly from fixed ranges.
//! * [`run_sweep`] trains every configuration and collects [`SweepRecord`]s.
//! * [`analyze_records`] normalises returns, selects the top percentile and
//!   reports bootstrap intervals, pairwise Welch tests and OLS fits.

pub mod ols;
pub mod stats;

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{self, CurveRow, EnvSpec, QFunction, QKind, SarsaConfig};
use crate::error::{Error, Result};
use crate::optim::{Hyperparams, OptimizerKind};
use crate::rng;

pub use ols::{ols_regression, OlsFit};
pub use stats::{annotate_p, bootstrap_ci, welch_t_test, Interval, WelchResult};

/// How the printed range bounds are turned into numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeReading {
    /// `10e-8` means 10·10⁻⁸ = 1e-7.
    #[default]
    Literal,
    /// `10e-8` is taken to mean 1e-8.
    Intended,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KindRanges {
    pub lr: (f64, f64),
    /// Second-moment decay; unused for SGD.
    pub beta2: Option<(f64, f64)>,
    pub epsilon: Option<(f64, f64)>,
}

impl KindRanges {
    pub fn defaults(kind: OptimizerKind, reading: RangeReading) -> Self {
        let shift = match reading {
            RangeReading::Literal => 1.0,
            RangeReading::Intended => 0.1,
        };
        match kind {
            OptimizerKind::TdProp | OptimizerKind::Adam => KindRanges {
                lr: (10e-8 * shift, 10e-3 * shift),
                beta2: Some((0.0, 1.0)),
                epsilon: Some((10e-8 * shift, 10e-1 * shift)),
            },
            OptimizerKind::Sgd => KindRanges { lr: (10e-4 * shift, 10e-0 * shift), beta2: None, epsilon: None },
        }
    }

    fn validate(&self, kind: OptimizerKind) -> std::result::Result<(), String> {
        let check = |name: &str, (lo, hi): (f64, f64)| {
            if lo.is_finite() && hi.is_finite() && lo < hi {
                Ok(())
            } else {
                Err(format!("{kind}.{name}: need lo < hi, got [{lo}, {hi}]"))
            }
        };
        check("lr", self.lr)?;
        if self.lr.0 < 0.0 {
            return Err(format!("{kind}.lr must be nonnegative"));
        }
        if kind != OptimizerKind::Sgd {
            let b = self.beta2.ok_or(format!("{kind}.beta2 range missing"))?;
            check("beta2", b)?;
            if b.0 < 0.0 || b.1 > 1.0 {
                return Err(format!("{kind}.beta2 must lie within [0,1]"));
            }
            let e = self.epsilon.ok_or(format!("{kind}.epsilon range missing"))?;
            check("epsilon", e)?;
            if e.0 <= 0.0 {
                return Err(format!("{kind}.epsilon must be positive"));
            }
        }
        Ok(())
    }
}

/// Training settings shared by every run of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunTemplate {
    pub env: EnvSpec,
    #[serde(default = "default_q")]
    pub q: QKind,
    pub total_steps: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_epsilon_greedy")]
    pub epsilon_greedy: f64,
    #[serde(default = "default_actors")]
    pub actors: usize,
    #[serde(default = "default_true")]
    pub all_offsets: bool,
    #[serde(default)]
    pub reward_clip: bool,
    #[serde(default = "default_clip")]
    pub grad_clip_norm: Option<f64>,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
}

fn default_q() -> QKind {
    QKind::Tabular
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
fn default_clip() -> Option<f64> {
    Some(crate::optim::DEFAULT_CLIP_NORM)
}
fn default_log_every() -> u64 {
    1000
}
fn default_samples() -> usize {
    50
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_kinds() -> Vec<OptimizerKind> {
    OptimizerKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<OptimizerKind>,
    #[serde(default)]
    pub range_reading: RangeReading,
    /// Per-kind overrides; kinds not listed use the defaults for `range_reading`.
    #[serde(default)]
    pub ranges: BTreeMap<OptimizerKind, KindRanges>,
    #[serde(default = "default_samples")]
    pub samples_per_kind: usize,
    /// Training seeds; every sampled configuration runs once per seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed of the hyperparameter draws.
    #[serde(default)]
    pub sample_seed: u64,
    /// Replace every sampled learning rate, e.g. zero for a frozen baseline.
    #[serde(default)]
    pub force_alpha: Option<f64>,
    pub run: RunTemplate,
}

impl SweepSpec {
    pub fn new(run: RunTemplate) -> Self {
        Self {
            kinds: default_kinds(),
            range_reading: RangeReading::Literal,
            ranges: BTreeMap::new(),
            samples_per_kind: default_samples(),
            seeds: default_seeds(),
            sample_seed: 0,
            force_alpha: None,
            run,
        }
    }

    pub fn ranges_for(&self, kind: OptimizerKind) -> KindRanges {
        self.ranges.get(&kind).copied().unwrap_or_else(|| KindRanges::defaults(kind, self.range_reading))
    }

    /// Ranges actually used, for manifests.
    pub fn resolved_ranges(&self) -> BTreeMap<OptimizerKind, KindRanges> {
        self.kinds.iter().map(|&k| (k, self.ranges_for(k))).collect()
    }

    /// Every problem found, one message per offending field.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kinds.is_empty() {
            out.push("kinds: at least one optimizer kind is required".to_string());
        }
        for &k in &self.kinds {
            if let Err(e) = self.ranges_for(k).validate(k) {
                out.push(format!("ranges.{e}"));
            }
        }
        if self.samples_per_kind == 0 {
            out.push("samples_per_kind: must be at least 1".to_string());
        }
        if self.seeds.is_empty() {
            out.push("seeds: at least one seed is required".to_string());
        }
        if let Some(a) = self.force_alpha {
            if !(a >= 0.0) || !a.is_finite() {
                out.push(format!("force_alpha: must be finite and nonnegative, got {a}"));
            }
        }
        if let Err(e) = self.run.env.validate() {
            out.push(format!("run.env: {e}"));
        }
        if let Err(e) = self.template_config(OptimizerKind::Sgd, Hyperparams::default(), 0).validate() {
            out.push(format!("run: {e}"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArg(p.join("; ")))
        }
    }

    pub fn template_config(&self, kind: OptimizerKind, hp: Hyperparams, seed: u64) -> SarsaConfig {
        let r = &self.run;
        SarsaConfig {
            n: r.n,
            gamma: r.gamma,
            epsilon_greedy: r.epsilon_greedy,
            actors: r.actors,
            all_offsets: r.all_offsets,
            reward_clip: r.reward_clip,
            log_every: r.log_every,
            ..SarsaConfig::new(kind, Hyperparams { grad_clip_norm: r.grad_clip_norm, ..hp }, r.total_steps, seed)
        }
    }
}

/// One sampled optimizer setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub kind: OptimizerKind,
    pub index: usize,
    pub lr: f64,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

impl SweepConfig {
    pub fn hyperparams(&self) -> Hyperparams {
        let d = Hyperparams::default();
        Hyperparams {
            alpha: self.lr,
            beta1: 0.0,
            beta2: self.beta2.unwrap_or(d.beta2),
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            ..d
        }
    }
}

/// Uniform draws on the (linear-scale) ranges, per kind from its own stream.
pub fn sample_configs(spec: &SweepSpec, seed: u64) -> Result<Vec<SweepConfig>> {
    spec.validate()?;
    let mut out = Vec::new();
    for &kind in &spec.kinds {
        let ranges = spec.ranges_for(kind);
        let stream = OptimizerKind::ALL.iter().position(|k| *k == kind).expect("known kind") as u64;
        let mut r = rng::substream(seed, stream);
        for index in 0..spec.samples_per_kind {
            let lr = r.gen_range(ranges.lr.0..ranges.lr.1);
            // Keep the decay strictly below one so the moment update stays valid.
            let beta2 = ranges.beta2.map(|(lo, hi)| r.gen_range(lo..hi).min(1.0 - f64::EPSILON));
            let epsilon = ranges.epsilon.map(|(lo, hi)| r.gen_range(lo..hi));
            out.push(SweepConfig { kind, index, lr: spec.force_alpha.unwrap_or(lr), beta2, epsilon });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub seed: u64,
    pub avg_return: f64,
    pub asymptotic_return: f64,
    pub diverged: bool,
}

/// Short stable digest of a run's full configuration.
pub fn config_hash(env: &EnvSpec, q: &QKind, cfg: &SarsaConfig) -> String {
    let text = serde_json::to_string(&(env, q, cfg)).expect("configs serialise");
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: SweepRecord,
    pub hash: String,
    pub curve: Vec<CurveRow>,
}

/// Trains every sampled configuration for every seed. Runs are independent
/// and executed in parallel; the output is sorted by (kind, seed, hash).
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunOutput>> {
    let configs = sample_configs(spec, spec.sample_seed)?;
    let jobs: Vec<(SweepConfig, u64)> = configs.iter().flat_map(|c| spec.seeds.iter().map(move |&s| (*c, s))).collect();
    let mut outputs: Vec<RunOutput> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let cfg = spec.template_config(c.kind, c.hyperparams(), seed);
            let hash = config_hash(&spec.run.env, &spec.run.q, &cfg);
            let q = QFunction::new(spec.run.q, &spec.run.env, rng::split(seed, 7))?;
            let res = agent::train(&spec.run.env, &q, &cfg)?;
            let record = SweepRecord {
                kind: c.kind,
                lr: c.lr,
                beta2: c.beta2,
                epsilon: c.epsilon,
                seed,
                avg_return: res.avg_return(),
                asymptotic_return: res.asymptotic_return(),
                diverged: res.diverged,
            };
            Ok(RunOutput { record, hash, curve: res.curve })
        })
        .collect::<Result<_>>()?;
    outputs.sort_by(|a, b| (a.record.kind, a.record.seed, &a.hash).cmp(&(b.record.kind, b.record.seed, &b.hash)));
    Ok(outputs)
}

pub fn write_records_csv<W: std::io::Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "lr", "beta2", "epsilon", "seed", "avg_return", "asymptotic_return", "diverged"])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.kind.to_string(),
            r.lr.to_string(),
            opt(r.beta2),
            opt(r.epsilon),
            r.seed.to_string(),
            r.avg_return.to_string(),
            r.asymptotic_return.to_string(),
            r.diverged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let required = ["kind", "lr", "beta2", "epsilon", "seed", "avg_return", "asymptotic_return", "diverged"];
    let missing: Vec<&str> = required.iter().copied().filter(|c| !headers.iter().any(|h| h == *c)).collect();
    if !missing.is_empty() {
        return Err(Error::Parse(format!("records file lacks columns: {}", missing.join(", "))));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

/// Writes `records.csv`, `summary.json` and one curve CSV per run into `dir`.
pub fn write_sweep_outputs(dir: &Path, runs: &[RunOutput], summary: &Summary) -> Result<()> {
    let curves = dir.join("curves");
    std::fs::create_dir_all(&curves)?;
    let records: Vec<SweepRecord> = runs.iter().map(|r| r.record.clone()).collect();
    write_records_csv(&records, std::fs::File::create(dir.join("records.csv"))?)?;
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)?)?;
    for r in runs {
        let name = format!("{}_{}.csv", r.record.kind, r.hash);
        agent::sarsa::write_curve_csv(&r.curve, std::fs::File::create(curves.join(name))?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub values: Vec<f64>,
    pub max: f64,
    /// The group maximum was not positive; values are returned unscaled.
    pub warning: bool,
}

/// Divides every value by the group maximum (all optimizer kinds together).
/// Non-finite values are left as they are and do not enter the maximum.
pub fn normalize_returns(values: &[f64]) -> Result<Normalized> {
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() || max == f64::NEG_INFINITY {
        return Err(Error::InsufficientData("no finite returns to normalise".into()));
    }
    if max <= 0.0 {
        return Ok(Normalized { values: values.to_vec(), max, warning: true });
    }
    Ok(Normalized { values: values.iter().map(|v| v / max).collect(), max, warning: false })
}

/// Records whose metric is at or above the `(1−q)` quantile.
pub fn top_percentile<'a>(records: &[&'a SweepRecord], metric: impl Fn(&SweepRecord) -> f64, q: f64) -> Vec<&'a SweepRecord> {
    let values: Vec<f64> = records.iter().map(|r| metric(r)).collect();
    stats::top_percentile_indices(&values, q).into_iter().map(|i| records[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub top_q: f64,
    pub bootstrap_resamples: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self { top_q: 0.25, bootstrap_resamples: stats::DEFAULT_BOOTSTRAP_RESAMPLES, level: stats::DEFAULT_LEVEL, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindRow {
    pub kind: OptimizerKind,
    pub n: usize,
    pub avg_return: Option<Interval>,
    pub asymptotic_return: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub a: OptimizerKind,
    pub b: OptimizerKind,
    pub metric: String,
    pub t: f64,
    pub dof: f64,
    pub p: f64,
    pub annotation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub table: Vec<KindRow>,
    pub pairwise: Vec<PairTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionEntry {
    pub kind: OptimizerKind,
    pub fit: Option<OlsFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub options: AnalysisOptions,
    pub n_records: usize,
    pub n_diverged: usize,
    pub normalization_max: BTreeMap<String, f64>,
    pub normalization_warning: bool,
    pub all: Selection,
    pub top: Selection,
    pub regressions: Vec<RegressionEntry>,
}

/// A record with both metrics divided by their group maxima.
#[derive(Debug, Clone, PartialEq)]
struct Scaled {
    rec: SweepRecord,
    avg: f64,
    asym: f64,
}

fn interval(xs: &[f64], opts: &AnalysisOptions, stream: u64) -> Option<Interval> {
    let xs: Vec<f64> = xs.iter().copied().filter(|x| x.is_finite()).collect();
    match xs.len() {
        0 => None,
        1 => Some(Interval { lo: xs[0], hi: xs[0], point: xs[0] }),
        _ => bootstrap_ci(&xs, opts.bootstrap_resamples, opts.level, rng::split(opts.seed, stream)).ok(),
    }
}

fn selection(groups: &BTreeMap<OptimizerKind, Vec<Scaled>>, pairs: &[(OptimizerKind, OptimizerKind)], opts: &AnalysisOptions, salt: u64) -> Selection {
    let table = groups
        .iter()
        .map(|(&kind, rs)| {
            let s = salt + 10 * kind as u64;
            KindRow {
                kind,
                n: rs.len(),
                avg_return: interval(&rs.iter().map(|r| r.avg).collect::<Vec<_>>(), opts, s),
                asymptotic_return: interval(&rs.iter().map(|r| r.asym).collect::<Vec<_>>(), opts, s + 1),
            }
        })
        .collect();
    let mut pairwise = Vec::new();
    for &(a, b) in pairs {
        let (Some(ra), Some(rb)) = (groups.get(&a), groups.get(&b)) else { continue };
        for (metric, f) in [("avg_return", (|r: &Scaled| r.avg) as fn(&Scaled) -> f64), ("asymptotic_return", |r: &Scaled| r.asym)] {
            let xa: Vec<f64> = ra.iter().map(f).filter(|x| x.is_finite()).collect();
            let xb: Vec<f64> = rb.iter().map(f).filter(|x| x.is_finite()).collect();
            if let Ok(w) = welch_t_test(&xa, &xb) {
                pairwise.push(PairTest { a, b, metric: metric.to_string(), t: w.t, dof: w.dof, p: w.p, annotation: annotate_p(w.p).to_string() });
            }
        }
    }
    Selection { table, pairwise }
}

/// All unordered pairs of the kinds present, in canonical order.
pub fn all_pairs(kinds: &[OptimizerKind]) -> Vec<(OptimizerKind, OptimizerKind)> {
    let mut ks: Vec<OptimizerKind> = kinds.to_vec();
    ks.sort();
    ks.dedup();
    let mut out = Vec::new();
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            out.push((ks[i], ks[j]));
        }
    }
    out
}

/// The full analysis: normalisation, all-sample and top-percentile tables
/// with bootstrap intervals, pairwise Welch tests and per-kind regressions.
pub fn analyze_records(records: &[SweepRecord], pairs: Option<&[(OptimizerKind, OptimizerKind)]>, opts: &AnalysisOptions) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to analyse".into()));
    }
    let avg = normalize_returns(&records.iter().map(|r| r.avg_return).collect::<Vec<_>>())?;
    let asym = normalize_returns(&records.iter().map(|r| r.asymptotic_return).collect::<Vec<_>>())
        .unwrap_or(Normalized { values: vec![f64::NAN; records.len()], max: f64::NAN, warning: true });
    let mut groups: BTreeMap<OptimizerKind, Vec<Scaled>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.kind).or_default().push(Scaled { rec: r.clone(), avg: avg.values[i], asym: asym.values[i] });
    }
    let kinds: Vec<OptimizerKind> = groups.keys().copied().collect();
    let pairs = pairs.map(|p| p.to_vec()).unwrap_or_else(|| all_pairs(&kinds));

    let top_groups: BTreeMap<OptimizerKind, Vec<Scaled>> = groups
        .iter()
        .map(|(&k, rs)| {
            let finite: Vec<&Scaled> = rs.iter().filter(|r| r.avg.is_finite()).collect();
            let vals: Vec<f64> = finite.iter().map(|r| r.avg).collect();
            let keep = stats::top_percentile_indices(&vals, opts.top_q).into_iter().map(|i| finite[i].clone()).collect();
            (k, keep)
        })
        .collect();

    let regressions = groups
        .iter()
        .map(|(&kind, rs)| {
            let rs: Vec<&Scaled> = rs.iter().filter(|r| r.rec.avg_return.is_finite()).collect();
            let y: Vec<f64> = rs.iter().map(|r| r.rec.avg_return).collect();
            let lr: Vec<f64> = rs.iter().map(|r| r.rec.lr).collect();
            let beta: Vec<f64> = rs.iter().filter_map(|r| r.rec.beta2).collect();
            let eps: Vec<f64> = rs.iter().filter_map(|r| r.rec.epsilon).collect();
            let mut cov: Vec<(&str, &[f64])> = vec![("lr", &lr)];
            if beta.len() == y.len() && eps.len() == y.len() && !y.is_empty() {
                cov.push(("beta", &beta));
                cov.push(("epsilon", &eps));
            }
            match ols_regression(("avg_return", &y), &cov, true, true) {
                Ok(fit) => RegressionEntry { kind, fit: Some(fit), error: None },
                Err(e) => RegressionEntry { kind, fit: None, error: Some(e.to_string()) },
            }
        })
        .collect();

    let mut normalization_max = BTreeMap::new();
    normalization_max.insert("avg_return".to_string(), avg.max);
    normalization_max.insert("asymptotic_return".to_string(), asym.max);
    Ok(Summary {
        options: *opts,
        n_records: records.len(),
        n_diverged: records.iter().filter(|r| r.diverged).count(),
        normalization_max,
        normalization_warning: avg.warning || asym.warning,
        all: selection(&groups, &pairs, opts, 0),
        top: selection(&top_groups, &pairs, opts, 1000),
        regressions,
    })
}
