//! TD iteration matrices and their splittings.
//!
//! Uniform tabular TD solves `H v = r_eff` with `H` one of
//!
//! * TD(0): `H = I − γP`, `r_eff = r`;
//! * n-step: `H = I − γⁿPⁿ`, `r_eff = Σ_{k<n} (γP)ᵏ r`;
//! * TD(λ): `H = (I − γλP)⁻¹(I − γP)`, `r_eff = (I − γλP)⁻¹ r`.
//!
//! The plain update `v ← v − α(Hv − r_eff)` corresponds to the splitting
//! `H = I − (I − H)`; Jacobi preconditioning uses `H = diag(H) − (diag(H) − H)`.
//! Both are regular splittings (`B⁻¹ ≥ 0`, `C ≥ 0`), and the asymptotic
//! contraction of `v ← v − αB⁻¹(Hv − r_eff)` is `ρ(I − αB⁻¹H)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, EigenResult, Matrix, Vector};
use crate::mdp::{self, Mdp};

/// Componentwise nonnegativity slack.
pub const NONNEG_TOL: f64 = 1e-12;
/// Slack on spectral-radius inequalities.
pub const RHO_TOL: f64 = 1e-10;
/// Slack on the condition-number inequality.
pub const KAPPA_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    Td0,
    NStep(u32),
    Lambda(f64),
}

impl Variant {
    fn validate(self) -> Result<Self> {
        match self {
            Variant::NStep(0) => Err(Error::InvalidArg("n-step horizon must be at least 1".into())),
            Variant::Lambda(l) if !(0.0..=1.0).contains(&l) => {
                Err(Error::InvalidArg(format!("lambda must lie in [0,1], got {l}")))
            }
            v => Ok(v),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Td0 => "td0",
            Variant::NStep(_) => "nstep",
            Variant::Lambda(_) => "lambda",
        }
    }

    pub fn n(&self) -> Option<u32> {
        match self {
            Variant::NStep(n) => Some(*n),
            _ => None,
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Variant::Lambda(l) => Some(*l),
            _ => None,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Td0 => write!(f, "td0"),
            Variant::NStep(n) => write!(f, "nstep:{n}"),
            Variant::Lambda(l) => write!(f, "lambda:{l}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Parses `td0`, `nstep:N` or `lambda:L`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArg(format!("unrecognised variant '{s}' (expected td0, nstep:N or lambda:L)"));
        let v = match s.split_once(':') {
            None if s == "td0" => Variant::Td0,
            Some(("nstep", n)) => Variant::NStep(n.parse().map_err(|_| bad())?),
            Some(("lambda", l)) => Variant::Lambda(l.parse().map_err(|_| bad())?),
            _ => return Err(bad()),
        };
        v.validate()
    }
}

/// The linear system solved by a TD variant, `h · v = r_eff`.
#[derive(Debug, Clone)]
pub struct TdSystem {
    pub variant: Variant,
    pub h: Matrix,
    pub r_eff: Vector,
    pub gamma: f64,
    pub source: Mdp,
}

impl TdSystem {
    pub fn n_states(&self) -> usize {
        self.r_eff.len()
    }
}

pub fn build_system(m: &Mdp, variant: Variant) -> Result<TdSystem> {
    let variant = variant.validate()?;
    let n = m.n_states();
    let gamma = m.gamma();
    let eye = Matrix::identity(n);
    let (h, r_eff) = match variant {
        Variant::Td0 => (m.system_matrix(), m.r().to_vec()),
        Variant::NStep(steps) => {
            let gp = m.p().scale(gamma);
            let h = eye.sub(&gp.pow(steps));
            let mut term = m.r().to_vec();
            let mut acc = term.clone();
            for _ in 1..steps {
                term = gp.matvec(&term);
                acc.iter_mut().zip(&term).for_each(|(a, t)| *a += t);
            }
            (h, acc)
        }
        Variant::Lambda(lambda) => {
            let lu = linalg::Lu::factor(&eye.sub(&m.p().scale(gamma * lambda)))?;
            (lu.solve_matrix(&m.system_matrix())?, lu.solve(m.r())?)
        }
    };
    Ok(TdSystem { variant, h, r_eff, gamma, source: m.clone() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Plain,
    Jacobi,
    /// Hand-built splitting, used for diagnostics.
    Custom,
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitKind::Plain => "plain",
            SplitKind::Jacobi => "jacobi",
            SplitKind::Custom => "custom",
        })
    }
}

impl FromStr for SplitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(SplitKind::Plain),
            "jacobi" => Ok(SplitKind::Jacobi),
            _ => Err(Error::InvalidArg(format!("unknown splitting '{s}' (expected plain or jacobi)"))),
        }
    }
}

/// `H = B − C`.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub b: Matrix,
    pub c: Matrix,
    pub kind: SplitKind,
}

impl Splitting {
    /// Wraps an arbitrary pair; `b` must be square with the shape of `c`.
    pub fn custom(b: Matrix, c: Matrix) -> Result<Self> {
        if !b.is_square() || b.rows() != c.rows() || b.cols() != c.cols() {
            return Err(Error::DimMismatch { expected: b.rows(), actual: c.rows() });
        }
        Ok(Self { b, c, kind: SplitKind::Custom })
    }

    pub fn h(&self) -> Matrix {
        self.b.sub(&self.c)
    }

    /// `B⁻¹ x`, by diagonal scaling for the built-in kinds.
    pub fn apply_b_inv(&self, x: &[f64]) -> Result<Vector> {
        match self.kind {
            SplitKind::Plain => Ok(x.to_vec()),
            SplitKind::Jacobi => Ok(x.iter().zip(self.b.diag()).map(|(v, d)| v / d).collect()),
            SplitKind::Custom => linalg::solve_linear(&self.b, x),
        }
    }

    /// `B⁻¹ M`.
    pub fn b_inv_times(&self, m: &Matrix) -> Result<Matrix> {
        match self.kind {
            SplitKind::Plain => Ok(m.clone()),
            SplitKind::Jacobi => Ok(m.scale_rows(&self.b.diag().iter().map(|d| 1.0 / d).collect::<Vec<_>>())),
            SplitKind::Custom => linalg::Lu::factor(&self.b)?.solve_matrix(m),
        }
    }
}

/// Jacobi splitting `B = diag(H)`, `C = B − H`.
pub fn jacobi_split(sys: &TdSystem) -> Result<Splitting> {
    let d = sys.h.diag();
    if let Some((index, &value)) = d.iter().enumerate().find(|(_, &x)| x <= 1e-12) {
        return Err(Error::DegenerateDiagonal { index, value });
    }
    let b = Matrix::from_diag(&d);
    let mut c = sys.h.scale(-1.0);
    for i in 0..d.len() {
        c[(i, i)] = 0.0;
    }
    Ok(Splitting { b, c, kind: SplitKind::Jacobi })
}

/// Plain splitting `B = I`, `C = I − H`.
pub fn plain_split(sys: &TdSystem) -> Splitting {
    let eye = Matrix::identity(sys.n_states());
    let c = eye.sub(&sys.h);
    Splitting { b: eye, c, kind: SplitKind::Plain }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularityReport {
    pub is_regular: bool,
    pub min_binv_entry: f64,
    pub min_c_entry: f64,
}

/// Checks `B⁻¹ ≥ 0` and `C ≥ 0` componentwise (slack `1e-12`).
pub fn verify_regular_splitting(s: &Splitting) -> Result<RegularityReport> {
    let b_inv = linalg::inverse(&s.b)?;
    let min_binv_entry = b_inv.min_entry();
    let min_c_entry = s.c.min_entry();
    Ok(RegularityReport {
        is_regular: min_binv_entry >= -NONNEG_TOL && min_c_entry >= -NONNEG_TOL,
        min_binv_entry,
        min_c_entry,
    })
}

/// `I − α B⁻¹ H`.
pub fn iteration_matrix(s: &Splitting, alpha: f64) -> Result<Matrix> {
    let n = s.b.rows();
    Ok(Matrix::identity(n).sub(&s.b_inv_times(&s.h())?.scale(alpha)))
}

/// Asymptotic rate `ρ(I − α B⁻¹ H)` of the preconditioned iteration.
///
/// At `α = 1` the iteration matrix is `B⁻¹C`, nonnegative for a regular
/// splitting, and the Perron path is used; otherwise the general eigensolver.
pub fn iteration_rate(s: &Splitting, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArg(format!("alpha must be nonnegative, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(1.0);
    }
    if alpha == 1.0 {
        let t = s.b_inv_times(&s.c)?;
        if t.min_entry() >= 0.0 {
            return linalg::spectral_radius_nonneg(&t);
        }
        if t.min_entry() >= -NONNEG_TOL {
            return linalg::spectral_radius_nonneg(&t.map(|x| x.max(0.0)));
        }
    }
    iteration_rate_general(s, alpha)
}

/// `ρ(I − α B⁻¹ H)` by the general eigensolver only.
pub fn iteration_rate_general(s: &Splitting, alpha: f64) -> Result<f64> {
    linalg::spectral_radius_general(&iteration_matrix(s, alpha)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub rho_jacobi: f64,
    pub rho_plain: f64,
    pub holds: bool,
}

/// Compares `ρ(I − H̄⁻¹H)` against `ρ(I − H)` at unit step size.
pub fn theorem1_check(m: &Mdp, variant: Variant) -> Result<Theorem1Report> {
    let sys = build_system(m, variant)?;
    let rho_plain = iteration_rate(&plain_split(&sys), 1.0)?;
    let rho_jacobi = iteration_rate(&jacobi_split(&sys)?, 1.0)?;
    Ok(Theorem1Report { rho_jacobi, rho_plain, holds: rho_jacobi <= rho_plain + RHO_TOL && rho_plain < 1.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OptimalStep {
    pub alpha_star: f64,
    pub rho_star: f64,
}

/// Optimal scalar step for a matrix with real positive spectrum:
/// `α* = 2/(λmax + λmin)`, `ρ* = (λmax − λmin)/(λmax + λmin)`.
pub fn optimal_alpha(eigs: &EigenResult) -> Result<OptimalStep> {
    if eigs.eigenvalues.is_empty() || eigs.method == linalg::EigenMethod::HessenbergQr {
        return Err(Error::NonPositiveSpectrum);
    }
    let (lo, hi) = (eigs.min(), eigs.max());
    if !(lo > 0.0) {
        return Err(Error::NonPositiveSpectrum);
    }
    Ok(OptimalStep { alpha_star: 2.0 / (hi + lo), rho_star: (hi - lo) / (hi + lo) })
}

/// Real spectrum of `H̄⁻¹H` from its symmetric similar `H̄^{-1/2} H H̄^{-1/2}`.
pub fn jacobi_symmetric_spectrum(h: &Matrix) -> Result<EigenResult> {
    let d = h.diag();
    if let Some((index, &value)) = d.iter().enumerate().find(|(_, &x)| x <= 1e-12) {
        return Err(Error::DegenerateDiagonal { index, value });
    }
    let s: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = h.scale_rows(&s).scale_cols(&s);
    // Rounding in the two scalings can break exact symmetry; average it out.
    let sym = scaled.add(&scaled.transpose()).scale(0.5);
    linalg::eigenvalues_symmetric(&sym)
}

fn spd_condition(eigs: &EigenResult) -> Result<f64> {
    let lo = eigs.min();
    if lo <= 1e-12 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(eigs.max() / lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Report {
    pub kappa_jacobi: f64,
    pub kappa_plain: f64,
    pub holds: bool,
}

/// Compares `κ(H̄⁻¹H)` against `2κ(H)` for a symmetric positive-definite `H`.
pub fn kappa_comparison(sys: &TdSystem) -> Result<Theorem2Report> {
    let kappa_plain = linalg::condition_number_spd(&sys.h)?;
    let kappa_jacobi = spd_condition(&jacobi_symmetric_spectrum(&sys.h)?)?;
    Ok(Theorem2Report { kappa_jacobi, kappa_plain, holds: kappa_jacobi <= 2.0 * kappa_plain + KAPPA_TOL })
}

/// [`kappa_comparison`] on the TD(0) system of `m`.
pub fn theorem2_check(m: &Mdp) -> Result<Theorem2Report> {
    kappa_comparison(&build_system(m, Variant::Td0)?)
}

/// Everything the analysis reports about one system.
#[derive(Debug, Clone, PartialEq)]
pub struct SplittingAnalysis {
    pub rho_plain: f64,
    pub rho_jacobi: f64,
    pub alpha_star_plain: Option<f64>,
    pub alpha_star_jacobi: Option<f64>,
    pub kappa_plain: Option<f64>,
    pub kappa_jacobi: Option<f64>,
    pub is_symmetric: bool,
}

impl SplittingAnalysis {
    pub fn theorem1_holds(&self) -> bool {
        self.rho_jacobi <= self.rho_plain + RHO_TOL && self.rho_plain < 1.0
    }

    pub fn theorem2_holds(&self) -> Option<bool> {
        match (self.kappa_plain, self.kappa_jacobi) {
            (Some(p), Some(j)) => Some(j <= 2.0 * p + KAPPA_TOL),
            _ => None,
        }
    }
}

/// Real positive spectrum of a general matrix, if it has one.
fn real_positive_spectrum(a: &Matrix) -> Option<EigenResult> {
    let eigs = linalg::eigenvalues_complex(a).ok()?;
    let scale = eigs.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    if eigs.iter().all(|z| z.im.abs() <= 1e-10 * scale && z.re > 0.0) {
        let mut vals: Vec<f64> = eigs.iter().map(|z| z.re).collect();
        vals.sort_by(|a, b| b.total_cmp(a));
        Some(EigenResult { eigenvalues: vals, method: linalg::EigenMethod::SymmetricJacobiRotations })
    } else {
        None
    }
}

pub fn analyze(sys: &TdSystem) -> Result<SplittingAnalysis> {
    let plain = plain_split(sys);
    let jacobi = jacobi_split(sys)?;
    let rho_plain = iteration_rate(&plain, 1.0)?;
    let rho_jacobi = iteration_rate(&jacobi, 1.0)?;
    let is_symmetric = sys.h.is_symmetric(1e-10);
    let (plain_eigs, jacobi_eigs) = if is_symmetric {
        (linalg::eigenvalues_symmetric(&sys.h).ok(), jacobi_symmetric_spectrum(&sys.h).ok())
    } else {
        (real_positive_spectrum(&sys.h), real_positive_spectrum(&jacobi.b_inv_times(&sys.h)?))
    };
    let step = |e: &Option<EigenResult>| e.as_ref().and_then(|e| optimal_alpha(e).ok());
    let kappa = |e: &Option<EigenResult>| if is_symmetric { e.as_ref().and_then(|e| spd_condition(e).ok()) } else { None };
    Ok(SplittingAnalysis {
        rho_plain,
        rho_jacobi,
        alpha_star_plain: step(&plain_eigs).map(|s| s.alpha_star),
        alpha_star_jacobi: step(&jacobi_eigs).map(|s| s.alpha_star),
        kappa_plain: kappa(&plain_eigs),
        kappa_jacobi: kappa(&jacobi_eigs),
        is_symmetric,
    })
}

/// One CSV row of a theory run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub variant: String,
    pub n: Option<u32>,
    pub lambda: Option<f64>,
    pub gamma: f64,
    pub n_states: usize,
    pub seed: u64,
    pub rho_plain: f64,
    pub rho_jacobi: f64,
    pub alpha_star_plain: Option<f64>,
    pub alpha_star_jacobi: Option<f64>,
    pub kappa_plain: Option<f64>,
    pub kappa_jacobi: Option<f64>,
    pub theorem1_holds: bool,
    pub theorem2_holds: Option<bool>,
}

impl AnalysisRow {
    pub fn new(sys: &TdSystem, seed: u64, a: &SplittingAnalysis) -> Self {
        Self {
            variant: sys.variant.name().to_string(),
            n: sys.variant.n(),
            lambda: sys.variant.lambda(),
            gamma: sys.gamma,
            n_states: sys.n_states(),
            seed,
            rho_plain: a.rho_plain,
            rho_jacobi: a.rho_jacobi,
            alpha_star_plain: a.alpha_star_plain,
            alpha_star_jacobi: a.alpha_star_jacobi,
            kappa_plain: a.kappa_plain,
            kappa_jacobi: a.kappa_jacobi,
            theorem1_holds: a.theorem1_holds(),
            theorem2_holds: a.theorem2_holds(),
        }
    }
}

pub fn write_analysis_csv<W: std::io::Write>(rows: &[AnalysisRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Exact solution of the source process, shared by every variant.
pub fn exact_solution(sys: &TdSystem) -> Result<Vector> {
    Ok(mdp::exact_value(&sys.source)?.v_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn two_state() -> Mdp {
        Mdp::new(Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8]]).unwrap(), vec![1.0, 0.0], 0.9).unwrap()
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("td0".parse::<Variant>().unwrap(), Variant::Td0);
        assert_eq!("nstep:5".parse::<Variant>().unwrap(), Variant::NStep(5));
        assert_eq!("lambda:0.5".parse::<Variant>().unwrap(), Variant::Lambda(0.5));
        assert!("lambda:1.5".parse::<Variant>().is_err());
        assert!("nstep:0".parse::<Variant>().is_err());
        assert!("td1".parse::<Variant>().is_err());
    }

    #[test]
    fn collapsing_variants_match_td0() {
        let m = mdp::random_mdp(5, 6, 3, 0.9).unwrap();
        let h = m.system_matrix();
        assert_eq!(build_system(&m, Variant::Lambda(0.0)).unwrap().h, h);
        assert_eq!(build_system(&m, Variant::NStep(1)).unwrap().h, h);
    }

    #[test]
    fn two_state_system_and_splits() {
        let sys = build_system(&two_state(), Variant::Td0).unwrap();
        let expected = Matrix::from_rows(&[[0.19, -0.09], [-0.18, 0.28]]).unwrap();
        assert!(sys.h.max_abs_diff(&expected) < 1e-15);
        let j = jacobi_split(&sys).unwrap();
        assert!(j.b.max_abs_diff(&Matrix::from_diag(&[0.19, 0.28])) < 1e-15);
        assert!(j.c.max_abs_diff(&Matrix::from_rows(&[[0.0, 0.09], [0.18, 0.0]]).unwrap()) < 1e-15);
        assert!(verify_regular_splitting(&j).unwrap().is_regular);
        assert_relative_eq!(iteration_rate(&plain_split(&sys), 1.0).unwrap(), 0.9, max_relative = 1e-10);
        let expected_rho = ((0.09 / 0.19) * (0.18 / 0.28) as f64).sqrt();
        let rho = iteration_rate(&j, 1.0).unwrap();
        assert_relative_eq!(rho, expected_rho, max_relative = 1e-10);
        assert!((rho - 0.5519).abs() < 1e-4);
        assert_eq!(iteration_rate(&j, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn radius_check_fixtures() {
        let rep = theorem1_check(&two_state(), Variant::Td0).unwrap();
        assert!(rep.holds);
        assert!((rep.rho_jacobi - 0.5519).abs() < 1e-4);
        assert_relative_eq!(rep.rho_plain, 0.9, max_relative = 1e-10);

        let diag = Mdp::new(Matrix::identity(3), vec![1.0, 2.0, 3.0], 0.8).unwrap();
        let rep = theorem1_check(&diag, Variant::Td0).unwrap();
        assert_eq!(rep.rho_jacobi, 0.0);
        assert!(rep.holds);
    }

    #[test]
    fn diagonal_h_gives_zero_coupling() {
        let diag = Mdp::new(Matrix::identity(3), vec![0.0; 3], 0.8).unwrap();
        let j = jacobi_split(&build_system(&diag, Variant::Td0).unwrap()).unwrap();
        assert_eq!(j.c, Matrix::zeros(3, 3));
    }

    #[test]
    fn plain_split_coupling() {
        let m = mdp::random_mdp(2, 5, 3, 0.9).unwrap();
        let sys = build_system(&m, Variant::Td0).unwrap();
        assert!(plain_split(&sys).c.max_abs_diff(&m.p().scale(0.9)) < 1e-15);
        let sys = build_system(&m, Variant::NStep(3)).unwrap();
        assert!(plain_split(&sys).c.max_abs_diff(&m.p().scale(0.9).pow(3)) < 1e-15);
        let sys = build_system(&m, Variant::Lambda(0.7)).unwrap();
        assert!(plain_split(&sys).c.min_entry() >= -1e-12);
    }

    #[test]
    fn non_regular_counterexample() {
        let b = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]]).unwrap();
        let c = Matrix::zeros(2, 2);
        let rep = verify_regular_splitting(&Splitting::custom(b, c).unwrap()).unwrap();
        assert!(!rep.is_regular);
        assert_eq!(rep.min_binv_entry, -2.0);
    }

    #[test]
    fn optimal_alpha_fixtures() {
        let e = EigenResult { eigenvalues: vec![1.9, 0.1], method: linalg::EigenMethod::SymmetricJacobiRotations };
        let s = optimal_alpha(&e).unwrap();
        assert_relative_eq!(s.alpha_star, 1.0, max_relative = 1e-15);
        assert_relative_eq!(s.rho_star, 0.9, max_relative = 1e-15);
        let e = EigenResult { eigenvalues: vec![0.4; 3], method: linalg::EigenMethod::SymmetricJacobiRotations };
        let s = optimal_alpha(&e).unwrap();
        assert_relative_eq!(s.alpha_star, 2.5, max_relative = 1e-15);
        assert_eq!(s.rho_star, 0.0);
        let e = EigenResult { eigenvalues: vec![1.0, -0.1], method: linalg::EigenMethod::SymmetricJacobiRotations };
        assert_eq!(optimal_alpha(&e), Err(Error::NonPositiveSpectrum));
    }

    #[test]
    fn kappa_check_fixtures() {
        let p = Matrix::from_rows(&[[0.6, 0.4], [0.4, 0.6]]).unwrap();
        let m = Mdp::new(p, vec![0.0, 1.0], 0.9).unwrap();
        let rep = theorem2_check(&m).unwrap();
        // Eigenvalues of H are 0.1 and 0.82.
        assert_relative_eq!(rep.kappa_plain, 8.2, max_relative = 1e-12);
        assert_relative_eq!(rep.kappa_jacobi, 8.2, max_relative = 1e-12);
        assert!(rep.holds);

        let diag = Mdp::new(Matrix::identity(3), vec![0.0; 3], 0.5).unwrap();
        let rep = theorem2_check(&diag).unwrap();
        assert_relative_eq!(rep.kappa_jacobi, 1.0, max_relative = 1e-14);
        assert!(rep.holds);

        assert!(matches!(theorem2_check(&two_state()), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn analysis_rows_serialise() {
        let m = mdp::symmetric_mdp(1, 4, 0.9).unwrap();
        let sys = build_system(&m, Variant::Td0).unwrap();
        let a = analyze(&sys).unwrap();
        assert!(a.is_symmetric && a.kappa_jacobi.is_some() && a.alpha_star_plain.is_some());
        let mut buf = Vec::new();
        write_analysis_csv(&[AnalysisRow::new(&sys, 1, &a)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("variant,n,lambda,gamma,n_states,seed,rho_plain,rho_jacobi,alpha_star_plain,alpha_star_jacobi,kappa_plain,kappa_jacobi,theorem1_holds,theorem2_holds\n"));
        assert!(text.contains("td0,,,0.9,4,1,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn systems_are_solved_by_v_star(seed in any::<u64>(), n in 2usize..15, k in 0usize..5, g in 0.1f64..0.99) {
            let m = mdp::random_mdp(seed, n, 1 + seed as usize % n, g).unwrap();
            let v = exact_solution(&build_system(&m, Variant::Td0).unwrap()).unwrap();
            let variants = [Variant::Td0, Variant::NStep(2), Variant::NStep(5), Variant::Lambda(0.5), Variant::Lambda(1.0)];
            let sys = build_system(&m, variants[k]).unwrap();
            let hv = sys.h.matvec(&v);
            let res = hv.iter().zip(&sys.r_eff).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(res <= 1e-8 * (1.0 + linalg::norm_inf(&v)));
        }

        #[test]
        fn splitting_comparison(seed in any::<u64>(), n in 2usize..15, k in 0usize..6, g in 0.1f64..0.99) {
            let m = mdp::random_mdp(seed, n, 1 + seed as usize % n, g).unwrap();
            let variants = [Variant::Td0, Variant::NStep(2), Variant::NStep(5), Variant::Lambda(0.0), Variant::Lambda(0.5), Variant::Lambda(1.0)];
            let sys = build_system(&m, variants[k]).unwrap();
            let plain = plain_split(&sys);
            let jac = jacobi_split(&sys).unwrap();
            prop_assert!(verify_regular_splitting(&plain).unwrap().is_regular);
            prop_assert!(verify_regular_splitting(&jac).unwrap().is_regular);
            for i in 0..n {
                prop_assert_eq!(jac.c[(i, i)], 0.0);
                for j in 0..n {
                    if i != j {
                        prop_assert!((jac.c[(i, j)] - plain.c[(i, j)]).abs() <= 1e-15);
                    }
                }
            }
            let rj = iteration_rate(&jac, 1.0).unwrap();
            let rp = iteration_rate(&plain, 1.0).unwrap();
            prop_assert!(rj <= rp + RHO_TOL, "{} > {}", rj, rp);
        }

        #[test]
        fn fast_path_matches_general(seed in any::<u64>(), n in 2usize..15, g in 0.1f64..0.99) {
            let m = mdp::random_mdp(seed, n, 1 + seed as usize % n, g).unwrap();
            let sys = build_system(&m, Variant::Td0).unwrap();
            for s in [plain_split(&sys), jacobi_split(&sys).unwrap()] {
                let fast = iteration_rate(&s, 1.0).unwrap();
                let general = iteration_rate_general(&s, 1.0).unwrap();
                prop_assert!((fast - general).abs() <= 1e-8, "{} vs {}", fast, general);
            }
        }
    }
}
