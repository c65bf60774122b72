//! Dense small-matrix numerics.
//!
//! Everything here is `f64`, row-major and sized for desk-scale problems
//! (dimension at most [`MAX_DIM`]). The routines are the substrate of the
//! spectral analysis in [`crate::precond`]: linear solves, Perron roots by
//! power iteration, symmetric eigenvalues by cyclic Jacobi rotations and
//! general eigenvalues by Hessenberg reduction followed by shifted QR.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Vector = Vec<f64>;

/// Largest dimension accepted by the eigensolvers.
pub const MAX_DIM: usize = 512;

/// Relative pivot threshold for [`solve_linear`].
pub const PIVOT_TOL: f64 = 1e-12;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 100_000;
const JACOBI_MAX_SWEEPS: usize = 100;
const QR_MAX_ITERS_PER_EIGENVALUE: usize = 60;

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch { expected: rows * cols, actual: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput("matrix"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimMismatch { expected: cols, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn diag(&self) -> Vector {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|x| s * x)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Elementwise `self + other`. Panics on shape mismatch.
    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    /// Elementwise `self - other`. Panics on shape mismatch.
    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    /// Matrix product. Panics on inner-dimension mismatch.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Matrix-vector product. Panics on dimension mismatch.
    pub fn matvec(&self, x: &[f64]) -> Vector {
        assert_eq!(self.cols, x.len(), "dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `self^k` by repeated squaring; `k = 0` gives the identity.
    pub fn pow(&self, mut k: u32) -> Self {
        assert!(self.is_square());
        let mut result = Self::identity(self.rows);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result = result.matmul(&base);
            }
            k >>= 1;
            if k > 0 {
                base = base.matmul(&base);
            }
        }
        result
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows).map(|i| self.row(i).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other).data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖A − Aᵀ‖∞`.
    pub fn asymmetry(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.sub(&self.transpose()).norm_inf()
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= rel_tol * self.norm_inf()
    }

    /// `diag(d) · self`, i.e. row `i` scaled by `d[i]`.
    pub fn scale_rows(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.rows);
        let mut out = self.clone();
        for (i, &s) in d.iter().enumerate() {
            out.row_mut(i).iter_mut().for_each(|x| *x *= s);
        }
        out
    }

    /// `self · diag(d)`, i.e. column `j` scaled by `d[j]`.
    pub fn scale_cols(&self, d: &[f64]) -> Self {
        assert_eq!(d.len(), self.cols);
        let mut out = self.clone();
        for i in 0..self.rows {
            out.row_mut(i).iter_mut().zip(d).for_each(|(x, &s)| *x *= s);
        }
        out
    }

    fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(Error::NotSquare { rows: self.rows, cols: self.cols })
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn norm_l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// LU factorisation with partial pivoting, `P·A = L·U` packed in place.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(a: &Matrix) -> Result<Self> {
        let n = a.require_square()?;
        let threshold = PIVOT_TOL * a.norm_inf();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pivot <= threshold || pivot == 0.0 {
                return Err(Error::SingularMatrix { pivot, threshold });
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    lu.data.swap(p * n + j, k * n + j);
                }
            }
            let d = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / d;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vector> {
        let n = self.lu.rows;
        if b.len() != n {
            return Err(Error::DimMismatch { expected: n, actual: b.len() });
        }
        let mut x: Vector = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s = dot(&self.lu.row(i)[..i], &x[..i]);
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s = dot(&self.lu.row(i)[i + 1..], &x[i + 1..]);
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        Ok(x)
    }

    /// Solves `A·X = B` column by column.
    pub fn solve_matrix(&self, b: &Matrix) -> Result<Matrix> {
        let n = self.lu.rows;
        if b.rows != n {
            return Err(Error::DimMismatch { expected: n, actual: b.rows });
        }
        let mut out = Matrix::zeros(n, b.cols);
        for j in 0..b.cols {
            let x = self.solve(&b.column(j))?;
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        Ok(out)
    }
}

/// Solves `a·x = b` by partial-pivoting elimination.
///
/// Fails with [`Error::SingularMatrix`] when a pivot magnitude drops below
/// `1e-12·‖a‖∞`.
pub fn solve_linear(a: &Matrix, b: &[f64]) -> Result<Vector> {
    Lu::factor(a)?.solve(b)
}

pub fn inverse(a: &Matrix) -> Result<Matrix> {
    Lu::factor(a)?.solve_matrix(&Matrix::identity(a.rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    PerronPowerIteration,
    SymmetricJacobiRotations,
    HessenbergQr,
}

/// Eigenvalues sorted by descending modulus.
///
/// The symmetric path reports signed real eigenvalues; the general path
/// reports moduli, since complex pairs may arise.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub method: EigenMethod,
}

impl EigenResult {
    fn sorted(mut eigenvalues: Vec<f64>, method: EigenMethod) -> Self {
        eigenvalues.sort_by(|a, b| b.abs().total_cmp(&a.abs()).then(b.total_cmp(a)));
        Self { eigenvalues, method }
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.first().map_or(0.0, |x| x.abs())
    }
}

/// Perron root of a componentwise nonnegative square matrix.
///
/// Power iteration from the all-ones vector, renormalised in the 1-norm every
/// step; for a nonnegative iterate the 1-norm of `A·x` is the Rayleigh-type
/// estimate. Converged once successive estimates differ by less than `1e-12`
/// and either the iterate has stopped moving or the estimate has held for
/// several iterations.
/// When the iterates cycle (several eigenvalues share the top modulus, as for
/// periodic matrices) the answer is taken from [`spectral_radius_general`].
pub fn spectral_radius_nonneg(a: &Matrix) -> Result<f64> {
    let n = a.require_square()?;
    if a.min_entry() < 0.0 {
        return Err(Error::InvalidArg("spectral_radius_nonneg requires a nonnegative matrix".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut history: Vec<f64> = Vec::with_capacity(POWER_MAX_ITERS.min(4096));
    let mut estimate = 0.0;
    let mut settled = 0;
    for k in 0..POWER_MAX_ITERS {
        let y = a.matvec(&x);
        let s: f64 = y.iter().sum();
        if s == 0.0 {
            // A^k·1 = 0 for a nonnegative A means A is nilpotent.
            return Ok(0.0);
        }
        estimate = s;
        let next: Vector = y.into_iter().map(|v| v / s).collect();
        let moved: f64 = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = next;
        if let Some(&prev) = history.last() {
            // Two equal sums can be a coincidence; ask for a settled iterate
            // or a longer run of agreeing estimates.
            settled = if (estimate - prev).abs() < POWER_TOL { settled + 1 } else { 0 };
            if settled > 0 && (moved < 1e-9 || settled >= 8) {
                return Ok(estimate);
            }
        }
        history.push(estimate);
        if k >= 64 && k % 16 == 0 && is_cycling(&history) {
            return spectral_radius_general(a);
        }
    }
    Err(Error::NoConvergence { iterations: POWER_MAX_ITERS, last_estimate: estimate })
}

/// Detects a period-`p` pattern (2 ≤ p ≤ 8) in the tail of the estimates that
/// has not settled to a single value.
fn is_cycling(history: &[f64]) -> bool {
    let k = history.len() - 1;
    let last = history[k];
    let step = (last - history[k - 1]).abs();
    if step < 1e3 * POWER_TOL {
        return false;
    }
    (2..=8).any(|p| (0..p).all(|j| (history[k - j] - history[k - j - p]).abs() < 1e-3 * step))
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn eigenvalues_symmetric(a: &Matrix) -> Result<EigenResult> {
    let n = a.require_square()?;
    let asym = a.asymmetry();
    if asym > 1e-10 * a.norm_inf() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let mut m = a.add(&a.transpose()).scale(0.5);
    let target = 1e-12 * a.norm_fro();
    let off = |m: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence { iterations: sweeps, last_estimate: off(&m) });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * akp - s * akq;
                    m[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * apk - s * aqk;
                    m[(q, k)] = s * apk + c * aqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
            }
        }
    }
    Ok(EigenResult::sorted(m.diag(), EigenMethod::SymmetricJacobiRotations))
}

/// Complex eigenvalues of a general real matrix: balancing, reduction to
/// upper Hessenberg form by stabilised elimination, then Francis double-shift
/// QR iteration.
pub fn eigenvalues_complex(a: &Matrix) -> Result<Vec<Complex64>> {
    let n = a.require_square()?;
    if n > MAX_DIM {
        return Err(Error::InvalidArg(format!("dimension {n} exceeds {MAX_DIM}")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut h = OneBased::from(a);
    h.balance();
    h.reduce_to_hessenberg();
    h.hessenberg_qr()
}

/// Moduli of all eigenvalues of a general matrix.
pub fn eigenvalues_general(a: &Matrix) -> Result<EigenResult> {
    let eigs = eigenvalues_complex(a)?;
    Ok(EigenResult::sorted(eigs.iter().map(|z| z.norm()).collect(), EigenMethod::HessenbergQr))
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius_general(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues_general(a)?.spectral_radius())
}

/// `λ_max / λ_min` of a symmetric positive-definite matrix.
pub fn condition_number_spd(a: &Matrix) -> Result<f64> {
    let eig = eigenvalues_symmetric(a)?;
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 1e-12 {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(hi / lo)
}

/// Square work matrix indexed from 1, which keeps the Hessenberg QR sweep
/// readable against its classical formulation.
struct OneBased {
    n: usize,
    data: Vec<f64>,
}

impl From<&Matrix> for OneBased {
    fn from(a: &Matrix) -> Self {
        let n = a.rows;
        let mut data = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                data[(i + 1) * (n + 1) + j + 1] = a[(i, j)];
            }
        }
        Self { n, data }
    }
}

impl Index<(usize, usize)> for OneBased {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * (self.n + 1) + j]
    }
}

impl IndexMut<(usize, usize)> for OneBased {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * (self.n + 1) + j]
    }
}

impl OneBased {
    /// Diagonal similarity scaling by powers of two so rows and columns have
    /// comparable norms.
    fn balance(&mut self) {
        const RADIX: f64 = 2.0;
        let sqrdx = RADIX * RADIX;
        let n = self.n;
        let mut done = false;
        while !done {
            done = true;
            for i in 1..=n {
                let (mut r, mut c) = (0.0, 0.0);
                for j in 1..=n {
                    if j != i {
                        c += self[(j, i)].abs();
                        r += self[(i, j)].abs();
                    }
                }
                if c != 0.0 && r != 0.0 {
                    let mut g = r / RADIX;
                    let mut f = 1.0;
                    let s = c + r;
                    while c < g {
                        f *= RADIX;
                        c *= sqrdx;
                    }
                    g = r * RADIX;
                    while c > g {
                        f /= RADIX;
                        c /= sqrdx;
                    }
                    if (c + r) / f < 0.95 * s {
                        done = false;
                        let g = 1.0 / f;
                        for j in 1..=n {
                            self[(i, j)] *= g;
                        }
                        for j in 1..=n {
                            self[(j, i)] *= f;
                        }
                    }
                }
            }
        }
    }

    /// Elimination with pivoting to upper Hessenberg form. Multipliers are
    /// cleared so the result is exactly Hessenberg.
    fn reduce_to_hessenberg(&mut self) {
        let n = self.n;
        for m in 2..n {
            let mut x: f64 = 0.0;
            let mut i = m;
            for j in m..=n {
                if self[(j, m - 1)].abs() > x.abs() {
                    x = self[(j, m - 1)];
                    i = j;
                }
            }
            if i != m {
                for j in m - 1..=n {
                    let t = self[(i, j)];
                    self[(i, j)] = self[(m, j)];
                    self[(m, j)] = t;
                }
                for j in 1..=n {
                    let t = self[(j, i)];
                    self[(j, i)] = self[(j, m)];
                    self[(j, m)] = t;
                }
            }
            if x != 0.0 {
                for i in m + 1..=n {
                    let mut y = self[(i, m - 1)];
                    if y != 0.0 {
                        y /= x;
                        self[(i, m - 1)] = y;
                        for j in m..=n {
                            let v = self[(m, j)];
                            self[(i, j)] -= y * v;
                        }
                        for j in 1..=n {
                            let v = self[(j, i)];
                            self[(j, m)] += y * v;
                        }
                    }
                }
            }
        }
        for i in 3..=n {
            for j in 1..i - 1 {
                self[(i, j)] = 0.0;
            }
        }
    }

    fn hessenberg_qr(mut self) -> Result<Vec<Complex64>> {
        let n = self.n;
        let mut wr = vec![0.0; n + 1];
        let mut wi = vec![0.0; n + 1];
        let mut anorm = 0.0;
        for i in 1..=n {
            for j in i.saturating_sub(1).max(1)..=n {
                anorm += self[(i, j)].abs();
            }
        }
        let mut nn = n as isize;
        let mut t = 0.0;
        let a = |s: &Self, i: isize, j: isize| s[(i as usize, j as usize)];
        while nn >= 1 {
            let mut its = 0;
            loop {
                let mut l = nn;
                while l >= 2 {
                    let mut s = a(&self, l - 1, l - 1).abs() + a(&self, l, l).abs();
                    if s == 0.0 {
                        s = anorm;
                    }
                    if a(&self, l, l - 1).abs() + s == s {
                        self[(l as usize, (l - 1) as usize)] = 0.0;
                        break;
                    }
                    l -= 1;
                }
                let mut x = a(&self, nn, nn);
                if l == nn {
                    wr[nn as usize] = x + t;
                    wi[nn as usize] = 0.0;
                    nn -= 1;
                } else {
                    let mut y = a(&self, nn - 1, nn - 1);
                    let mut w = a(&self, nn, nn - 1) * a(&self, nn - 1, nn);
                    if l == nn - 1 {
                        let p = 0.5 * (y - x);
                        let q = p * p + w;
                        let mut z = q.abs().sqrt();
                        x += t;
                        let (i1, i2) = ((nn - 1) as usize, nn as usize);
                        if q >= 0.0 {
                            z = p + z.copysign(p);
                            wr[i1] = x + z;
                            wr[i2] = x + z;
                            if z != 0.0 {
                                wr[i2] = x - w / z;
                            }
                            wi[i1] = 0.0;
                            wi[i2] = 0.0;
                        } else {
                            wr[i1] = x + p;
                            wr[i2] = x + p;
                            wi[i1] = -z;
                            wi[i2] = z;
                        }
                        nn -= 2;
                    } else {
                        if its == QR_MAX_ITERS_PER_EIGENVALUE {
                            return Err(Error::NoConvergence { iterations: its, last_estimate: x + t });
                        }
                        if its > 0 && its % 10 == 0 {
                            // Exceptional shift.
                            t += x;
                            for i in 1..=nn {
                                self[(i as usize, i as usize)] -= x;
                            }
                            let s = a(&self, nn, nn - 1).abs() + a(&self, nn - 1, nn - 2).abs();
                            x = 0.75 * s;
                            y = x;
                            w = -0.4375 * s * s;
                        }
                        its += 1;
                        let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
                        let mut z;
                        let mut m = nn - 2;
                        while m >= l {
                            z = a(&self, m, m);
                            let rr = x - z;
                            let ss = y - z;
                            p = (rr * ss - w) / a(&self, m + 1, m) + a(&self, m, m + 1);
                            q = a(&self, m + 1, m + 1) - z - rr - ss;
                            r = a(&self, m + 2, m + 1);
                            let s = p.abs() + q.abs() + r.abs();
                            p /= s;
                            q /= s;
                            r /= s;
                            if m == l {
                                break;
                            }
                            let u = a(&self, m, m - 1).abs() * (q.abs() + r.abs());
                            let v = p.abs()
                                * (a(&self, m - 1, m - 1).abs() + z.abs() + a(&self, m + 1, m + 1).abs());
                            if u + v == v {
                                break;
                            }
                            m -= 1;
                        }
                        for i in m + 2..=nn {
                            self[(i as usize, (i - 2) as usize)] = 0.0;
                            if i != m + 2 {
                                self[(i as usize, (i - 3) as usize)] = 0.0;
                            }
                        }
                        let mut k = m;
                        while k <= nn - 1 {
                            if k != m {
                                p = a(&self, k, k - 1);
                                q = a(&self, k + 1, k - 1);
                                r = 0.0;
                                if k != nn - 1 {
                                    r = a(&self, k + 2, k - 1);
                                }
                                x = p.abs() + q.abs() + r.abs();
                                if x != 0.0 {
                                    p /= x;
                                    q /= x;
                                    r /= x;
                                }
                            }
                            let s = (p * p + q * q + r * r).sqrt().copysign(p);
                            if s != 0.0 {
                                let (ku, k1) = (k as usize, (k - 1).max(0) as usize);
                                if k == m {
                                    if l != m {
                                        self[(ku, k1)] = -self[(ku, k1)];
                                    }
                                } else {
                                    self[(ku, k1)] = -s * x;
                                }
                                p += s;
                                x = p / s;
                                y = q / s;
                                z = r / s;
                                q /= p;
                                r /= p;
                                for j in k..=nn {
                                    let ju = j as usize;
                                    p = a(&self, k, j) + q * a(&self, k + 1, j);
                                    if k != nn - 1 {
                                        p += r * a(&self, k + 2, j);
                                        self[(ku + 2, ju)] -= p * z;
                                    }
                                    self[(ku + 1, ju)] -= p * y;
                                    self[(ku, ju)] -= p * x;
                                }
                                let mmin = if nn < k + 3 { nn } else { k + 3 };
                                for i in l..=mmin {
                                    let iu = i as usize;
                                    p = x * a(&self, i, k) + y * a(&self, i, k + 1);
                                    if k != nn - 1 {
                                        p += z * a(&self, i, k + 2);
                                        self[(iu, ku + 2)] -= p * r;
                                    }
                                    self[(iu, ku + 1)] -= p * q;
                                    self[(iu, ku)] -= p;
                                }
                            }
                            k += 1;
                        }
                    }
                }
                if l >= nn - 1 {
                    break;
                }
            }
        }
        Ok((1..=n).map(|i| Complex64::new(wr[i], wi[i])).collect())
    }
}
