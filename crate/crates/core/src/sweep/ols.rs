//! Ordinary least squares with optional standardisation and pairwise
//! interaction terms.

use serde::{Deserialize, Serialize};

use super::stats::{f_upper_tail, mean, student_t_two_sided};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub response: String,
    pub coefficients: Vec<Coefficient>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub residual_std_error: f64,
    /// `None` for the intercept-only model.
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
    pub n_obs: usize,
    pub df_residual: usize,
}

impl OlsFit {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

fn standardise(x: &[f64]) -> Option<Vec<f64>> {
    let m = mean(x);
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt();
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(x.iter().map(|v| (v - m) / sd).collect())
}

/// Fits `response ~ 1 + covariates (+ pairwise products)`.
///
/// With `standardize`, every column including the response and each
/// interaction product is centred and divided by its sample standard
/// deviation, and terms are labelled `scale(name)`.
pub fn ols_regression(
    response: (&str, &[f64]),
    covariates: &[(&str, &[f64])],
    standardize: bool,
    interactions: bool,
) -> Result<OlsFit> {
    let n = response.1.len();
    for (name, col) in covariates {
        if col.len() != n {
            return Err(Error::InvalidArg(format!("covariate '{name}' has {} values, response has {n}", col.len())));
        }
    }
    if response.1.iter().chain(covariates.iter().flat_map(|c| c.1.iter())).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput("regression data"));
    }
    let mut terms: Vec<(String, Vec<f64>)> = covariates.iter().map(|(k, v)| (k.to_string(), v.to_vec())).collect();
    if interactions {
        for i in 0..covariates.len() {
            for j in i + 1..covariates.len() {
                let prod = covariates[i].1.iter().zip(covariates[j].1).map(|(a, b)| a * b).collect();
                terms.push((format!("{}*{}", covariates[i].0, covariates[j].0), prod));
            }
        }
    }
    let p = terms.len() + 1;
    if n <= p {
        return Err(Error::InsufficientData(format!("{n} observations for {p} coefficients")));
    }
    let label = |s: &str| if standardize { format!("scale({s})") } else { s.to_string() };
    let y: Vec<f64> = if standardize {
        standardise(response.1).ok_or_else(|| Error::DegenerateSample(format!("response '{}' is constant", response.0)))?
    } else {
        response.1.to_vec()
    };
    let mut names = vec!["(Intercept)".to_string()];
    let mut columns = vec![vec![1.0; n]];
    for (name, col) in terms {
        let col = if standardize { standardise(&col).ok_or(Error::SingularDesign)? } else { col };
        names.push(label(&name));
        columns.push(col);
    }

    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![0.0; p];
    for i in 0..p {
        xty[i] = linalg::dot(&columns[i], &y);
        for j in 0..=i {
            let v = linalg::dot(&columns[i], &columns[j]);
            xtx[(i, j)] = v;
            xtx[(j, i)] = v;
        }
    }
    let lu = linalg::Lu::factor(&xtx).map_err(|_| Error::SingularDesign)?;
    let beta = lu.solve(&xty).map_err(|_| Error::SingularDesign)?;
    let inv = lu.solve_matrix(&Matrix::identity(p)).map_err(|_| Error::SingularDesign)?;
    if (0..p).any(|i| !(inv[(i, i)] > 0.0) || !inv[(i, i)].is_finite()) {
        return Err(Error::SingularDesign);
    }
    // Near-collinear columns survive LU pivoting but blow up the inverse.
    let cond_proxy = xtx.norm_inf() * inv.norm_inf();
    if cond_proxy > 1e12 {
        return Err(Error::SingularDesign);
    }

    let fitted: Vec<f64> = (0..n).map(|r| (0..p).map(|c| columns[c][r] * beta[c]).sum()).collect();
    let rss: f64 = y.iter().zip(&fitted).map(|(a, b)| (a - b) * (a - b)).sum();
    let ym = mean(&y);
    let tss: f64 = y.iter().map(|v| (v - ym) * (v - ym)).sum();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - 1.0) / df as f64;
    let coefficients = (0..p)
        .map(|i| {
            let se = (sigma2 * inv[(i, i)]).sqrt();
            let t = if se > 0.0 { beta[i] / se } else if beta[i] == 0.0 { 0.0 } else { beta[i].signum() * f64::INFINITY };
            Coefficient { term: names[i].clone(), estimate: beta[i], std_error: se, t_value: t, p_value: student_t_two_sided(t, df as f64) }
        })
        .collect();
    let (f_statistic, f_p_value) = if p > 1 {
        let f = if rss > 0.0 { ((tss - rss) / (p - 1) as f64) / sigma2 } else { f64::INFINITY };
        (Some(f), Some(if f.is_infinite() { 0.0 } else { f_upper_tail(f, (p - 1) as f64, df as f64) }))
    } else {
        (None, None)
    };
    Ok(OlsFit {
        response: label(response.0),
        coefficients,
        r_squared,
        adj_r_squared,
        residual_std_error: sigma2.sqrt(),
        f_statistic,
        f_p_value,
        n_obs: n,
        df_residual: df,
    })
}
