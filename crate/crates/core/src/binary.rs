//! Dichotomized EPS analysis: upper extremes coded 1, lower extremes 0,
//! analysed by logistic regression.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, schur_complement, sup_norm, Cholesky, Matrix};
use crate::model::{TestMethod, TestResult};

/// Codes rows at or above `c_upper` as 1 and at or below `c_lower` as 0.
/// With equal cutoffs, a row exactly at the cutoff is coded 1.
pub fn dichotomize(y: &[f64], c_lower: f64, c_upper: f64) -> Result<Vec<f64>> {
    y.iter()
        .enumerate()
        .map(|(i, &v)| {
            if v >= c_upper {
                Ok(1.0)
            } else if v <= c_lower {
                Ok(0.0)
            } else {
                Err(invalid(format!("row {} with phenotype {v} is not an extreme", i + 1)))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    /// `XᵀWX` at the estimate.
    pub information: Matrix,
    pub fitted: Vec<f64>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted step.
    pub loglik_trace: Vec<f64>,
}

/// Coefficients beyond this size indicate (quasi-)separation.
pub const SEPARATION_BOUND: f64 = 30.0;
const MAX_ITER: usize = 100;
const STEP_TOL: f64 = 1e-10;

fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn loglik(y: &[f64], eta: &[f64]) -> f64 {
    y.iter().zip(eta).map(|(&yi, &e)| yi * e - softplus(e)).sum()
}

/// Logistic regression by iteratively reweighted least squares with step
/// halving.
pub fn fit_logistic(y: &[f64], x: &Matrix, names: &[String]) -> Result<LogisticFit> {
    if y.len() != x.rows() {
        return Err(invalid("response and design have different lengths"));
    }
    if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
        return Err(invalid(format!("binary response at row {} is not 0 or 1", i + 1)));
    }
    let p = x.cols();
    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; y.len()];
    let mut ll = loglik(y, &eta);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    let separated = |beta: &[f64]| -> Option<Error> {
        let (j, b) = beta.iter().enumerate().fold(
            (0, 0.0f64),
            |acc, (j, b)| if b.abs() > acc.1 { (j, b.abs()) } else { acc },
        );
        (b > SEPARATION_BOUND).then(|| Error::Separation {
            column: names.get(j).cloned().unwrap_or_else(|| format!("column {j}")),
        })
    };
    while iterations < MAX_ITER {
        iterations += 1;
        let pi: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = pi.iter().map(|&q| q * (1.0 - q)).collect();
        let resid: Vec<f64> = y.iter().zip(&pi).map(|(a, b)| a - b).collect();
        let chol = Cholesky::new(&x.weighted_gram(Some(&w))).map_err(|j| {
            separated(&beta).unwrap_or_else(|| Error::Singular {
                what: "logistic information",
                columns: names.get(j).cloned().into_iter().collect(),
            })
        })?;
        let step = chol.solve(&x.tr_matvec(&resid));
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + t * s).collect();
            let ce = x.matvec(&cand);
            let cl = loglik(y, &ce);
            if cl.is_finite() && cl >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = cand;
                eta = ce;
                ll = cl;
                trace.push(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if let Some(e) = separated(&beta) {
            return Err(e);
        }
        if !accepted || t * sup_norm(&step) < STEP_TOL {
            converged = accepted || sup_norm(&step) < STEP_TOL;
            break;
        }
    }
    let fitted: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
    let w: Vec<f64> = fitted.iter().map(|&q| q * (1.0 - q)).collect();
    Ok(LogisticFit {
        information: x.weighted_gram(Some(&w)),
        coefficients: beta,
        fitted,
        loglik: ll,
        converged,
        iterations,
        loglik_trace: trace,
    })
}

/// Score test of adding the columns `x0` to a logistic null model on `z`.
pub fn score_test_logistic(
    y: &[f64],
    z: &Matrix,
    x0: &Matrix,
    z_names: &[String],
    x0_names: &[String],
) -> Result<TestResult> {
    let null = fit_logistic(y, z, z_names)?;
    score_test_logistic_with(&null, y, z, x0, x0_names)
}

/// As [`score_test_logistic`] with a null fit computed once.
pub fn score_test_logistic_with(
    null: &LogisticFit,
    y: &[f64],
    z: &Matrix,
    x0: &Matrix,
    x0_names: &[String],
) -> Result<TestResult> {
    if x0.rows() != y.len() {
        return Err(invalid("tested columns have the wrong number of rows"));
    }
    let resid: Vec<f64> = y.iter().zip(&null.fitted).map(|(a, b)| a - b).collect();
    let w: Vec<f64> = null.fitted.iter().map(|&q| q * (1.0 - q)).collect();
    let score = x0.tr_matvec(&resid);
    let sigma = schur_complement(
        &x0.weighted_gram(Some(&w)),
        &x0.weighted_cross(z, Some(&w)),
        &null.information,
    )
    .map_err(|_| Error::Singular {
        what: "logistic null information",
        columns: Vec::new(),
    })?;
    let chol = Cholesky::new(&sigma).map_err(|j| Error::Singular {
        what: "score variance",
        columns: x0_names.get(j).cloned().into_iter().collect(),
    })?;
    let t = dot(&score, &chol.solve(&score));
    TestResult::new(t, x0.cols() as u32, TestMethod::Score, y.len())
}
