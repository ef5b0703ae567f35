//! Ordinary least squares for complete (or randomly subsampled) cohorts.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, schur_complement, Cholesky, Matrix};
use crate::model::{FitResult, ParameterVector, RegressionView, TestMethod, TestResult};
use crate::stats::normal::LN_SQRT_2PI;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    gram: Cholesky,
}

impl OlsFit {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    /// Maximum-likelihood variance `RSS / n`.
    pub fn sigma2_mle(&self) -> f64 {
        self.rss / self.n() as f64
    }

    /// `(XᵀX)⁻¹`.
    pub fn gram_inverse(&self) -> Matrix {
        self.gram.inverse()
    }

    pub fn gram(&self) -> &Cholesky {
        &self.gram
    }
}

/// Least squares via the normal equations. `names` label the columns of
/// `x` for collinearity errors.
pub fn ols(y: &[f64], x: &Matrix, names: &[String]) -> Result<OlsFit> {
    if y.len() != x.rows() {
        return Err(invalid("response and design have different lengths"));
    }
    if x.rows() <= x.cols() {
        return Err(invalid(format!(
            "{} rows are too few for {} coefficients",
            x.rows(),
            x.cols()
        )));
    }
    let gram = Cholesky::new(&x.weighted_gram(None)).map_err(|j| Error::Singular {
        what: "design matrix",
        columns: names.get(j).cloned().into_iter().collect(),
    })?;
    let coefficients = gram.solve(&x.tr_matvec(y));
    let fitted = x.matvec(&coefficients);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let rss = dot(&residuals, &residuals);
    Ok(OlsFit {
        coefficients,
        residuals,
        rss,
        gram,
    })
}

/// Normal linear-model maximum likelihood. The information reported is the
/// observed information at the MLE in `(β, σ)`, i.e. `diag(XᵀX/σ², 2n/σ²)`.
pub fn fit_linear(view: &RegressionView, spec: &crate::model::ModelSpec, level: f64) -> Result<FitResult> {
    let fit = ols(&view.y, &view.x, &view.names)?;
    let n = view.n() as f64;
    let s2 = fit.sigma2_mle();
    if !(s2 > 0.0) {
        return Err(Error::Singular {
            what: "residual variance",
            columns: Vec::new(),
        });
    }
    let p = view.x.cols();
    let gram = view.x.weighted_gram(None);
    let info = Matrix::from_fn(p + 1, p + 1, |i, j| {
        if i < p && j < p {
            gram[(i, j)] / s2
        } else if i == p && j == p {
            2.0 * n / s2
        } else {
            0.0
        }
    });
    let sigma = s2.sqrt();
    let loglik = -n * (LN_SQRT_2PI + sigma.ln()) - 0.5 * n;
    let mut names = view.names.clone();
    names.push(String::from("sigma"));
    let estimates = ParameterVector::from_coefficients(spec, &fit.coefficients, sigma)?;
    Ok(FitResult::new(estimates, names, info, loglik, true, 1, level))
}

/// The null linear model, reusable across tested columns.
#[derive(Debug, Clone)]
pub struct LinearNull {
    z: Matrix,
    fit: OlsFit,
    names: Vec<String>,
}

impl LinearNull {
    pub fn fit(y: &[f64], z: &Matrix, names: &[String]) -> Result<Self> {
        Ok(LinearNull {
            z: z.clone(),
            fit: ols(y, z, names)?,
            names: names.to_vec(),
        })
    }

    pub fn ols(&self) -> &OlsFit {
        &self.fit
    }

    /// Rao score test of adding the columns `x0`, using `σ² = RSS₀/n`.
    pub fn score_test(&self, x0: &Matrix, tested_names: &[String]) -> Result<TestResult> {
        let n = self.fit.n();
        if x0.rows() != n {
            return Err(invalid("tested columns have the wrong number of rows"));
        }
        let s2 = self.fit.sigma2_mle();
        if !(s2 > 0.0) {
            return Err(Error::Singular {
                what: "residual variance",
                columns: self.names.clone(),
            });
        }
        let score: Vec<f64> = x0.tr_matvec(&self.fit.residuals).iter().map(|v| v / s2).collect();
        let a11 = x0.weighted_gram(None).scale(1.0 / s2);
        let a12 = x0.weighted_cross(&self.z, None).scale(1.0 / s2);
        let a22 = self.z.weighted_gram(None).scale(1.0 / s2);
        let sigma = schur_complement(&a11, &a12, &a22).map_err(|_| Error::Singular {
            what: "null design",
            columns: self.names.clone(),
        })?;
        let chol = Cholesky::new(&sigma).map_err(|j| Error::Singular {
            what: "score variance",
            columns: tested_names.get(j).cloned().into_iter().collect(),
        })?;
        TestResult::new(chol.inv_quad_form(&score), x0.cols() as u32, TestMethod::Score, n)
    }
}

/// Score test of the view's tested columns under the normal linear model.
pub fn score_test_linear(view: &RegressionView) -> Result<TestResult> {
    if view.tested.is_empty() {
        return Err(invalid("no tested terms"));
    }
    let null = LinearNull::fit(&view.y, &view.z(), &view.nuisance_names())?;
    null.score_test(&view.x0(), &view.tested_names())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ols_recovers_exact_line() {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]);
        let y = [1.0, 3.0, 5.0, 7.0];
        let fit = ols(&y, &x, &[String::from("a"), String::from("b")]).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-12 && (fit.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(fit.rss < 1e-20);
    }

    #[test]
    fn constant_column_is_named() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let err = ols(&[1.0, 2.0, 3.0], &x, &[String::from("intercept"), String::from("snp")]).unwrap_err();
        assert_eq!(
            err,
            Error::Singular {
                what: "design matrix",
                columns: vec![String::from("snp")]
            }
        );
    }

    #[test]
    fn score_equals_n_r_squared_for_single_regressor() {
        // With an intercept-only null the Rao statistic is n·r².
        let xs = [0.0, 1.0, 2.0, 1.0, 0.0, 2.0, 1.0];
        let y = [1.0, 2.5, 2.9, 1.7, 0.2, 3.3, 1.1];
        let n = xs.len() as f64;
        let z = Matrix::from_fn(7, 1, |_, _| 1.0);
        let x0 = Matrix::from_fn(7, 1, |i, _| xs[i]);
        let null = LinearNull::fit(&y, &z, &[String::from("intercept")]).unwrap();
        let t = null.score_test(&x0, &[String::from("g")]).unwrap();
        let mx = xs.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let sxy: f64 = xs.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = xs.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        let r2 = sxy * sxy / (sxx * syy);
        assert!((t.statistic - n * r2).abs() < 1e-12);
    }
}
