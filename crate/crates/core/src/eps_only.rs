//! EPS-only analysis: only the extreme rows are observed, and each
//! contributes a normal density truncated to the two tails.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, schur_complement, Cholesky, Matrix};
use crate::linreg::ols;
use crate::model::{FitResult, ModelSpec, ParameterVector, RegressionView, TestMethod, TestResult};
use crate::stats::normal::{log_add_exp, norm_log_cdf, norm_log_pdf, norm_log_sf};
use crate::stats::optimize::{finite_diff_jacobian, maximize, MaximizeOptions, Objective};

/// Per-row pieces of the truncated-normal likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowTerms {
    /// Log-likelihood contribution.
    pub loglik: f64,
    /// Residual `y − μ`.
    pub f: f64,
    /// `h_j = (−φ(u)uʲ + φ(l)lʲ) / D` for `j = 0..3`, with standardized
    /// cutoffs `u`, `l` and `D = Φ(l) + 1 − Φ(u)`.
    pub h: [f64; 4],
}

impl RowTerms {
    pub fn a(&self) -> f64 {
        1.0 - self.h[1] - self.h[0] * self.h[0]
    }

    pub fn b(&self) -> f64 {
        self.h[0] - self.h[2] - self.h[0] * self.h[1]
    }

    pub fn c(&self) -> f64 {
        -1.0 + 2.0 * self.h[1] - self.h[3] - self.h[1] * self.h[1]
    }

    pub fn d(&self) -> f64 {
        2.0 + 2.0 * self.h[1] - self.h[3] - self.h[1] * self.h[1]
    }
}

/// `log D` and the `h` functions for mean `mu`.
pub fn truncation_terms(mu: f64, sigma: f64, c_lower: f64, c_upper: f64) -> (f64, [f64; 4]) {
    if c_lower == c_upper {
        return (0.0, [0.0; 4]);
    }
    let l = (c_lower - mu) / sigma;
    let u = (c_upper - mu) / sigma;
    let log_lo = if l == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        norm_log_cdf(l)
    };
    let log_hi = if u == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        norm_log_sf(u)
    };
    let log_d = log_add_exp(log_lo, log_hi);
    // φ(z)/D in log space; an infinite cutoff contributes nothing.
    let ratio = |z: f64| {
        if z.is_finite() {
            (norm_log_pdf(z) - log_d).exp()
        } else {
            0.0
        }
    };
    let (ru, rl) = (ratio(u), ratio(l));
    let (uf, lf) = (if u.is_finite() { u } else { 0.0 }, if l.is_finite() { l } else { 0.0 });
    let mut h = [0.0; 4];
    let (mut up, mut lp) = (1.0, 1.0);
    for hj in &mut h {
        *hj = -ru * up + rl * lp;
        up *= uf;
        lp *= lf;
    }
    (log_d, h)
}

pub fn row_terms(y: f64, mu: f64, sigma: f64, c_lower: f64, c_upper: f64) -> RowTerms {
    let f = y - mu;
    let (log_d, h) = truncation_terms(mu, sigma, c_lower, c_upper);
    RowTerms {
        loglik: norm_log_pdf(f / sigma) - sigma.ln() - log_d,
        f,
        h,
    }
}

fn check_rows(y: &[f64], c_lower: f64, c_upper: f64) -> Result<()> {
    if c_lower.is_nan() || c_upper.is_nan() || c_lower > c_upper {
        return Err(invalid(format!("invalid cutoffs {c_lower}, {c_upper}")));
    }
    if let Some(i) = y.iter().position(|&v| v > c_lower && v < c_upper) {
        return Err(invalid(format!(
            "row {} with phenotype {} lies between the cutoffs and is not an extreme",
            i + 1,
            y[i]
        )));
    }
    Ok(())
}

/// Truncated likelihood over a design, parameterized as `(β, log σ)`.
struct Truncated<'a> {
    y: &'a [f64],
    x: &'a Matrix,
    c_lower: f64,
    c_upper: f64,
}

impl Truncated<'_> {
    fn eval(&self, p: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let k = self.x.cols();
        let sigma = p[k].exp();
        let beta = &p[..k];
        let mut total = 0.0;
        let mut g = grad;
        if let Some(g) = g.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        for (i, &y) in self.y.iter().enumerate() {
            let xi = self.x.row(i);
            let r = row_terms(y, dot(xi, beta), sigma, self.c_lower, self.c_upper);
            total += r.loglik;
            if let Some(g) = g.as_deref_mut() {
                let w = r.f / (sigma * sigma) + r.h[0] / sigma;
                for (gj, xj) in g[..k].iter_mut().zip(xi) {
                    *gj += w * xj;
                }
                g[k] += -1.0 + r.f * r.f / (sigma * sigma) + r.h[1];
            }
        }
        total
    }
}

impl Objective for Truncated<'_> {
    fn dim(&self) -> usize {
        self.x.cols() + 1
    }
    fn value(&self, p: &[f64]) -> f64 {
        self.eval(p, None)
    }
    fn gradient(&self, p: &[f64], grad: &mut [f64]) {
        self.eval(p, Some(grad));
    }
    fn value_and_gradient(&self, p: &[f64], grad: &mut [f64]) -> f64 {
        self.eval(p, Some(grad))
    }
}

/// Truncated-normal log-likelihood of the view's rows.
pub fn loglik_eps_only(params: &ParameterVector, view: &RegressionView, c_lower: f64, c_upper: f64) -> Result<f64> {
    check_rows(&view.y, c_lower, c_upper)?;
    let coefs = params.coefficients();
    if coefs.len() != view.x.cols() {
        return Err(invalid("parameter vector does not match the design"));
    }
    let mut p = coefs;
    p.push(params.sigma.ln());
    Ok(Truncated {
        y: &view.y,
        x: &view.x,
        c_lower,
        c_upper,
    }
    .value(&p))
}

/// Analytic gradient in `(β, σ)`.
pub fn gradient_eps_only(
    params: &ParameterVector,
    view: &RegressionView,
    c_lower: f64,
    c_upper: f64,
) -> Result<Vec<f64>> {
    check_rows(&view.y, c_lower, c_upper)?;
    let mut p = params.coefficients();
    if p.len() != view.x.cols() {
        return Err(invalid("parameter vector does not match the design"));
    }
    p.push(params.sigma.ln());
    let mut g = vec![0.0; p.len()];
    Truncated {
        y: &view.y,
        x: &view.x,
        c_lower,
        c_upper,
    }
    .gradient(&p, &mut g);
    let k = p.len() - 1;
    g[k] /= params.sigma;
    Ok(g)
}

fn ols_start(y: &[f64], x: &Matrix, names: &[String]) -> Result<Vec<f64>> {
    let fit = ols(y, x, names)?;
    let s = fit
        .sigma2_mle()
        .sqrt()
        .max(1e-8 * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()))));
    let mut p = fit.coefficients;
    p.push(s.ln());
    Ok(p)
}

/// Converts information in `(β, log σ)` to `(β, σ)` at a stationary point.
pub(crate) fn log_sigma_to_sigma(info: &Matrix, sigma_index: usize, sigma: f64) -> Matrix {
    Matrix::from_fn(info.rows(), info.cols(), |i, j| {
        let mut v = info[(i, j)];
        if i == sigma_index {
            v /= sigma;
        }
        if j == sigma_index {
            v /= sigma;
        }
        v
    })
}

/// Maximum-likelihood fit of the truncated model.
pub fn fit_eps_only(
    view: &RegressionView,
    spec: &ModelSpec,
    c_lower: f64,
    c_upper: f64,
    opts: &MaximizeOptions,
    level: f64,
) -> Result<FitResult> {
    check_rows(&view.y, c_lower, c_upper)?;
    let obj = Truncated {
        y: &view.y,
        x: &view.x,
        c_lower,
        c_upper,
    };
    let start = ols_start(&view.y, &view.x, &view.names)?;
    let mut o = *opts;
    o.information = true;
    let rep = maximize(&obj, &start, &o)?;
    let k = view.x.cols();
    let sigma = rep.argmax[k].exp();
    let info = log_sigma_to_sigma(rep.observed_information.as_ref().expect("requested"), k, sigma);
    let mut names = view.names.clone();
    names.push(String::from("sigma"));
    let estimates = ParameterVector::from_coefficients(spec, &rep.argmax[..k], sigma)?;
    Ok(FitResult::new(
        estimates,
        names,
        info,
        rep.max_value,
        rep.converged,
        rep.iterations,
        level,
    ))
}

/// Which information matrix the score test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Information {
    /// Second derivatives with `f` and `f²` replaced by their untruncated
    /// expectations `0` and `σ²`.
    #[default]
    Expected,
    /// Exact negative Hessian at the null estimate.
    Observed,
}

/// The truncated null model, fitted once and reused for many tested columns.
#[derive(Debug, Clone)]
pub struct EpsOnlyNull {
    y: Vec<f64>,
    z: Matrix,
    names: Vec<String>,
    c_lower: f64,
    c_upper: f64,
    coefficients: Vec<f64>,
    sigma: f64,
    loglik: f64,
    rows: Vec<RowTerms>,
}

/// Score statistic together with its ingredients.
#[derive(Debug, Clone)]
pub struct EpsOnlyScore {
    pub result: TestResult,
    pub score: Vec<f64>,
    /// Efficient information `I_ββ − I_βθ I_θθ⁻¹ I_θβ`.
    pub variance: Matrix,
    /// Full information, ordered tested columns, nuisance columns, `σ`.
    pub information: Matrix,
}

impl EpsOnlyNull {
    pub fn fit(
        y: &[f64],
        z: &Matrix,
        names: &[String],
        c_lower: f64,
        c_upper: f64,
        opts: &MaximizeOptions,
    ) -> Result<Self> {
        check_rows(y, c_lower, c_upper)?;
        let obj = Truncated {
            y,
            x: z,
            c_lower,
            c_upper,
        };
        let start = ols_start(y, z, names)?;
        let mut o = *opts;
        o.information = false;
        let rep = maximize(&obj, &start, &o)?;
        if !rep.converged {
            return Err(Error::NotConverged {
                iterations: rep.iterations,
                gradient_norm: rep.gradient_norm,
            });
        }
        let k = z.cols();
        let sigma = rep.argmax[k].exp();
        let coefficients = rep.argmax[..k].to_vec();
        let rows = y
            .iter()
            .enumerate()
            .map(|(i, &yi)| row_terms(yi, dot(z.row(i), &coefficients), sigma, c_lower, c_upper))
            .collect();
        Ok(EpsOnlyNull {
            y: y.to_vec(),
            z: z.clone(),
            names: names.to_vec(),
            c_lower,
            c_upper,
            coefficients,
            sigma,
            loglik: rep.max_value,
            rows,
        })
    }

    pub fn from_view(view: &RegressionView, c_lower: f64, c_upper: f64) -> Result<Self> {
        Self::fit(
            &view.y,
            &view.z(),
            &view.nuisance_names(),
            c_lower,
            c_upper,
            &MaximizeOptions::default(),
        )
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn rows(&self) -> &[RowTerms] {
        &self.rows
    }

    /// Information over `(x0, z, σ)` at `(0, θ̂₀)`.
    pub fn information(&self, x0: &Matrix, kind: Information) -> Matrix {
        let q = x0.cols();
        let k = self.z.cols();
        let s2 = self.sigma * self.sigma;
        let s3 = s2 * self.sigma;
        let s4 = s2 * s2;
        let dim = q + k + 1;
        let mut info = Matrix::zeros(dim, dim);
        let mut v = vec![0.0; q + k];
        for (i, r) in self.rows.iter().enumerate() {
            v[..q].copy_from_slice(x0.row(i));
            v[q..].copy_from_slice(self.z.row(i));
            let a = r.a();
            let (bs, ss) = match kind {
                Information::Expected => (r.b() / s2, r.d() / s2),
                Information::Observed => (2.0 * r.f / s3 + r.b() / s2, 3.0 * r.f * r.f / s4 + r.c() / s2),
            };
            for p in 0..q + k {
                let vp = v[p] * a / s2;
                for j in p..q + k {
                    info[(p, j)] += vp * v[j];
                }
                info[(p, dim - 1)] += bs * v[p];
            }
            info[(dim - 1, dim - 1)] += ss;
        }
        for p in 0..dim {
            for j in 0..p {
                info[(p, j)] = info[(j, p)];
            }
        }
        info
    }

    /// Score test of adding the columns `x0` (rows aligned with the null).
    pub fn score_test(&self, x0: &Matrix, tested_names: &[String], kind: Information) -> Result<EpsOnlyScore> {
        if x0.rows() != self.n() {
            return Err(invalid("tested columns have the wrong number of rows"));
        }
        let q = x0.cols();
        let s2 = self.sigma * self.sigma;
        let mut score = vec![0.0; q];
        for (i, r) in self.rows.iter().enumerate() {
            let w = r.f / s2 + r.h[0] / self.sigma;
            for (s, x) in score.iter_mut().zip(x0.row(i)) {
                *s += w * x;
            }
        }
        let info = self.information(x0, kind);
        let tested: Vec<usize> = (0..q).collect();
        let rest: Vec<usize> = (q..info.rows()).collect();
        let variance = schur_complement(
            &info.select(&tested, &tested),
            &info.select(&tested, &rest),
            &info.select(&rest, &rest),
        )
        .map_err(|_| Error::Singular {
            what: "null information",
            columns: self.names.clone(),
        })?;
        let chol = Cholesky::new(&variance).map_err(|j| Error::Singular {
            what: "score variance",
            columns: tested_names.get(j).cloned().into_iter().collect(),
        })?;
        let result = TestResult::new(chol.inv_quad_form(&score), q as u32, TestMethod::Score, self.n())?;
        Ok(EpsOnlyScore {
            result,
            score,
            variance,
            information: info,
        })
    }

    /// Compares the closed-form information matrices with central
    /// differences of the analytic gradient at the null estimate. Returns
    /// the largest entrywise relative discrepancy for the expected and the
    /// observed forms.
    pub fn information_diagnostic(&self, x0: &Matrix) -> InformationDiagnostic {
        let q = x0.cols();
        let k = self.z.cols();
        let x = Matrix::from_fn(
            self.n(),
            q + k,
            |i, j| if j < q { x0[(i, j)] } else { self.z[(i, j - q)] },
        );
        let obj = Truncated {
            y: &self.y,
            x: &x,
            c_lower: self.c_lower,
            c_upper: self.c_upper,
        };
        // Differentiate the σ-parameterized gradient in σ directly.
        let sigma_grad = |p: &[f64]| {
            let mut lp = p.to_vec();
            lp[q + k] = p[q + k].ln();
            let mut g = vec![0.0; q + k + 1];
            obj.gradient(&lp, &mut g);
            g[q + k] /= p[q + k];
            g
        };
        let mut point = vec![0.0; q];
        point.extend_from_slice(&self.coefficients);
        point.push(self.sigma);
        let mut fd = finite_diff_jacobian(sigma_grad, &point, None).scale(-1.0);
        fd.symmetrize();
        let rel = |m: &Matrix| {
            let scale = fd.max_abs().max(f64::MIN_POSITIVE);
            m.sub(&fd).max_abs() / scale
        };
        InformationDiagnostic {
            expected_vs_numeric: rel(&self.information(x0, Information::Expected)),
            observed_vs_numeric: rel(&self.information(x0, Information::Observed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InformationDiagnostic {
    pub expected_vs_numeric: f64,
    pub observed_vs_numeric: f64,
}

/// Score test of the view's tested terms using the expected information.
pub fn score_test_eps_only(view: &RegressionView, c_lower: f64, c_upper: f64) -> Result<TestResult> {
    if view.tested.is_empty() {
        return Err(invalid("no tested terms"));
    }
    let null = EpsOnlyNull::from_view(view, c_lower, c_upper)?;
    Ok(null
        .score_test(&view.x0(), &view.tested_names(), Information::Expected)?
        .result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::normal::{norm_cdf, norm_pdf, norm_sf};

    #[test]
    fn h_functions_match_direct_formula() {
        let (mu, s, cl, cu) = (0.3, 1.7, -1.0, 2.0);
        let (log_d, h) = truncation_terms(mu, s, cl, cu);
        let (l, u) = ((cl - mu) / s, (cu - mu) / s);
        let d = norm_cdf(l) + norm_sf(u);
        assert!((log_d - d.ln()).abs() < 1e-14);
        for (j, hj) in h.iter().enumerate() {
            let want = (-norm_pdf(u) * u.powi(j as i32) + norm_pdf(l) * l.powi(j as i32)) / d;
            assert!((hj - want).abs() < 1e-13);
        }
        assert!((row_terms(1.0, 0.0, 1.0, 0.0, 0.0).loglik - norm_log_pdf(1.0)).abs() < 1e-15);
    }

    #[test]
    fn d_is_c_plus_three() {
        for (y, mu) in [(-2.0, 0.1), (3.1, 0.4), (-0.9, -0.5)] {
            let r = row_terms(y, mu, 1.3, -0.8, 1.5);
            assert!((r.d() - (r.c() + 3.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn one_sided_truncation_has_finite_terms() {
        let (log_d, h) = truncation_terms(0.0, 1.0, f64::NEG_INFINITY, 1.0);
        assert!((log_d - norm_sf(1.0).ln()).abs() < 1e-14);
        assert!(h.iter().all(|v| v.is_finite()));
        let r = row_terms(3.0, 0.0, 1.0, f64::NEG_INFINITY, 1.0);
        assert!(r.loglik.is_finite());
    }

    #[test]
    fn far_tails_stay_finite() {
        let (log_d, h) = truncation_terms(0.0, 1.0, -45.0, 45.0);
        assert!(log_d.is_finite() && log_d < -1000.0);
        assert!(h.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn interior_rows_are_rejected() {
        assert!(check_rows(&[-2.0, 0.5, 3.0], -1.0, 1.0).is_err());
        assert!(check_rows(&[-2.0, 3.0], -1.0, 1.0).is_ok());
    }
}
