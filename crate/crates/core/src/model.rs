//! Data model shared by all methods: the sample, the extreme set, the
//! regression terms and the fit/test result types.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::stats::{chi2_sf, norm_quantile};

/// A biallelic genotype: minor-allele count or missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Genotype {
    Missing,
    Called(u8),
}

impl Genotype {
    pub fn called(count: u8) -> Result<Self> {
        if count > 2 {
            return Err(invalid(format!("genotype {count} is not in {{0, 1, 2}}")));
        }
        Ok(Genotype::Called(count))
    }

    pub fn value(self) -> Option<u8> {
        match self {
            Genotype::Called(v) => Some(v),
            Genotype::Missing => None,
        }
    }

    pub fn is_missing(self) -> bool {
        self == Genotype::Missing
    }
}

impl From<Option<u8>> for Genotype {
    fn from(v: Option<u8>) -> Self {
        v.map_or(Genotype::Missing, Genotype::Called)
    }
}

/// Phenotype, environmental covariates, genotypes and stratum labels for
/// the `N` rows of a cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    env_names: Vec<String>,
    env: Vec<Vec<f64>>,
    snp_names: Vec<String>,
    snps: Vec<Vec<Genotype>>,
    strata: Vec<usize>,
    n_strata: usize,
}

impl Dataset {
    /// A dataset with phenotype only, all rows in one stratum.
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("phenotype at row {} is not finite", i + 1)));
        }
        let n = y.len();
        Ok(Dataset {
            y,
            env_names: Vec::new(),
            env: Vec::new(),
            snp_names: Vec::new(),
            snps: Vec::new(),
            strata: vec![0; n],
            n_strata: usize::from(n > 0),
        })
    }

    pub fn with_env(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.n() {
            return Err(invalid(format!(
                "covariate `{name}` has {} values for {} rows",
                values.len(),
                self.n()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("covariate `{name}` at row {} is not finite", i + 1)));
        }
        if self.env_names.contains(&name) {
            return Err(invalid(format!("duplicate covariate `{name}`")));
        }
        self.env_names.push(name);
        self.env.push(values);
        Ok(self)
    }

    pub fn with_snp(mut self, name: impl Into<String>, values: Vec<Genotype>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.n() {
            return Err(invalid(format!(
                "SNP `{name}` has {} genotypes for {} rows",
                values.len(),
                self.n()
            )));
        }
        if let Some(i) = values.iter().position(|g| matches!(g, Genotype::Called(v) if *v > 2)) {
            return Err(invalid(format!(
                "SNP `{name}` at row {}: genotype not in {{0, 1, 2}}",
                i + 1
            )));
        }
        if self.snp_names.contains(&name) {
            return Err(invalid(format!("duplicate SNP `{name}`")));
        }
        self.snp_names.push(name);
        self.snps.push(values);
        Ok(self)
    }

    /// Stratum labels are `0..J`.
    pub fn with_strata(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(invalid(format!(
                "{} stratum labels for {} rows",
                labels.len(),
                self.n()
            )));
        }
        self.n_strata = labels.iter().max().map_or(0, |m| m + 1);
        self.strata = labels;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn env_names(&self) -> &[String] {
        &self.env_names
    }

    pub fn env(&self, col: usize) -> &[f64] {
        &self.env[col]
    }

    pub fn n_env(&self) -> usize {
        self.env.len()
    }

    pub fn snp_names(&self) -> &[String] {
        &self.snp_names
    }

    pub fn snp(&self, col: usize) -> &[Genotype] {
        &self.snps[col]
    }

    pub fn n_snps(&self) -> usize {
        self.snps.len()
    }

    pub fn strata(&self) -> &[usize] {
        &self.strata
    }

    pub fn n_strata(&self) -> usize {
        self.n_strata
    }

    pub fn env_index(&self, name: &str) -> Option<usize> {
        self.env_names.iter().position(|n| n == name)
    }

    pub fn snp_index(&self, name: &str) -> Option<usize> {
        self.snp_names.iter().position(|n| n == name)
    }

    /// Rows in the given order; stratum labels are kept as they are.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            env_names: self.env_names.clone(),
            env: self.env.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            snp_names: self.snp_names.clone(),
            snps: self.snps.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            strata: rows.iter().map(|&i| self.strata[i]).collect(),
            n_strata: self.n_strata,
        }
    }

    /// Sets every genotype to missing in rows where `keep` is false.
    pub fn mask_genotypes(&self, keep: &[bool]) -> Dataset {
        assert_eq!(keep.len(), self.n());
        let mut out = self.clone();
        for col in &mut out.snps {
            for (g, &k) in col.iter_mut().zip(keep) {
                if !k {
                    *g = Genotype::Missing;
                }
            }
        }
        out
    }

    /// Mean of the observed genotypes of a SNP.
    pub fn genotype_mean(&self, col: usize) -> Option<f64> {
        let (s, c) = self.snps[col]
            .iter()
            .filter_map(|g| g.value())
            .fold((0.0, 0usize), |(s, c), v| (s + f64::from(v), c + 1));
        (c > 0).then(|| s / c as f64)
    }
}

/// The extreme set `𝒞 = {i : y_i ≤ c_l or y_i ≥ c_u}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeDesign {
    c_lower: f64,
    c_upper: f64,
    members: Vec<usize>,
    mask: Vec<bool>,
}

impl ExtremeDesign {
    /// Selects rows by fixed cutoffs.
    pub fn from_cutoffs(y: &[f64], c_lower: f64, c_upper: f64) -> Result<Self> {
        if c_lower.is_nan() || c_upper.is_nan() || c_lower > c_upper {
            return Err(invalid(format!(
                "cutoffs must satisfy c_lower <= c_upper, got {c_lower} and {c_upper}"
            )));
        }
        let mask: Vec<bool> = y.iter().map(|&v| v <= c_lower || v >= c_upper).collect();
        let members = (0..y.len()).filter(|&i| mask[i]).collect();
        Ok(ExtremeDesign {
            c_lower,
            c_upper,
            members,
            mask,
        })
    }

    pub fn c_lower(&self) -> f64 {
        self.c_lower
    }

    pub fn c_upper(&self) -> f64 {
        self.c_upper
    }

    /// Member rows in increasing order.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn contains(&self, row: usize) -> bool {
        self.mask[row]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn n_rows(&self) -> usize {
        self.mask.len()
    }

    /// Checks the defining invariants against a phenotype vector.
    pub fn is_consistent_with(&self, y: &[f64]) -> bool {
        y.len() == self.mask.len()
            && self.c_lower <= self.c_upper
            && y.iter().zip(&self.mask).all(|(&v, &m)| {
                let extreme = v <= self.c_lower || v >= self.c_upper;
                m == extreme
            })
    }
}

/// Takes the `lower_count` smallest and `upper_count` largest phenotypes.
///
/// Cutoffs are placed midway between the last selected and first
/// unselected value of each tail. When the tails cover every row the two
/// cutoffs coincide. A tie across a cutoff is an error since no cutoff can
/// then separate selected from unselected rows.
pub fn select_extremes(y: &[f64], lower_count: usize, upper_count: usize) -> Result<ExtremeDesign> {
    let n = y.len();
    if lower_count + upper_count > n {
        return Err(invalid(format!(
            "cannot select {lower_count} + {upper_count} extremes from {n} rows"
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("phenotype at row {} is not finite", i + 1)));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let split = |k: usize| -> Result<f64> {
        if k == 0 {
            Ok(f64::NEG_INFINITY)
        } else if k == n {
            Ok(f64::INFINITY)
        } else {
            let (a, b) = (y[order[k - 1]], y[order[k]]);
            if a == b {
                Err(invalid(format!(
                    "tied phenotype values {a} straddle an extreme-sampling cutoff"
                )))
            } else {
                Ok(0.5 * (a + b))
            }
        }
    };
    let (c_lower, c_upper) = if lower_count + upper_count == n {
        let c = split(lower_count)?;
        (c, c)
    } else {
        let lo = if lower_count == 0 {
            f64::NEG_INFINITY
        } else {
            split(lower_count)?
        };
        let hi = if upper_count == 0 {
            f64::INFINITY
        } else {
            split(n - upper_count)?
        };
        (lo, hi)
    };
    let mut mask = vec![false; n];
    for &i in order[..lower_count].iter().chain(&order[n - upper_count..]) {
        mask[i] = true;
    }
    let members = (0..n).filter(|&i| mask[i]).collect();
    Ok(ExtremeDesign {
        c_lower,
        c_upper,
        members,
        mask,
    })
}

/// A regression term; indices refer to dataset columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    Env(usize),
    Snp(usize),
    Interaction { env: usize, snp: usize },
}

impl Term {
    pub fn name(&self, ds: &Dataset) -> String {
        match *self {
            Term::Env(e) => ds.env_names()[e].clone(),
            Term::Snp(g) => ds.snp_names()[g].clone(),
            Term::Interaction { env, snp } => {
                format!("{}:{}", ds.env_names()[env], ds.snp_names()[snp])
            }
        }
    }

    pub fn involves_snp(&self) -> bool {
        !matches!(self, Term::Env(_))
    }
}

/// Which covariates, SNPs and products enter the mean, and which of those
/// terms are under test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    env_columns: Vec<usize>,
    snp_columns: Vec<usize>,
    interaction_pairs: Vec<(usize, usize)>,
    tested_terms: Vec<Term>,
}

impl ModelSpec {
    /// Every interaction must pair a declared covariate with a declared SNP.
    pub fn new(
        env_columns: Vec<usize>,
        snp_columns: Vec<usize>,
        interaction_pairs: Vec<(usize, usize)>,
    ) -> Result<Self> {
        for &(e, g) in &interaction_pairs {
            if !env_columns.contains(&e) || !snp_columns.contains(&g) {
                return Err(invalid(format!(
                    "interaction ({e}, {g}) refers to an undeclared covariate or SNP"
                )));
            }
        }
        let spec = ModelSpec {
            env_columns,
            snp_columns,
            interaction_pairs,
            tested_terms: Vec::new(),
        };
        let terms = spec.terms();
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(invalid("duplicate term in model"));
            }
        }
        Ok(spec)
    }

    pub fn with_tested(mut self, tested: Vec<Term>) -> Result<Self> {
        let terms = self.terms();
        for t in &tested {
            if !terms.contains(t) {
                return Err(invalid(format!("tested term {t:?} is not in the model")));
            }
        }
        self.tested_terms = tested;
        Ok(self)
    }

    pub fn env_columns(&self) -> &[usize] {
        &self.env_columns
    }

    pub fn snp_columns(&self) -> &[usize] {
        &self.snp_columns
    }

    pub fn interaction_pairs(&self) -> &[(usize, usize)] {
        &self.interaction_pairs
    }

    pub fn tested_terms(&self) -> &[Term] {
        &self.tested_terms
    }

    /// Covariates, then SNP main effects, then interactions.
    pub fn terms(&self) -> Vec<Term> {
        self.env_columns
            .iter()
            .map(|&e| Term::Env(e))
            .chain(self.snp_columns.iter().map(|&g| Term::Snp(g)))
            .chain(
                self.interaction_pairs
                    .iter()
                    .map(|&(env, snp)| Term::Interaction { env, snp }),
            )
            .collect()
    }

    /// Intercept plus one coefficient per term.
    pub fn n_coefficients(&self) -> usize {
        1 + self.env_columns.len() + self.snp_columns.len() + self.interaction_pairs.len()
    }

    /// Design-column indices (intercept is column 0) of the tested terms.
    pub fn tested_columns(&self) -> Vec<usize> {
        let terms = self.terms();
        self.tested_terms
            .iter()
            .map(|t| 1 + terms.iter().position(|u| u == t).expect("validated"))
            .collect()
    }

    /// The model with the tested terms removed.
    pub fn null_spec(&self) -> Result<ModelSpec> {
        let keep = |t: Term| !self.tested_terms.contains(&t);
        let env: Vec<usize> = self
            .env_columns
            .iter()
            .copied()
            .filter(|&e| keep(Term::Env(e)))
            .collect();
        let snp: Vec<usize> = self
            .snp_columns
            .iter()
            .copied()
            .filter(|&g| keep(Term::Snp(g)))
            .collect();
        let pairs: Vec<(usize, usize)> = self
            .interaction_pairs
            .iter()
            .copied()
            .filter(|&(env, snp)| keep(Term::Interaction { env, snp }))
            .collect();
        for &(e, g) in &pairs {
            if !env.contains(&e) || !snp.contains(&g) {
                return Err(Error::Unsupported(String::from(
                    "testing a main effect while keeping its interaction is not supported",
                )));
            }
        }
        ModelSpec::new(env, snp, pairs)
    }

    /// Whether every term of `self` is a term of `other`.
    pub fn is_nested_in(&self, other: &ModelSpec) -> bool {
        let terms = other.terms();
        self.terms().iter().all(|t| terms.contains(t))
    }

    pub fn validate(&self, ds: &Dataset) -> Result<()> {
        if let Some(e) = self.env_columns.iter().find(|&&e| e >= ds.n_env()) {
            return Err(invalid(format!("covariate column {e} out of range")));
        }
        if let Some(g) = self.snp_columns.iter().find(|&&g| g >= ds.n_snps()) {
            return Err(invalid(format!("SNP column {g} out of range")));
        }
        Ok(())
    }

    pub fn coefficient_names(&self, ds: &Dataset) -> Vec<String> {
        core::iter::once(String::from("intercept"))
            .chain(self.terms().iter().map(|t| t.name(ds)))
            .collect()
    }
}

/// Model parameters `θ = (α, β_e, β_g, β_eg, σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub alpha: f64,
    pub beta_e: Vec<f64>,
    pub beta_g: Vec<f64>,
    pub beta_eg: Vec<f64>,
    pub sigma: f64,
}

impl ParameterVector {
    /// Splits a coefficient vector ordered as [`ModelSpec::terms`].
    pub fn from_coefficients(spec: &ModelSpec, coefficients: &[f64], sigma: f64) -> Result<Self> {
        if coefficients.len() != spec.n_coefficients() {
            return Err(invalid(format!(
                "{} coefficients for a model with {}",
                coefficients.len(),
                spec.n_coefficients()
            )));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid(format!("sigma must be positive, got {sigma}")));
        }
        let ne = spec.env_columns().len();
        let ng = spec.snp_columns().len();
        Ok(ParameterVector {
            alpha: coefficients[0],
            beta_e: coefficients[1..1 + ne].to_vec(),
            beta_g: coefficients[1 + ne..1 + ne + ng].to_vec(),
            beta_eg: coefficients[1 + ne + ng..].to_vec(),
            sigma,
        })
    }

    pub fn coefficients(&self) -> Vec<f64> {
        core::iter::once(self.alpha)
            .chain(self.beta_e.iter().copied())
            .chain(self.beta_g.iter().copied())
            .chain(self.beta_eg.iter().copied())
            .collect()
    }

    pub fn matches(&self, spec: &ModelSpec) -> bool {
        self.beta_e.len() == spec.env_columns().len()
            && self.beta_g.len() == spec.snp_columns().len()
            && self.beta_eg.len() == spec.interaction_pairs().len()
    }
}

/// How rows with a missing genotype are handled when a design matrix needs
/// that genotype.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    Reject,
    DropRows,
    ImputeMean,
}

/// A design matrix over a set of dataset rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionView {
    /// Dataset row of each design row.
    pub rows: Vec<usize>,
    pub y: Vec<f64>,
    /// Intercept in column 0, then one column per term.
    pub x: Matrix,
    pub names: Vec<String>,
    /// Design columns of the tested terms.
    pub tested: Vec<usize>,
    /// Rows skipped for a missing genotype.
    pub dropped: usize,
}

impl RegressionView {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn nuisance_columns(&self) -> Vec<usize> {
        (0..self.x.cols()).filter(|c| !self.tested.contains(c)).collect()
    }

    /// Nuisance design `z` (with intercept).
    pub fn z(&self) -> Matrix {
        self.x.select_columns(&self.nuisance_columns())
    }

    /// Tested columns `x₀`.
    pub fn x0(&self) -> Matrix {
        self.x.select_columns(&self.tested)
    }

    pub fn tested_names(&self) -> Vec<String> {
        self.tested.iter().map(|&c| self.names[c].clone()).collect()
    }

    pub fn nuisance_names(&self) -> Vec<String> {
        self.nuisance_columns().iter().map(|&c| self.names[c].clone()).collect()
    }
}

/// Builds the design matrix of `spec`, restricted to the extreme set when a
/// design is given.
pub fn build_design(
    ds: &Dataset,
    spec: &ModelSpec,
    design: Option<&ExtremeDesign>,
    missing: MissingPolicy,
) -> Result<RegressionView> {
    spec.validate(ds)?;
    if let Some(d) = design {
        if d.n_rows() != ds.n() {
            return Err(invalid(format!(
                "extreme design covers {} rows, dataset has {}",
                d.n_rows(),
                ds.n()
            )));
        }
    }
    let terms = spec.terms();
    let means: Vec<Option<f64>> = (0..ds.n_snps())
        .map(|g| {
            (missing == MissingPolicy::ImputeMean && spec.snp_columns().contains(&g))
                .then(|| ds.genotype_mean(g))
                .flatten()
        })
        .collect();
    let candidates: Vec<usize> = match design {
        Some(d) => d.members().to_vec(),
        None => (0..ds.n()).collect(),
    };
    let p = spec.n_coefficients();
    let mut rows = Vec::with_capacity(candidates.len());
    let mut data = Vec::with_capacity(candidates.len() * p);
    let mut dropped = 0;
    'rows: for &i in &candidates {
        let start = data.len();
        data.push(1.0);
        for t in &terms {
            let g = |col: usize| -> Result<Option<f64>> {
                match ds.snp(col)[i] {
                    Genotype::Called(v) => Ok(Some(f64::from(v))),
                    Genotype::Missing => match missing {
                        MissingPolicy::Reject => Err(invalid(format!(
                            "SNP `{}` is missing at row {}",
                            ds.snp_names()[col],
                            i + 1
                        ))),
                        MissingPolicy::DropRows => Ok(None),
                        MissingPolicy::ImputeMean => means[col]
                            .map(Some)
                            .ok_or_else(|| invalid(format!("SNP `{}` has no observed genotypes", ds.snp_names()[col]))),
                    },
                }
            };
            let v = match *t {
                Term::Env(e) => ds.env(e)[i],
                Term::Snp(s) => match g(s)? {
                    Some(v) => v,
                    None => {
                        data.truncate(start);
                        dropped += 1;
                        continue 'rows;
                    }
                },
                Term::Interaction { env, snp } => match g(snp)? {
                    Some(v) => v * ds.env(env)[i],
                    None => {
                        data.truncate(start);
                        dropped += 1;
                        continue 'rows;
                    }
                },
            };
            data.push(v);
        }
        rows.push(i);
    }
    let n = rows.len();
    Ok(RegressionView {
        y: rows.iter().map(|&i| ds.y()[i]).collect(),
        rows,
        x: Matrix::from_row_major(n, p, data),
        names: spec.coefficient_names(ds),
        tested: spec.tested_columns(),
        dropped,
    })
}

/// Estimates, observed information and Wald intervals of a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub estimates: ParameterVector,
    /// One name per row of `observed_information`. The leading entries are
    /// the regression coefficients then `sigma`; any further entries are
    /// nuisance parameters of the method.
    pub names: Vec<String>,
    pub observed_information: Matrix,
    /// Standard errors of the coefficients and `sigma`, when the
    /// information is invertible.
    pub standard_errors: Option<Vec<f64>>,
    pub ci: Option<Vec<(f64, f64)>>,
    pub level: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostic: Option<String>,
}

impl FitResult {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        estimates: ParameterVector,
        names: Vec<String>,
        observed_information: Matrix,
        loglik: f64,
        converged: bool,
        iterations: usize,
        level: f64,
    ) -> Self {
        let coefs = estimates.coefficients();
        let k = coefs.len() + 1;
        let mut diagnostic = None;
        let (standard_errors, ci) = match Cholesky::new(&observed_information) {
            Ok(chol) => {
                let inv = chol.inverse();
                let z = norm_quantile(0.5 + 0.5 * level);
                let se: Vec<f64> = (0..k).map(|i| inv[(i, i)].sqrt()).collect();
                let ci = coefs
                    .iter()
                    .chain(core::iter::once(&estimates.sigma))
                    .zip(&se)
                    .map(|(&b, &s)| (b - z * s, b + z * s))
                    .collect();
                (Some(se), Some(ci))
            }
            Err(j) => {
                diagnostic = Some(format!(
                    "observed information is not positive definite at `{}`; intervals undefined",
                    names.get(j).map_or("?", |s| s.as_str())
                ));
                (None, None)
            }
        };
        if !converged && diagnostic.is_none() {
            diagnostic = Some("optimizer stopped before the gradient tolerance was met".to_string());
        }
        FitResult {
            estimates,
            names,
            observed_information,
            standard_errors,
            ci,
            level,
            loglik,
            converged,
            iterations,
            diagnostic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMethod {
    Score,
    LikelihoodRatio,
    Wald,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub method: TestMethod,
    pub n_used: usize,
    pub warning: Option<String>,
}

impl TestResult {
    pub fn new(statistic: f64, df: u32, method: TestMethod, n_used: usize) -> Result<Self> {
        if !statistic.is_finite() {
            return Err(Error::NonFinite(format!("test statistic is {statistic}")));
        }
        // Round-off can leave a quadratic form a hair below zero.
        let statistic = statistic.max(0.0);
        Ok(TestResult {
            statistic,
            df,
            p_value: chi2_sf(statistic, df)?,
            method,
            n_used,
            warning: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(vec![1.0, 5.0, 2.0, 9.0, 3.0, 7.0])
            .unwrap()
            .with_env("e", vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0])
            .unwrap()
            .with_snp(
                "g",
                [Some(0), Some(1), None, Some(2), Some(1), Some(0)]
                    .map(Genotype::from)
                    .to_vec(),
            )
            .unwrap()
    }

    #[test]
    fn extremes_place_cutoffs_between_tails() {
        let y = [1.0, 5.0, 2.0, 9.0, 3.0, 7.0];
        let d = select_extremes(&y, 2, 2).unwrap();
        assert_eq!(d.members(), &[0, 2, 3, 5]);
        assert_eq!((d.c_lower(), d.c_upper()), (2.5, 6.0));
        assert!(d.is_consistent_with(&y));
    }

    #[test]
    fn covering_every_row_gives_equal_cutoffs() {
        let y = [1.0, 5.0, 2.0, 9.0];
        let d = select_extremes(&y, 1, 3).unwrap();
        assert_eq!(d.c_lower(), d.c_upper());
        assert_eq!(d.members().len(), 4);
        assert!(d.is_consistent_with(&y));
    }

    #[test]
    fn boundary_tie_is_rejected() {
        assert!(select_extremes(&[1.0, 2.0, 2.0, 5.0], 2, 1).is_err());
        assert!(select_extremes(&[1.0, 2.0], 2, 1).is_err());
    }

    #[test]
    fn interaction_must_reference_declared_columns() {
        assert!(ModelSpec::new(vec![], vec![0], vec![(0, 0)]).is_err());
        assert!(ModelSpec::new(vec![0], vec![0], vec![(0, 0)]).is_ok());
    }

    #[test]
    fn design_drops_or_imputes_missing() {
        let ds = toy();
        let spec = ModelSpec::new(vec![0], vec![0], vec![(0, 0)]).unwrap();
        let v = build_design(&ds, &spec, None, MissingPolicy::DropRows).unwrap();
        assert_eq!(v.n(), 5);
        assert_eq!(v.dropped, 1);
        assert_eq!(v.x.row(2), &[1.0, 1.0, 2.0, 2.0]);
        let v = build_design(&ds, &spec, None, MissingPolicy::ImputeMean).unwrap();
        assert_eq!(v.x.row(2), &[1.0, 0.0, 0.8, 0.0]);
        assert!(build_design(&ds, &spec, None, MissingPolicy::Reject).is_err());
    }

    #[test]
    fn null_spec_drops_tested_terms() {
        let spec = ModelSpec::new(vec![0], vec![0], vec![(0, 0)])
            .unwrap()
            .with_tested(vec![Term::Interaction { env: 0, snp: 0 }])
            .unwrap();
        assert_eq!(spec.tested_columns(), vec![3]);
        let null = spec.null_spec().unwrap();
        assert_eq!(null.n_coefficients(), 3);
        assert!(null.is_nested_in(&spec));
        let bad = spec.with_tested(vec![Term::Snp(0)]).unwrap();
        assert!(bad.null_spec().is_err());
    }

    #[test]
    fn parameter_vector_round_trips() {
        let spec = ModelSpec::new(vec![0], vec![0], vec![(0, 0)]).unwrap();
        let p = ParameterVector::from_coefficients(&spec, &[1.0, 2.0, 3.0, 4.0], 0.5).unwrap();
        assert_eq!(p.beta_eg, vec![4.0]);
        assert_eq!(p.coefficients(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(ParameterVector::from_coefficients(&spec, &[1.0, 2.0, 3.0, 4.0], 0.0).is_err());
    }
}
