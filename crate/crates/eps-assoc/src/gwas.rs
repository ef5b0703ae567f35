//! Per-SNP association testing with one null fit shared by every SNP.

use std::io::Write;

use eps_core::binary::{dichotomize, fit_logistic, score_test_logistic_with, LogisticFit};
use eps_core::eps_full::{EpsFullNull, GenotypeModel};
use eps_core::eps_only::{EpsOnlyNull, Information};
use eps_core::linalg::Matrix;
use eps_core::linreg::{ols, LinearNull};
use eps_core::model::{build_design, Dataset, ExtremeDesign, Genotype, MissingPolicy, ModelSpec, TestResult};
use eps_core::stats::MaximizeOptions;
use rayon::prelude::*;

use crate::error::{AppError, AppResult};
use crate::io::{fmt_opt, writer, SnpRecord};

/// Analysis method for observed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AnalysisMethod {
    /// Linear model on a fully genotyped cohort.
    Full,
    /// Linear model on a random sub-sample.
    Random,
    /// Truncated likelihood on the extremes only.
    EpsOnly,
    /// Logistic regression of upper versus lower extreme.
    EpsOnlyBinary,
    /// Mixture likelihood over the whole cohort.
    EpsFull,
}

impl AnalysisMethod {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisMethod::Full => "full",
            AnalysisMethod::Random => "random",
            AnalysisMethod::EpsOnly => "eps-only",
            AnalysisMethod::EpsOnlyBinary => "eps-only-binary",
            AnalysisMethod::EpsFull => "eps-full",
        }
    }

    pub fn needs_extremes(self) -> bool {
        matches!(self, AnalysisMethod::EpsOnly | AnalysisMethod::EpsOnlyBinary)
    }
}

#[derive(Debug, Clone)]
pub struct GwasConfig {
    pub method: AnalysisMethod,
    /// Extreme set; required for the truncated methods, optional for
    /// eps-full where it masks genotypes of non-extremes.
    pub design: Option<ExtremeDesign>,
    pub impute_mean: bool,
    pub genotype_model: GenotypeModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwasRow {
    pub snp_id: String,
    pub position: u64,
    pub beta_hat: Option<f64>,
    pub se: Option<f64>,
    pub statistic: Option<f64>,
    pub df: Option<u32>,
    pub p_value: Option<f64>,
    pub n_used: usize,
    pub method: &'static str,
    pub status: String,
}

impl GwasRow {
    pub fn neg_log10_p(&self) -> Option<f64> {
        self.p_value.map(|p| -p.log10())
    }
}

enum Null {
    Linear(LinearNull),
    EpsOnly(EpsOnlyNull),
    Binary { fit: LogisticFit, y: Vec<f64> },
}

/// Null fit over a set of rows of the base dataset.
struct RowNull {
    rows: Vec<usize>,
    z: Matrix,
    y: Vec<f64>,
    names: Vec<String>,
    null: Null,
}

fn fit_row_null(
    method: AnalysisMethod,
    base: &Dataset,
    spec: &ModelSpec,
    rows: &[usize],
    design: Option<&ExtremeDesign>,
) -> Result<RowNull, eps_core::Error> {
    let sub = base.subset(rows);
    let view = build_design(&sub, spec, None, MissingPolicy::Reject)?;
    let z = view.x.clone();
    let names = view.names.clone();
    let null = match method {
        AnalysisMethod::Full | AnalysisMethod::Random => Null::Linear(LinearNull::fit(&view.y, &z, &names)?),
        AnalysisMethod::EpsOnly => {
            let d = design.expect("checked");
            Null::EpsOnly(EpsOnlyNull::fit(
                &view.y,
                &z,
                &names,
                d.c_lower(),
                d.c_upper(),
                &MaximizeOptions::default(),
            )?)
        }
        AnalysisMethod::EpsOnlyBinary => {
            let d = design.expect("checked");
            let y = dichotomize(&view.y, d.c_lower(), d.c_upper())?;
            Null::Binary {
                fit: fit_logistic(&y, &z, &names)?,
                y,
            }
        }
        AnalysisMethod::EpsFull => unreachable!("eps-full uses its own null"),
    };
    Ok(RowNull {
        rows: rows.to_vec(),
        z,
        y: view.y,
        names,
        null,
    })
}

impl RowNull {
    fn test(&self, x: &[f64], name: &str) -> Result<(TestResult, Option<(f64, f64)>), eps_core::Error> {
        let x0 = Matrix::from_fn(x.len(), 1, |i, _| x[i]);
        let names = [name.to_string()];
        Ok(match &self.null {
            Null::Linear(n) => {
                let t = n.score_test(&x0, &names)?;
                (t, Some(linear_estimate(&self.y, &self.z, x, &self.names, name)?))
            }
            Null::EpsOnly(n) => (n.score_test(&x0, &names, Information::Expected)?.result, None),
            Null::Binary { fit, y } => (score_test_logistic_with(fit, y, &self.z, &x0, &names)?, None),
        })
    }
}

/// OLS coefficient and standard error of the appended column.
fn linear_estimate(
    y: &[f64],
    z: &Matrix,
    x: &[f64],
    names: &[String],
    name: &str,
) -> Result<(f64, f64), eps_core::Error> {
    let k = z.cols();
    let full = Matrix::from_fn(y.len(), k + 1, |i, j| if j < k { z[(i, j)] } else { x[i] });
    let mut all = names.to_vec();
    all.push(name.to_string());
    let fit = ols(y, &full, &all)?;
    let s2 = fit.rss / (y.len() - k - 1) as f64;
    let v = fit.gram_inverse()[(k, k)] * s2;
    Ok((fit.coefficients[k], v.sqrt()))
}

fn failed(rec: &SnpRecord, method: AnalysisMethod, n_used: usize, msg: String) -> GwasRow {
    GwasRow {
        snp_id: rec.id.clone(),
        position: rec.position,
        beta_hat: None,
        se: None,
        statistic: None,
        df: None,
        p_value: None,
        n_used,
        method: method.name(),
        status: msg.replace(['\t', '\n'], " "),
    }
}

fn done(rec: &SnpRecord, method: AnalysisMethod, t: &TestResult, est: Option<(f64, f64)>) -> GwasRow {
    GwasRow {
        snp_id: rec.id.clone(),
        position: rec.position,
        beta_hat: est.map(|e| e.0),
        se: est.map(|e| e.1),
        statistic: Some(t.statistic),
        df: Some(t.df),
        p_value: Some(t.p_value),
        n_used: t.n_used,
        method: method.name(),
        status: t
            .warning
            .clone()
            .map_or_else(|| String::from("ok"), |w| w.replace(['\t', '\n'], " ")),
    }
}

/// Tests every SNP of `snps` against `base`, whose covariates and strata
/// follow `null_spec`. Output rows follow input order; a failing SNP gets
/// a row with its error in `status`.
pub fn run_gwas(
    base: &Dataset,
    null_spec: &ModelSpec,
    snps: &[SnpRecord],
    cfg: &GwasConfig,
    pool: &rayon::ThreadPool,
) -> AppResult<Vec<GwasRow>> {
    if !null_spec.snp_columns().is_empty() || !null_spec.interaction_pairs().is_empty() {
        return Err(AppError::Validation(String::from(
            "the GWAS formula may only contain covariates; every SNP is tested in turn",
        )));
    }
    if let Some(d) = &cfg.design {
        if d.n_rows() != base.n() {
            return Err(AppError::Validation(String::from(
                "extreme design does not match the cohort",
            )));
        }
    }
    if let Some(r) = snps.iter().find(|r| r.genotypes.len() != base.n()) {
        return Err(AppError::Validation(format!(
            "SNP `{}` has {} genotypes for {} individuals",
            r.id,
            r.genotypes.len(),
            base.n()
        )));
    }
    if cfg.method == AnalysisMethod::EpsFull {
        return run_eps_full(base, null_spec, snps, cfg, pool);
    }
    let rows: Vec<usize> = match (&cfg.design, cfg.method.needs_extremes()) {
        (Some(d), true) => d.members().to_vec(),
        (None, true) => {
            return Err(AppError::Validation(format!(
                "method {} needs extreme counts or cutoffs",
                cfg.method.name()
            )))
        }
        _ => (0..base.n()).collect(),
    };
    let shared = fit_row_null(cfg.method, base, null_spec, &rows, cfg.design.as_ref())?;
    let rows_out = pool.install(|| {
        snps.par_iter()
            .with_min_len(64)
            .map(|rec| {
                let g: Vec<Genotype> = shared.rows.iter().map(|&i| rec.genotypes[i]).collect();
                let observed: Vec<f64> = g.iter().filter_map(|v| v.value().map(f64::from)).collect();
                if observed.is_empty() {
                    return failed(rec, cfg.method, 0, String::from("no observed genotypes"));
                }
                let n_missing = g.len() - observed.len();
                let result = if n_missing == 0 || cfg.impute_mean {
                    let mean = observed.iter().sum::<f64>() / observed.len() as f64;
                    let x: Vec<f64> = g.iter().map(|v| v.value().map_or(mean, f64::from)).collect();
                    shared.test(&x, &rec.id)
                } else {
                    log::debug!("SNP `{}`: {n_missing} rows with missing genotype dropped", rec.id);
                    let keep: Vec<usize> = shared
                        .rows
                        .iter()
                        .zip(&g)
                        .filter(|(_, v)| !v.is_missing())
                        .map(|(&i, _)| i)
                        .collect();
                    fit_row_null(cfg.method, base, null_spec, &keep, cfg.design.as_ref())
                        .and_then(|null| null.test(&observed, &rec.id))
                };
                match result {
                    Ok((t, est)) => done(rec, cfg.method, &t, est),
                    Err(e) => failed(rec, cfg.method, observed.len(), e.to_string()),
                }
            })
            .collect::<Vec<_>>()
    });
    let dropped: usize = snps
        .iter()
        .map(|r| rows.iter().filter(|&&i| r.genotypes[i].is_missing()).count())
        .sum();
    if dropped > 0 && !cfg.impute_mean {
        log::info!("{dropped} (SNP, individual) pairs with missing genotype were dropped");
    }
    Ok(rows_out)
}

fn run_eps_full(
    base: &Dataset,
    null_spec: &ModelSpec,
    snps: &[SnpRecord],
    cfg: &GwasConfig,
    pool: &rayon::ThreadPool,
) -> AppResult<Vec<GwasRow>> {
    if cfg.impute_mean {
        log::warn!("--impute-mean is ignored for eps-full, which models missing genotypes directly");
    }
    let null = EpsFullNull::fit(base, null_spec)?;
    let mask = cfg.design.as_ref().map(|d| d.mask());
    Ok(pool.install(|| {
        snps.par_iter()
            .with_min_len(64)
            .map(|rec| {
                let g: Vec<Genotype> = match mask {
                    Some(m) => rec
                        .genotypes
                        .iter()
                        .zip(m)
                        .map(|(&v, &keep)| if keep { v } else { Genotype::Missing })
                        .collect(),
                    None => rec.genotypes.clone(),
                };
                let n_obs = g.iter().filter(|v| !v.is_missing()).count();
                let res = base
                    .clone()
                    .with_snp(rec.id.as_str(), g)
                    .and_then(|ds| null.score_test(&ds, &[0], cfg.genotype_model));
                match res {
                    Ok(s) => done(rec, cfg.method, &s.result, None),
                    Err(e) => failed(rec, cfg.method, n_obs, e.to_string()),
                }
            })
            .collect()
    }))
}

pub const GWAS_HEADER: [&str; 11] = [
    "snp_id",
    "position",
    "beta_hat",
    "se",
    "statistic",
    "df",
    "p_value",
    "neg_log10_p",
    "n_used",
    "method",
    "status",
];

pub fn write_gwas<W: Write>(out: W, rows: &[GwasRow]) -> AppResult<()> {
    let mut w = writer(out);
    let tsv = |e: csv::Error| AppError::Validation(format!("writing results: {e}"));
    w.write_record(GWAS_HEADER).map_err(tsv)?;
    for r in rows {
        w.write_record([
            r.snp_id.clone(),
            r.position.to_string(),
            fmt_opt(r.beta_hat),
            fmt_opt(r.se),
            fmt_opt(r.statistic),
            r.df.map_or_else(|| String::from("NA"), |d| d.to_string()),
            fmt_opt(r.p_value),
            fmt_opt(r.neg_log10_p()),
            r.n_used.to_string(),
            r.method.to_string(),
            r.status.clone(),
        ])
        .map_err(tsv)?;
    }
    w.flush()
        .map_err(|e| AppError::Validation(format!("writing results: {e}")))
}
