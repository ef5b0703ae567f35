//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use eps_core::binary::{dichotomize, fit_logistic, score_test_logistic};
use eps_core::eps_full::{fit_eps_full, lrt_eps_full, score_test_eps_full, EpsFullOptions, GenotypeModel};
use eps_core::eps_only::{fit_eps_only, EpsOnlyNull, Information};
use eps_core::linalg::Cholesky;
use eps_core::linreg::{fit_linear, score_test_linear};
use eps_core::model::{
    build_design, select_extremes, Dataset, ExtremeDesign, FitResult, MissingPolicy, ModelSpec, Term, TestMethod,
    TestResult,
};
use eps_core::sim::{Analysis, Confounder, DesignKind, DesignSpec, Method, SimModel, SimParams, SimScenario, E2};
use eps_core::stats::{norm_quantile, MaximizeOptions};

use crate::error::{AppError, AppResult};
use crate::formula::{assemble, parse_terms, Formula};
use crate::gwas::{run_gwas, write_gwas, AnalysisMethod, GwasConfig};
use crate::io::{fmt_f64, read_genotypes, read_phenotypes, write_output, writer};
use crate::montecarlo::{
    pool, power_curve, resolve_workers, run_arm, write_curve, write_results, Arm, McConfig, WORKERS_ENV,
};

#[derive(Debug, Parser)]
#[command(
    name = "eps-assoc",
    version,
    about = "Association testing for extreme-phenotype samples"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model and report estimates with Wald intervals.
    Fit(FitArgs),
    /// Test terms of one model.
    Test(TestArgs),
    /// Test every SNP of the genotype file.
    Gwas(GwasArgs),
    /// Monte Carlo power or MSE for simulated designs.
    Simulate(SimulateArgs),
    /// Power as a function of the number genotyped.
    Power(PowerArgs),
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Phenotype and covariate table (TSV, first column individual ID).
    #[arg(long)]
    pub pheno: PathBuf,
    /// Genotype table (TSV, one row per SNP: ID, position, genotypes).
    #[arg(long)]
    pub geno: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: AnalysisMethod,
    /// Model, e.g. "y ~ e:sex,age + g:SNP1 + eg:sex*SNP1".
    #[arg(long)]
    pub formula: String,
    /// Number of lowest phenotypes that form the lower extreme.
    #[arg(long, requires = "upper_count", conflicts_with_all = ["c_lower", "c_upper"])]
    pub lower_count: Option<usize>,
    #[arg(long, requires = "lower_count")]
    pub upper_count: Option<usize>,
    /// Lower cutoff; rows with phenotype at or below it are extremes.
    #[arg(long, requires = "c_upper", allow_hyphen_values = true)]
    pub c_lower: Option<f64>,
    #[arg(long, requires = "c_lower", allow_hyphen_values = true)]
    pub c_upper: Option<f64>,
    /// Phenotype-file column whose values define genotype strata.
    #[arg(long)]
    pub strata: Option<String>,
    /// Hardy-Weinberg genotype frequencies for eps-full.
    #[arg(long)]
    pub hwe: bool,
    /// Replace missing genotypes by the SNP mean (full, random, eps-only).
    #[arg(long)]
    pub impute_mean: bool,
    /// Output path; stdout when omitted or "-".
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Confidence level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Terms to test, e.g. "g:SNP1 + eg:sex*SNP1"; default all SNP terms.
    #[arg(long)]
    pub test_terms: Option<String>,
    /// Use the likelihood ratio test for eps-full even for SNP main effects.
    #[arg(long)]
    pub lrt: bool,
}

#[derive(Debug, Args)]
pub struct GwasArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Worker threads (default: EPS_ASSOC_WORKERS, else all cores).
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Main,
    BinaryInteraction,
    ContinuousInteraction,
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Main)]
    pub model: ModelKind,
    #[arg(long, default_value_t = 5000)]
    pub n_total: usize,
    /// Number genotyped; defaults to half the cohort.
    #[arg(long)]
    pub n_genotyped: Option<usize>,
    #[arg(long, default_value_t = 50.0, allow_hyphen_values = true)]
    pub intercept: f64,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    pub beta_e1: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub beta_e2: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub beta_g: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub beta_e1g: f64,
    #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
    pub beta_e2g: f64,
    #[arg(long, default_value_t = 6.0)]
    pub sigma: f64,
    /// Minor-allele frequency.
    #[arg(long, default_value_t = 0.3)]
    pub maf: f64,
    /// Add a binary stratum that shifts both phenotype and allele frequency.
    #[arg(long)]
    pub confounder: bool,
    /// Adjust for the stratum and condition genotype frequencies on it.
    #[arg(long, requires = "confounder")]
    pub stratify: bool,
    /// Arms as `method` or `design:method`. Designs: full, random,
    /// rs-complete, eps-only, eps-full, ees-only, ees-full, combined=N0.
    /// Methods: full, random, linear, eps-only, eps-only-binary, eps-full,
    /// eps-full-lrt.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "full,random,eps-only-binary,eps-only,eps-full"
    )]
    pub arms: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    pub significance: f64,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Estimate MSE of the tested coefficient instead of power.
    #[arg(long)]
    pub mse: bool,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Genotyped sample sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_grid: Vec<usize>,
}

/// Parses arguments, runs, reports errors and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Fit(a) => run_fit(&a),
        Command::Test(a) => run_test(&a),
        Command::Gwas(a) => run_gwas_cmd(&a),
        Command::Simulate(a) => run_simulate(&a),
        Command::Power(a) => run_power(&a),
    }
}

fn validation(msg: impl Into<String>) -> AppError {
    AppError::Validation(msg.into())
}

fn check_input(a: &InputArgs) -> AppResult<()> {
    let has_design = a.lower_count.is_some() || a.c_lower.is_some();
    if a.method.needs_extremes() && !has_design {
        return Err(validation(format!(
            "method {} needs --lower-count/--upper-count or --c-lower/--c-upper",
            a.method.name()
        )));
    }
    if has_design && matches!(a.method, AnalysisMethod::Full | AnalysisMethod::Random) {
        return Err(validation(format!(
            "method {} does not take an extreme design",
            a.method.name()
        )));
    }
    if a.impute_mean && a.method == AnalysisMethod::EpsFull {
        return Err(validation("--impute-mean applies to full, random and eps-only only"));
    }
    if a.hwe && a.method != AnalysisMethod::EpsFull {
        return Err(validation("--hwe applies to eps-full only"));
    }
    if let (Some(l), Some(u)) = (a.c_lower, a.c_upper) {
        if !(l <= u) {
            return Err(validation("--c-lower must not exceed --c-upper"));
        }
    }
    Ok(())
}

fn extreme_design(a: &InputArgs, y: &[f64]) -> AppResult<Option<ExtremeDesign>> {
    Ok(match (a.lower_count, a.upper_count, a.c_lower, a.c_upper) {
        (Some(lo), Some(hi), _, _) => Some(select_extremes(y, lo, hi)?),
        (_, _, Some(cl), Some(cu)) => Some(ExtremeDesign::from_cutoffs(y, cl, cu)?),
        _ => None,
    })
}

fn genotype_model(hwe: bool) -> GenotypeModel {
    if hwe {
        GenotypeModel::HardyWeinberg
    } else {
        GenotypeModel::Saturated
    }
}

fn missing_policy(impute: bool) -> MissingPolicy {
    if impute {
        MissingPolicy::ImputeMean
    } else {
        MissingPolicy::DropRows
    }
}

struct Loaded {
    data: Dataset,
    spec: ModelSpec,
    design: Option<ExtremeDesign>,
}

fn load(a: &InputArgs, tested: Option<&str>) -> AppResult<Loaded> {
    check_input(a)?;
    let formula = Formula::parse(&a.formula)?;
    let tested = match tested {
        Some(t) => parse_terms(t)?,
        None => formula.default_tested(),
    };
    let pheno = read_phenotypes(&a.pheno)?;
    let snps = match (&a.geno, formula.snps.is_empty()) {
        (Some(g), _) => read_genotypes(g, &pheno.ids)?,
        (None, true) => Vec::new(),
        (None, false) => return Err(validation("the formula has SNP terms but no --geno file was given")),
    };
    let asm = assemble(&pheno, &snps, &formula, &tested, a.strata.as_deref())?;
    let design = extreme_design(a, asm.data.y())?;
    Ok(Loaded {
        data: asm.data,
        spec: asm.spec,
        design,
    })
}

/// Rows the truncated methods analyse: the extremes.
fn extremes_only(l: &Loaded) -> AppResult<(Dataset, f64, f64)> {
    let d = l.design.as_ref().ok_or_else(|| validation("no extreme design"))?;
    Ok((l.data.subset(d.members()), d.c_lower(), d.c_upper()))
}

fn log_dropped(dropped: usize) {
    if dropped > 0 {
        log::info!("{dropped} rows with a missing genotype were dropped");
    }
}

fn run_fit(a: &FitArgs) -> AppResult<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(validation("--level must lie in (0, 1)"));
    }
    let l = load(&a.input, Some(""))?;
    let policy = missing_policy(a.input.impute_mean);
    let (fit, n_used) = match a.input.method {
        AnalysisMethod::Full | AnalysisMethod::Random => {
            let view = build_design(&l.data, &l.spec, None, policy)?;
            log_dropped(view.dropped);
            (fit_linear(&view, &l.spec, a.level)?, view.n())
        }
        AnalysisMethod::EpsOnly => {
            let (ds, cl, cu) = extremes_only(&l)?;
            let view = build_design(&ds, &l.spec, None, policy)?;
            log_dropped(view.dropped);
            (
                fit_eps_only(&view, &l.spec, cl, cu, &MaximizeOptions::default(), a.level)?,
                view.n(),
            )
        }
        AnalysisMethod::EpsOnlyBinary => {
            let (ds, cl, cu) = extremes_only(&l)?;
            let view = build_design(&ds, &l.spec, None, policy)?;
            log_dropped(view.dropped);
            let y = dichotomize(&view.y, cl, cu)?;
            let lf = fit_logistic(&y, &view.x, &view.names)?;
            let ses = Cholesky::new(&lf.information).ok().map(|c| c.inverse()).map(|inv| {
                (0..lf.coefficients.len())
                    .map(|i| inv[(i, i)].sqrt())
                    .collect::<Vec<_>>()
            });
            let report = LogisticReport {
                names: view.names.clone(),
                estimates: lf.coefficients.clone(),
                ses,
                loglik: lf.loglik,
                converged: lf.converged,
                iterations: lf.iterations,
            };
            return emit(
                a.input.out.as_deref(),
                &report.render(a.input.method, a.level, view.n())?,
            );
        }
        AnalysisMethod::EpsFull => {
            let opts = EpsFullOptions {
                genotype_model: genotype_model(a.input.hwe),
                level: a.level,
                ..EpsFullOptions::default()
            };
            let f = fit_eps_full(&l.data, l.design.as_ref(), &l.spec, &opts)?;
            (f.fit, l.data.n())
        }
    };
    emit(a.input.out.as_deref(), &render_fit(&fit, a.input.method, n_used)?)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> AppResult<()> {
    write_output(out, bytes)
}

fn tsv_err(e: impl std::fmt::Display) -> AppError {
    validation(format!("writing output: {e}"))
}

fn meta(buf: &mut Vec<u8>, key: &str, value: impl std::fmt::Display) {
    buf.extend_from_slice(format!("# {key}\t{value}\n").as_bytes());
}

/// Fit report: `# key<TAB>value` lines, then a parameter table.
pub fn render_fit(fit: &FitResult, method: AnalysisMethod, n_used: usize) -> AppResult<Vec<u8>> {
    let mut buf = Vec::new();
    meta(&mut buf, "method", method.name());
    meta(&mut buf, "n_used", n_used);
    meta(&mut buf, "loglik", fmt_f64(fit.loglik));
    meta(&mut buf, "converged", fit.converged);
    meta(&mut buf, "iterations", fit.iterations);
    meta(&mut buf, "level", fmt_f64(fit.level));
    if let Some(d) = &fit.diagnostic {
        meta(&mut buf, "diagnostic", d.replace(['\t', '\n'], " "));
    }
    let est = fit.estimates.coefficients();
    let mut values = est.clone();
    values.push(fit.estimates.sigma);
    {
        let mut w = writer(&mut buf);
        w.write_record(["name", "estimate", "se", "ci_low", "ci_high"])
            .map_err(tsv_err)?;
        for (i, v) in values.iter().enumerate() {
            let se = fit.standard_errors.as_ref().map(|s| s[i]);
            let ci = fit.ci.as_ref().map(|c| c[i]);
            w.write_record([
                fit.names[i].clone(),
                fmt_f64(*v),
                se.map_or_else(|| String::from("NA"), fmt_f64),
                ci.map_or_else(|| String::from("NA"), |c| fmt_f64(c.0)),
                ci.map_or_else(|| String::from("NA"), |c| fmt_f64(c.1)),
            ])
            .map_err(tsv_err)?;
        }
        w.flush().map_err(tsv_err)?;
    }
    Ok(buf)
}

struct LogisticReport {
    names: Vec<String>,
    estimates: Vec<f64>,
    ses: Option<Vec<f64>>,
    loglik: f64,
    converged: bool,
    iterations: usize,
}

impl LogisticReport {
    fn render(&self, method: AnalysisMethod, level: f64, n_used: usize) -> AppResult<Vec<u8>> {
        let z = norm_quantile(0.5 + level / 2.0);
        let mut buf = Vec::new();
        meta(&mut buf, "method", method.name());
        meta(&mut buf, "scale", "log-odds of upper extreme");
        meta(&mut buf, "n_used", n_used);
        meta(&mut buf, "loglik", fmt_f64(self.loglik));
        meta(&mut buf, "converged", self.converged);
        meta(&mut buf, "iterations", self.iterations);
        meta(&mut buf, "level", fmt_f64(level));
        {
            let mut w = writer(&mut buf);
            w.write_record(["name", "estimate", "se", "ci_low", "ci_high"])
                .map_err(tsv_err)?;
            for (i, b) in self.estimates.iter().enumerate() {
                let se = self.ses.as_ref().map(|s| s[i]);
                w.write_record([
                    self.names[i].clone(),
                    fmt_f64(*b),
                    se.map_or_else(|| String::from("NA"), fmt_f64),
                    se.map_or_else(|| String::from("NA"), |s| fmt_f64(b - z * s)),
                    se.map_or_else(|| String::from("NA"), |s| fmt_f64(b + z * s)),
                ])
                .map_err(tsv_err)?;
            }
            w.flush().map_err(tsv_err)?;
        }
        Ok(buf)
    }
}

fn run_test(a: &TestArgs) -> AppResult<()> {
    let l = load(&a.input, a.test_terms.as_deref())?;
    if l.spec.tested_terms().is_empty() {
        return Err(validation(
            "nothing to test; give --test-terms or SNP terms in the formula",
        ));
    }
    if a.lrt && a.input.method != AnalysisMethod::EpsFull {
        return Err(validation("--lrt applies to eps-full only"));
    }
    let policy = missing_policy(a.input.impute_mean);
    let result = match a.input.method {
        AnalysisMethod::Full | AnalysisMethod::Random => {
            let view = build_design(&l.data, &l.spec, None, policy)?;
            log_dropped(view.dropped);
            score_test_linear(&view)?
        }
        AnalysisMethod::EpsOnly => {
            let (ds, cl, cu) = extremes_only(&l)?;
            let view = build_design(&ds, &l.spec, None, policy)?;
            log_dropped(view.dropped);
            let null = EpsOnlyNull::from_view(&view, cl, cu)?;
            null.score_test(&view.x0(), &view.tested_names(), Information::Expected)?
                .result
        }
        AnalysisMethod::EpsOnlyBinary => {
            let (ds, cl, cu) = extremes_only(&l)?;
            let view = build_design(&ds, &l.spec, None, policy)?;
            log_dropped(view.dropped);
            let y = dichotomize(&view.y, cl, cu)?;
            score_test_logistic(&y, &view.z(), &view.x0(), &view.nuisance_names(), &view.tested_names())?
        }
        AnalysisMethod::EpsFull => {
            let model = genotype_model(a.input.hwe);
            let snps_only = l.spec.tested_terms().iter().all(|t| matches!(t, Term::Snp(_)));
            if snps_only && !a.lrt {
                score_test_eps_full(&l.data, l.design.as_ref(), &l.spec, model)?.result
            } else {
                let opts = EpsFullOptions {
                    genotype_model: model,
                    ..EpsFullOptions::default()
                };
                lrt_eps_full(&l.data, l.design.as_ref(), &l.spec.null_spec()?, &l.spec, &opts)?
            }
        }
    };
    if let Some(w) = &result.warning {
        log::warn!("{w}");
    }
    let terms: Vec<String> = l.spec.tested_terms().iter().map(|t| t.name(&l.data)).collect();
    emit(a.input.out.as_deref(), &render_test(&terms, &result, a.input.method)?)
}

fn test_method_name(m: TestMethod) -> &'static str {
    match m {
        TestMethod::Score => "score",
        TestMethod::LikelihoodRatio => "lrt",
        TestMethod::Wald => "wald",
    }
}

pub fn render_test(terms: &[String], t: &TestResult, method: AnalysisMethod) -> AppResult<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = writer(&mut buf);
        w.write_record([
            "terms",
            "statistic",
            "df",
            "p_value",
            "neg_log10_p",
            "method",
            "test",
            "n_used",
            "warning",
        ])
        .map_err(tsv_err)?;
        w.write_record([
            terms.join(","),
            fmt_f64(t.statistic),
            t.df.to_string(),
            fmt_f64(t.p_value),
            fmt_f64(-t.p_value.log10()),
            method.name().to_string(),
            test_method_name(t.method).to_string(),
            t.n_used.to_string(),
            t.warning
                .clone()
                .map_or_else(|| String::from("NA"), |w| w.replace(['\t', '\n'], " ")),
        ])
        .map_err(tsv_err)?;
        w.flush().map_err(tsv_err)?;
    }
    Ok(buf)
}

fn run_gwas_cmd(a: &GwasArgs) -> AppResult<()> {
    let i = &a.input;
    check_input(i)?;
    let workers = resolve_workers(a.workers)?;
    let formula = Formula::parse(&i.formula)?;
    if !formula.snps.is_empty() {
        return Err(validation(
            "the GWAS formula takes covariates only; every SNP in --geno is tested",
        ));
    }
    let geno = i.geno.as_ref().ok_or_else(|| validation("gwas needs --geno"))?;
    let pheno = read_phenotypes(&i.pheno)?;
    let asm = assemble(&pheno, &[], &formula, &[], i.strata.as_deref())?;
    let snps = read_genotypes(geno, &pheno.ids)?;
    let design = extreme_design(i, asm.data.y())?;
    let cfg = GwasConfig {
        method: i.method,
        design,
        impute_mean: i.impute_mean,
        genotype_model: genotype_model(i.hwe),
    };
    let rows = run_gwas(&asm.data, &asm.spec, &snps, &cfg, &pool(workers)?)?;
    let failures = rows.iter().filter(|r| r.status != "ok").count();
    if failures > 0 {
        log::warn!("{failures} of {} SNPs did not produce a test", rows.len());
    }
    let mut buf = Vec::new();
    write_gwas(&mut buf, &rows)?;
    emit(i.out.as_deref(), &buf)
}

fn parse_design(s: &str, n_genotyped: usize) -> AppResult<DesignKind> {
    Ok(match s {
        "full" => DesignKind::Full,
        "random" => DesignKind::Random,
        "rs-complete" => DesignKind::RsComplete,
        "eps-only" => DesignKind::EpsOnly,
        "eps-full" => DesignKind::EpsFull,
        "ees-only" => DesignKind::EesOnly,
        "ees-full" => DesignKind::EesFull,
        _ => match s.strip_prefix("combined=") {
            Some(n0) => {
                let n_random = n0
                    .parse::<usize>()
                    .map_err(|_| validation(format!("`{s}`: combined=N0 needs an integer")))?;
                if n_random > n_genotyped {
                    return Err(validation(format!("`{s}`: N0 exceeds the {n_genotyped} genotyped")));
                }
                DesignKind::Combined { n_random }
            }
            None => return Err(validation(format!("unknown design `{s}`"))),
        },
    })
}

fn parse_method(s: &str) -> AppResult<(Method, Option<DesignKind>)> {
    Ok(match s {
        "full" => (Method::Linear, Some(DesignKind::Full)),
        "random" => (Method::Linear, Some(DesignKind::Random)),
        "linear" => (Method::Linear, None),
        "eps-only" => (Method::EpsOnly, Some(DesignKind::EpsOnly)),
        "eps-only-binary" => (Method::EpsOnlyBinary, Some(DesignKind::EpsOnly)),
        "eps-full" => (Method::EpsFull, Some(DesignKind::EpsFull)),
        "eps-full-lrt" => (Method::EpsFullLrt, Some(DesignKind::EpsFull)),
        _ => return Err(validation(format!("unknown method `{s}`"))),
    })
}

/// Arms from `method` or `design:method` strings.
pub fn parse_arms(specs: &[String], scenario: &SimScenario, use_strata: bool) -> AppResult<Vec<Arm>> {
    let spec = scenario.analysis_spec(use_strata)?;
    specs
        .iter()
        .map(|s| {
            let (design, method) = match s.split_once(':') {
                Some((d, m)) => {
                    let (method, _) = parse_method(m)?;
                    (parse_design(d, scenario.params.n_genotyped)?, method)
                }
                None => {
                    let (method, d) = parse_method(s)?;
                    (
                        d.ok_or_else(|| validation(format!("method `{s}` needs a design, e.g. full:{s}")))?,
                        method,
                    )
                }
            };
            let mut ds = DesignSpec::new(design, scenario.params.n_genotyped);
            ds.exposure = E2;
            Ok(Arm {
                label: s.clone(),
                design: ds,
                analysis: Analysis {
                    method,
                    spec: spec.clone(),
                    use_strata,
                },
            })
        })
        .collect()
}

pub fn scenario_from(a: &ScenarioArgs) -> AppResult<SimScenario> {
    let params = SimParams {
        n_total: a.n_total,
        n_genotyped: a.n_genotyped.unwrap_or(a.n_total / 2),
        alpha: a.intercept,
        beta_e1: a.beta_e1,
        beta_e2: a.beta_e2,
        beta_g: a.beta_g,
        beta_e1g: a.beta_e1g,
        beta_e2g: a.beta_e2g,
        sigma: a.sigma,
        maf: a.maf,
    };
    let model = match a.model {
        ModelKind::Main => SimModel::MainEffects,
        ModelKind::BinaryInteraction => SimModel::BinaryInteraction,
        ModelKind::ContinuousInteraction => SimModel::ContinuousInteraction,
    };
    let mut sc = SimScenario::new(model, params, a.seed);
    if a.confounder {
        sc.confounder = Some(Confounder::default());
    }
    sc.validate()?;
    if !(a.significance > 0.0 && a.significance < 1.0) {
        return Err(validation("--significance must lie in (0, 1)"));
    }
    Ok(sc)
}

fn workers_for(a: &ScenarioArgs) -> AppResult<rayon::ThreadPool> {
    let w = resolve_workers(a.workers)?;
    log::debug!("running on {w} workers ({WORKERS_ENV} overrides the default)");
    pool(w)
}

fn run_simulate(a: &SimulateArgs) -> AppResult<()> {
    let s = &a.scenario;
    let sc = scenario_from(s)?;
    let arms = parse_arms(&s.arms, &sc, s.stratify)?;
    let mut cfg = if a.mse {
        McConfig::mse(s.replicates)
    } else {
        McConfig::power(s.replicates)
    };
    cfg.level = s.significance;
    let pool = workers_for(s)?;
    let results = arms
        .iter()
        .map(|arm| run_arm(&sc, arm, &cfg, &pool))
        .collect::<AppResult<Vec<_>>>()?;
    let mut buf = Vec::new();
    write_results(&mut buf, &sc, &results)?;
    emit(s.out.as_deref(), &buf)
}

fn run_power(a: &PowerArgs) -> AppResult<()> {
    let s = &a.scenario;
    let sc = scenario_from(s)?;
    let arms = parse_arms(&s.arms, &sc, s.stratify)?;
    let mut cfg = McConfig::power(s.replicates);
    cfg.level = s.significance;
    let pool = workers_for(s)?;
    let points = power_curve(&sc, &arms, &a.n_grid, &cfg, &pool)?;
    let mut buf = Vec::new();
    write_curve(&mut buf, &sc, &points)?;
    emit(s.out.as_deref(), &buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arms_parse_both_forms() {
        let sc = SimScenario::new(SimModel::MainEffects, SimParams::default(), 1);
        let arms = parse_arms(
            &[
                "eps-full".into(),
                "ees-only:linear".into(),
                "combined=500:eps-full".into(),
            ],
            &sc,
            false,
        )
        .unwrap();
        assert_eq!(arms[0].design.kind, DesignKind::EpsFull);
        assert_eq!(arms[1].analysis.method, Method::Linear);
        assert_eq!(arms[2].design.kind, DesignKind::Combined { n_random: 500 });
        assert!(parse_arms(&["linear".into()], &sc, false).is_err());
        assert!(parse_arms(&["combined=9999:eps-full".into()], &sc, false).is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
