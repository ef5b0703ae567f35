//! EPS-full analysis: phenotypes and covariates for the whole cohort,
//! genotypes only for part of it. Rows with a missing genotype contribute a
//! mixture over the possible genotypes, weighted by stratum-specific
//! genotype frequencies.

use alloc::borrow::Cow;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::eps_only::log_sigma_to_sigma;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Cholesky, Lu, Matrix};
use crate::linreg::ols;
use crate::model::{
    build_design, Dataset, ExtremeDesign, FitResult, Genotype, MissingPolicy, ModelSpec, ParameterVector,
    RegressionView, Term, TestMethod, TestResult,
};
use crate::stats::normal::{log_sum_exp, norm_log_pdf};
use crate::stats::optimize::{maximize, MaximizeOptions, Objective};

/// Genotype values of the three states.
pub const STATES: [f64; 3] = [0.0, 1.0, 2.0];

/// How genotype frequencies are modelled within a stratum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GenotypeModel {
    /// Free trinomial frequencies.
    #[default]
    Saturated,
    /// Hardy-Weinberg proportions from the allele frequency.
    HardyWeinberg,
}

/// Per-stratum genotype frequencies of one SNP, with the complete-case
/// counts they were estimated from.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeDistribution {
    probs: Vec<[f64; 3]>,
    counts: Vec<[usize; 3]>,
    model: GenotypeModel,
}

impl GenotypeDistribution {
    /// Frequencies given directly, one row per stratum. Counts are zero.
    pub fn new(probs: Vec<[f64; 3]>) -> Result<Self> {
        for (j, p) in probs.iter().enumerate() {
            if p.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(invalid(format!(
                    "stratum {j}: genotype frequencies must be a distribution"
                )));
            }
        }
        let counts = vec![[0; 3]; probs.len()];
        Ok(GenotypeDistribution {
            probs,
            counts,
            model: GenotypeModel::Saturated,
        })
    }

    /// Hardy-Weinberg frequencies for the given allele frequency per stratum.
    pub fn from_allele_frequencies(q: &[f64]) -> Result<Self> {
        if let Some(v) = q.iter().find(|v| !(**v >= 0.0 && **v <= 1.0)) {
            return Err(invalid(format!("allele frequency {v} outside [0, 1]")));
        }
        let mut d = Self::new(q.iter().map(|&q| hwe(q)).collect())?;
        d.model = GenotypeModel::HardyWeinberg;
        Ok(d)
    }

    pub fn n_strata(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self, stratum: usize) -> [f64; 3] {
        self.probs[stratum]
    }

    pub fn counts(&self, stratum: usize) -> [usize; 3] {
        self.counts[stratum]
    }

    pub fn n_complete(&self, stratum: usize) -> usize {
        self.counts[stratum].iter().sum()
    }

    pub fn model(&self) -> GenotypeModel {
        self.model
    }

    pub fn mean(&self, stratum: usize) -> f64 {
        dot(&self.probs[stratum], &STATES)
    }

    pub fn variance(&self, stratum: usize) -> f64 {
        let p = self.probs[stratum];
        let m = self.mean(stratum);
        p[1] + 4.0 * p[2] - m * m
    }

    /// States with positive probability.
    pub fn support(&self, stratum: usize) -> impl Iterator<Item = u8> + '_ {
        (0..3u8).filter(move |&k| self.probs[stratum][k as usize] > 0.0)
    }
}

fn hwe(q: f64) -> [f64; 3] {
    [(1.0 - q) * (1.0 - q), 2.0 * q * (1.0 - q), q * q]
}

/// Estimates the genotype frequencies of `snp` in each stratum from the
/// rows where it is observed. A stratum that has rows but no observed
/// genotype is an error. Strata with no rows at all get a placeholder
/// uniform distribution.
pub fn estimate_genotype_dist(ds: &Dataset, snp: usize, model: GenotypeModel) -> Result<GenotypeDistribution> {
    if snp >= ds.n_snps() {
        return Err(invalid(format!("SNP column {snp} out of range")));
    }
    let nj = ds.n_strata();
    let mut counts = vec![[0usize; 3]; nj];
    let mut rows = vec![0usize; nj];
    for (g, &j) in ds.snp(snp).iter().zip(ds.strata()) {
        rows[j] += 1;
        if let Genotype::Called(v) = g {
            counts[j][*v as usize] += 1;
        }
    }
    let mut probs = Vec::with_capacity(nj);
    for j in 0..nj {
        let n: usize = counts[j].iter().sum();
        if n == 0 {
            if rows[j] > 0 {
                return Err(invalid(format!(
                    "stratum {j} has no observed genotypes for SNP `{}`",
                    ds.snp_names()[snp]
                )));
            }
            probs.push([1.0 / 3.0; 3]);
            continue;
        }
        let nf = n as f64;
        probs.push(match model {
            GenotypeModel::Saturated => [
                counts[j][0] as f64 / nf,
                counts[j][1] as f64 / nf,
                counts[j][2] as f64 / nf,
            ],
            GenotypeModel::HardyWeinberg => hwe((counts[j][1] + 2 * counts[j][2]) as f64 / (2.0 * nf)),
        });
    }
    Ok(GenotypeDistribution { probs, counts, model })
}

fn restrict<'a>(ds: &'a Dataset, design: Option<&ExtremeDesign>) -> Result<Cow<'a, Dataset>> {
    match design {
        None => Ok(Cow::Borrowed(ds)),
        Some(d) => {
            if d.n_rows() != ds.n() {
                return Err(invalid(format!(
                    "extreme design covers {} rows, dataset has {}",
                    d.n_rows(),
                    ds.n()
                )));
            }
            Ok(Cow::Owned(ds.mask_genotypes(d.mask())))
        }
    }
}

/// Expanded mixture: one component per combination of missing genotypes.
struct Mixture {
    k: usize,
    m: usize,
    n_strata: usize,
    y: Vec<f64>,
    stratum: Vec<usize>,
    offsets: Vec<usize>,
    x: Vec<f64>,
    states: Vec<u8>,
}

impl Mixture {
    /// `dist_snps` are the SNPs whose genotype distribution enters the
    /// likelihood; every SNP of `spec` must be among them.
    fn build(ds: &Dataset, spec: &ModelSpec, dist_snps: &[usize], support: &[Vec<Vec<u8>>]) -> Result<Self> {
        spec.validate(ds)?;
        let pos = |g: usize| dist_snps.iter().position(|&s| s == g);
        if spec.snp_columns().iter().any(|&g| pos(g).is_none()) {
            return Err(invalid("model SNP without a genotype distribution"));
        }
        let terms = spec.terms();
        let k = spec.n_coefficients();
        let m = dist_snps.len();
        let n = ds.n();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut x = Vec::new();
        let mut states = Vec::new();
        offsets.push(0);
        let mut geno = vec![0u8; m];
        let mut missing = Vec::with_capacity(m);
        let mut n_comp = 0;
        for i in 0..n {
            let j = ds.strata()[i];
            missing.clear();
            for (s, &col) in dist_snps.iter().enumerate() {
                match ds.snp(col)[i] {
                    Genotype::Called(v) => geno[s] = v,
                    Genotype::Missing => {
                        if support[s][j].is_empty() {
                            return Err(invalid(format!(
                                "row {} is missing SNP `{}` but its stratum {j} has no observed genotypes",
                                i + 1,
                                ds.snp_names()[col]
                            )));
                        }
                        missing.push(s);
                    }
                }
            }
            // Odometer over the supports of the missing SNPs.
            let mut digit = vec![0usize; missing.len()];
            loop {
                for (d, &s) in digit.iter().zip(&missing) {
                    geno[s] = support[s][j][*d];
                }
                x.push(1.0);
                for t in &terms {
                    x.push(match *t {
                        Term::Env(e) => ds.env(e)[i],
                        Term::Snp(g) => f64::from(geno[pos(g).expect("checked")]),
                        Term::Interaction { env, snp } => ds.env(env)[i] * f64::from(geno[pos(snp).expect("checked")]),
                    });
                }
                states.extend_from_slice(&geno);
                n_comp += 1;
                let mut d = 0;
                while d < missing.len() {
                    digit[d] += 1;
                    if digit[d] < support[missing[d]][j].len() {
                        break;
                    }
                    digit[d] = 0;
                    d += 1;
                }
                if d == missing.len() {
                    break;
                }
            }
            offsets.push(n_comp);
        }
        Ok(Mixture {
            k,
            m,
            n_strata: ds.n_strata(),
            y: ds.y().to_vec(),
            stratum: ds.strata().to_vec(),
            offsets,
            x,
            states,
        })
    }
}

/// Genotype probabilities: fixed, or free with one softmax per SNP and
/// stratum over the states observed there (the first one is the reference).
enum GenoParams {
    Fixed(Vec<[f64; 3]>),
    Free {
        active: Vec<[bool; 3]>,
        index: Vec<[Option<usize>; 3]>,
        n_free: usize,
    },
}

impl GenoParams {
    fn n_free(&self) -> usize {
        match self {
            GenoParams::Fixed(_) => 0,
            GenoParams::Free { n_free, .. } => *n_free,
        }
    }

    /// Log probabilities indexed `[s * J + j][state]`.
    fn log_probs(&self, logits: &[f64]) -> Vec<[f64; 3]> {
        match self {
            GenoParams::Fixed(lp) => lp.clone(),
            GenoParams::Free { active, index, .. } => active
                .iter()
                .zip(index)
                .map(|(act, idx)| {
                    let mut eta = [f64::NEG_INFINITY; 3];
                    for k in 0..3 {
                        if act[k] {
                            eta[k] = idx[k].map_or(0.0, |q| logits[q]);
                        }
                    }
                    let lse = log_sum_exp(&eta);
                    eta.map(|e| e - lse)
                })
                .collect(),
        }
    }
}

struct MixtureObjective<'a> {
    mix: &'a Mixture,
    geno: &'a GenoParams,
}

impl MixtureObjective<'_> {
    fn eval(&self, p: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let mix = self.mix;
        let (k, m, nj) = (mix.k, mix.m, mix.n_strata);
        let beta = &p[..k];
        let log_sigma = p[k];
        let sigma = log_sigma.exp();
        let s2 = sigma * sigma;
        let logp = self.geno.log_probs(&p[k + 1..]);
        let free = match self.geno {
            GenoParams::Free { index, .. } => Some(index),
            GenoParams::Fixed(_) => None,
        };
        let probs: Vec<[f64; 3]> = logp.iter().map(|lp| lp.map(f64::exp)).collect();
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut w = Vec::new();
        let mut resid = Vec::new();
        let mut total = 0.0;
        for i in 0..mix.y.len() {
            let j = mix.stratum[i];
            let (a, b) = (mix.offsets[i], mix.offsets[i + 1]);
            w.clear();
            resid.clear();
            for c in a..b {
                let r = mix.y[i] - dot(&mix.x[c * k..(c + 1) * k], beta);
                let mut lw = norm_log_pdf(r / sigma) - log_sigma;
                for s in 0..m {
                    lw += logp[s * nj + j][mix.states[c * m + s] as usize];
                }
                w.push(lw);
                resid.push(r);
            }
            let lse = if b - a == 1 { w[0] } else { log_sum_exp(&w) };
            total += lse;
            let Some(g) = grad.as_deref_mut() else {
                continue;
            };
            if !lse.is_finite() {
                continue;
            }
            for (ci, c) in (a..b).enumerate() {
                let pi = if b - a == 1 { 1.0 } else { (w[ci] - lse).exp() };
                if pi == 0.0 {
                    continue;
                }
                let r = resid[ci];
                let wr = pi * r / s2;
                for (gj, xj) in g[..k].iter_mut().zip(&mix.x[c * k..(c + 1) * k]) {
                    *gj += wr * xj;
                }
                g[k] += pi * (r * r / s2 - 1.0);
                if let Some(index) = free {
                    for s in 0..m {
                        let cell = s * nj + j;
                        let state = mix.states[c * m + s] as usize;
                        for (st, q) in index[cell].iter().enumerate() {
                            if let Some(q) = q {
                                let ind = if st == state { 1.0 } else { 0.0 };
                                g[k + 1 + q] += pi * (ind - probs[cell][st]);
                            }
                        }
                    }
                }
            }
        }
        total
    }
}

impl Objective for MixtureObjective<'_> {
    fn dim(&self) -> usize {
        self.mix.k + 1 + self.geno.n_free()
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

fn fixed_params(dists: &[GenotypeDistribution], n_strata: usize) -> Result<(GenoParams, Vec<Vec<Vec<u8>>>)> {
    let mut lp = Vec::with_capacity(dists.len() * n_strata);
    let mut support = Vec::with_capacity(dists.len());
    for d in dists {
        if d.n_strata() != n_strata {
            return Err(invalid(format!(
                "genotype distribution has {} strata, dataset has {n_strata}",
                d.n_strata()
            )));
        }
        support.push((0..n_strata).map(|j| d.support(j).collect()).collect());
        for j in 0..n_strata {
            lp.push(d.probs(j).map(|p| p.ln()));
        }
    }
    Ok((GenoParams::Fixed(lp), support))
}

/// Free parameterization over the observed states, with starting logits.
fn free_params(
    dists: &[GenotypeDistribution],
    n_strata: usize,
) -> (GenoParams, Vec<Vec<Vec<u8>>>, Vec<f64>, Vec<(usize, usize, usize)>) {
    let mut active = Vec::new();
    let mut index = Vec::new();
    let mut start = Vec::new();
    let mut labels = Vec::new();
    let mut support = Vec::new();
    for (s, d) in dists.iter().enumerate() {
        let mut per = Vec::new();
        for j in 0..n_strata {
            let c = d.counts(j);
            let act = [c[0] > 0, c[1] > 0, c[2] > 0];
            let mut idx = [None; 3];
            let states: Vec<u8> = (0..3u8).filter(|&k| act[k as usize]).collect();
            if let Some(&r) = states.first() {
                let pr = d.probs(j)[r as usize];
                for &st in &states[1..] {
                    idx[st as usize] = Some(start.len());
                    start.push((d.probs(j)[st as usize] / pr).ln());
                    labels.push((s, j, st as usize));
                }
            }
            per.push(states);
            active.push(act);
            index.push(idx);
        }
        support.push(per);
    }
    let n_free = start.len();
    (GenoParams::Free { active, index, n_free }, support, start, labels)
}

/// Mixture log-likelihood with the genotype distributions held fixed; one
/// distribution per SNP of `spec`, in order.
pub fn loglik_eps_full(
    params: &ParameterVector,
    ds: &Dataset,
    spec: &ModelSpec,
    dists: &[GenotypeDistribution],
) -> Result<f64> {
    if !params.matches(spec) {
        return Err(invalid("parameter vector does not match the model"));
    }
    if dists.len() != spec.snp_columns().len() {
        return Err(invalid("need one genotype distribution per model SNP"));
    }
    let (geno, support) = fixed_params(dists, ds.n_strata())?;
    let mix = Mixture::build(ds, spec, spec.snp_columns(), &support)?;
    let mut p = params.coefficients();
    p.push(params.sigma.ln());
    Ok(MixtureObjective { mix: &mix, geno: &geno }.value(&p))
}

/// Analytic gradient in `(β, σ)` with the distributions held fixed.
pub fn gradient_eps_full(
    params: &ParameterVector,
    ds: &Dataset,
    spec: &ModelSpec,
    dists: &[GenotypeDistribution],
) -> Result<Vec<f64>> {
    if !params.matches(spec) || dists.len() != spec.snp_columns().len() {
        return Err(invalid("parameters or distributions do not match the model"));
    }
    let (geno, support) = fixed_params(dists, ds.n_strata())?;
    let mix = Mixture::build(ds, spec, spec.snp_columns(), &support)?;
    let mut p = params.coefficients();
    p.push(params.sigma.ln());
    let mut g = vec![0.0; p.len()];
    MixtureObjective { mix: &mix, geno: &geno }.gradient(&p, &mut g);
    let k = p.len() - 1;
    g[k] /= params.sigma;
    Ok(g)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsFullOptions {
    pub genotype_model: GenotypeModel,
    /// Maximize over the genotype frequencies as well. Only the saturated
    /// model can be freed; Hardy-Weinberg frequencies stay at their
    /// estimates.
    pub free_genotype_probs: bool,
    pub maximize: MaximizeOptions,
    pub level: f64,
}

impl Default for EpsFullOptions {
    fn default() -> Self {
        EpsFullOptions {
            genotype_model: GenotypeModel::Saturated,
            free_genotype_probs: true,
            maximize: MaximizeOptions::default(),
            level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsFullFit {
    pub fit: FitResult,
    /// Genotype frequencies at the estimate, one per distribution SNP.
    pub distributions: Vec<GenotypeDistribution>,
}

struct RawFit {
    argmax: Vec<f64>,
    loglik: f64,
    converged: bool,
    iterations: usize,
    gradient_norm: f64,
    information: Option<Matrix>,
    labels: Vec<(usize, usize, usize)>,
    free: bool,
}

fn starting_coefficients(ds: &Dataset, spec: &ModelSpec) -> Result<(Vec<f64>, f64)> {
    let view = build_design(ds, spec, None, MissingPolicy::DropRows)?;
    let fit = ols(&view.y, &view.x, &view.names)?;
    let s = fit.sigma2_mle().sqrt();
    if !(s > 0.0) {
        return Err(Error::Singular {
            what: "residual variance",
            columns: Vec::new(),
        });
    }
    Ok((fit.coefficients, s))
}

fn fit_raw(
    ds: &Dataset,
    spec: &ModelSpec,
    dist_snps: &[usize],
    opts: &EpsFullOptions,
    init: Option<&[f64]>,
    information: bool,
) -> Result<RawFit> {
    let dists = dist_snps
        .iter()
        .map(|&g| estimate_genotype_dist(ds, g, opts.genotype_model))
        .collect::<Result<Vec<_>>>()?;
    let free = opts.free_genotype_probs && opts.genotype_model == GenotypeModel::Saturated;
    let (geno, support, logits, labels) = if free {
        free_params(&dists, ds.n_strata())
    } else {
        let (g, s) = fixed_params(&dists, ds.n_strata())?;
        (g, s, Vec::new(), Vec::new())
    };
    let mix = Mixture::build(ds, spec, dist_snps, &support)?;
    let obj = MixtureObjective { mix: &mix, geno: &geno };
    let start = match init {
        Some(p) => p.to_vec(),
        None => {
            let (mut p, s) = starting_coefficients(ds, spec)?;
            p.push(s.ln());
            p.extend_from_slice(&logits);
            p
        }
    };
    let mut mo = opts.maximize;
    mo.information = information;
    let rep = maximize(&obj, &start, &mo)?;
    Ok(RawFit {
        argmax: rep.argmax,
        loglik: rep.max_value,
        converged: rep.converged,
        iterations: rep.iterations,
        gradient_norm: rep.gradient_norm,
        information: rep.observed_information,
        labels,
        free,
    })
}

/// Maximum-likelihood fit of the mixture model. When a design is given,
/// genotypes outside the extreme set are treated as unobserved.
pub fn fit_eps_full(
    ds: &Dataset,
    design: Option<&ExtremeDesign>,
    spec: &ModelSpec,
    opts: &EpsFullOptions,
) -> Result<EpsFullFit> {
    let ds = restrict(ds, design)?;
    let dist_snps = spec.snp_columns().to_vec();
    let raw = fit_raw(&ds, spec, &dist_snps, opts, None, true)?;
    let k = spec.n_coefficients();
    let sigma = raw.argmax[k].exp();
    let info = log_sigma_to_sigma(raw.information.as_ref().expect("requested"), k, sigma);
    let mut names = spec.coefficient_names(&ds);
    names.push(String::from("sigma"));
    for &(s, j, st) in &raw.labels {
        names.push(format!("logit[{}|stratum {j}|{st}]", ds.snp_names()[dist_snps[s]]));
    }
    let mut distributions = dists_at(&ds, &dist_snps, opts, &raw)?;
    for d in &mut distributions {
        d.model = opts.genotype_model;
    }
    let estimates = ParameterVector::from_coefficients(spec, &raw.argmax[..k], sigma)?;
    Ok(EpsFullFit {
        fit: FitResult::new(
            estimates,
            names,
            info,
            raw.loglik,
            raw.converged,
            raw.iterations,
            opts.level,
        ),
        distributions,
    })
}

fn dists_at(
    ds: &Dataset,
    dist_snps: &[usize],
    opts: &EpsFullOptions,
    raw: &RawFit,
) -> Result<Vec<GenotypeDistribution>> {
    let mut out = dist_snps
        .iter()
        .map(|&g| estimate_genotype_dist(ds, g, opts.genotype_model))
        .collect::<Result<Vec<_>>>()?;
    if raw.free {
        let k = raw.argmax.len() - raw.labels.len();
        let (geno, _, _, _) = free_params(&out, ds.n_strata());
        let lp = geno.log_probs(&raw.argmax[k..]);
        let nj = ds.n_strata();
        for (s, d) in out.iter_mut().enumerate() {
            for j in 0..nj {
                if d.n_complete(j) > 0 {
                    d.probs[j] = lp[s * nj + j].map(|v| v.exp());
                }
            }
        }
    }
    Ok(out)
}

/// Likelihood ratio test of `null` against `alt`. Both fits use the
/// genotype distributions of every SNP in `alt` so their likelihoods are
/// comparable.
pub fn lrt_eps_full(
    ds: &Dataset,
    design: Option<&ExtremeDesign>,
    null: &ModelSpec,
    alt: &ModelSpec,
    opts: &EpsFullOptions,
) -> Result<TestResult> {
    if !null.is_nested_in(alt) {
        return Err(invalid("null model is not nested in the alternative"));
    }
    let df = alt.n_coefficients() - null.n_coefficients();
    if df == 0 {
        return Err(invalid("alternative adds no terms"));
    }
    let ds = restrict(ds, design)?;
    let dist_snps = alt.snp_columns().to_vec();
    let f0 = fit_raw(&ds, null, &dist_snps, opts, None, false)?;
    if !f0.converged {
        return Err(Error::NotConverged {
            iterations: f0.iterations,
            gradient_norm: f0.gradient_norm,
        });
    }
    // Start the alternative at the null optimum, padded with zeros.
    let k0 = null.n_coefficients();
    let alt_terms = alt.terms();
    let mut start = vec![0.0; alt.n_coefficients()];
    start[0] = f0.argmax[0];
    for (t, v) in null.terms().iter().zip(&f0.argmax[1..k0]) {
        let at = alt_terms.iter().position(|u| u == t).expect("nested");
        start[1 + at] = *v;
    }
    start.extend_from_slice(&f0.argmax[k0..]);
    let mut f1 = fit_raw(&ds, alt, &dist_snps, opts, Some(&start), false)?;
    let mut warning = None;
    if !f1.converged || f1.loglik < f0.loglik {
        let refit = fit_raw(&ds, alt, &dist_snps, opts, None, false)?;
        if refit.converged && (!f1.converged || refit.loglik > f1.loglik) {
            f1 = refit;
        }
    }
    if !f1.converged {
        return Err(Error::NotConverged {
            iterations: f1.iterations,
            gradient_norm: f1.gradient_norm,
        });
    }
    if f1.loglik < f0.loglik {
        warning = Some(format!(
            "alternative log-likelihood fell short of the null by {:e}; statistic set to 0",
            f0.loglik - f1.loglik
        ));
    }
    let stat = (2.0 * (f1.loglik - f0.loglik)).max(0.0);
    let mut t = TestResult::new(stat, df as u32, TestMethod::LikelihoodRatio, ds.n())?;
    t.warning = warning;
    Ok(t)
}

/// The linear null model over the whole cohort, fitted once and reused
/// for every tested SNP.
#[derive(Debug, Clone)]
pub struct EpsFullNull {
    z: Matrix,
    f: Vec<f64>,
    sigma2: f64,
    strata: Vec<usize>,
    n_strata: usize,
    theta: Lu,
}

/// Score statistic and the pieces it was built from.
#[derive(Debug, Clone)]
pub struct EpsFullScore {
    pub result: TestResult,
    pub score: Vec<f64>,
    /// Efficient information for the tested coefficients.
    pub variance: Matrix,
    /// Diagonal loss of information from estimating the genotype
    /// frequencies, per tested SNP.
    pub frequency_correction: Vec<f64>,
}

impl EpsFullNull {
    /// Fits `null` by least squares over all rows. Every null term must be
    /// observed in every row.
    pub fn fit(ds: &Dataset, null: &ModelSpec) -> Result<Self> {
        let view = build_design(ds, null, None, MissingPolicy::Reject).map_err(|e| match e {
            Error::InvalidInput(m) => Error::Unsupported(format!(
                "the score test needs a fully observed null model ({m}); use the likelihood ratio test"
            )),
            e => e,
        })?;
        Self::from_view(&view, ds)
    }

    fn from_view(view: &RegressionView, ds: &Dataset) -> Result<Self> {
        let fit = ols(&view.y, &view.x, &view.names)?;
        let n = view.n() as f64;
        let sigma2 = fit.sigma2_mle();
        if !(sigma2 > 0.0) {
            return Err(Error::Singular {
                what: "residual variance",
                columns: Vec::new(),
            });
        }
        let z = view.x.clone();
        let f = fit.residuals;
        let k = z.cols();
        let sigma = sigma2.sqrt();
        let zz = z.weighted_gram(None);
        let fz = z.tr_matvec(&f);
        let sum_f2 = dot(&f, &f);
        let theta_info = Matrix::from_fn(k + 1, k + 1, |a, b| match (a < k, b < k) {
            (true, true) => zz[(a, b)] / sigma2,
            (true, false) => 2.0 * fz[a] / (sigma2 * sigma),
            (false, true) => 2.0 * fz[b] / (sigma2 * sigma),
            (false, false) => -n / sigma2 + 3.0 * sum_f2 / (sigma2 * sigma2),
        });
        let theta = Lu::new(&theta_info).map_err(|j| Error::Singular {
            what: "null information",
            columns: view.names.get(j).cloned().into_iter().collect(),
        })?;
        Ok(EpsFullNull {
            z,
            f,
            sigma2,
            strata: ds.strata().to_vec(),
            n_strata: ds.n_strata(),
            theta,
        })
    }

    pub fn residuals(&self) -> &[f64] {
        &self.f
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Score test for adding the main effects of `snps` (dataset columns).
    /// Rows with a missing genotype enter through its conditional mean and
    /// variance given the stratum.
    pub fn score_test(&self, ds: &Dataset, snps: &[usize], model: GenotypeModel) -> Result<EpsFullScore> {
        if ds.n() != self.f.len() || ds.strata() != self.strata.as_slice() {
            return Err(invalid("dataset does not match the null fit"));
        }
        if snps.is_empty() {
            return Err(invalid("no SNPs to test"));
        }
        let q = snps.len();
        let n = self.f.len();
        let nj = self.n_strata;
        let s2 = self.sigma2;
        let sigma = s2.sqrt();
        let s4 = s2 * s2;
        let k = self.z.cols();
        let mut mean = Matrix::zeros(n, q);
        let mut var = Matrix::zeros(n, q);
        let mut correction = vec![0.0; q];
        for (a, &col) in snps.iter().enumerate() {
            let dist = estimate_genotype_dist(ds, col, model)?;
            let mut miss_f = vec![0.0; nj];
            let mut has_missing = vec![false; nj];
            for i in 0..n {
                let j = self.strata[i];
                match ds.snp(col)[i] {
                    Genotype::Called(v) => mean[(i, a)] = f64::from(v),
                    Genotype::Missing => {
                        mean[(i, a)] = dist.mean(j);
                        var[(i, a)] = dist.variance(j);
                        miss_f[j] += self.f[i];
                        has_missing[j] = true;
                    }
                }
            }
            for j in 0..nj {
                let nc = dist.n_complete(j);
                if has_missing[j] && nc < 2 {
                    return Err(invalid(format!(
                        "stratum {j} has {nc} observed genotypes for SNP `{}`; at least 2 are needed",
                        ds.snp_names()[col]
                    )));
                }
                if has_missing[j] {
                    correction[a] += miss_f[j] * miss_f[j] * dist.variance(j) / (nc as f64 * s4);
                }
            }
        }
        let score: Vec<f64> = mean.tr_matvec(&self.f).iter().map(|v| v / s2).collect();
        let mut igg = mean.weighted_gram(None).scale(1.0 / s2);
        for a in 0..q {
            let mut extra = 0.0;
            for i in 0..n {
                let v = var[(i, a)];
                if v != 0.0 {
                    extra += v / s2 - self.f[i] * self.f[i] * v / s4;
                }
            }
            igg[(a, a)] += extra - correction[a];
        }
        // Cross information between the tested coefficients and (z, σ).
        let mz = mean.weighted_cross(&self.z, None);
        let fm = mean.tr_matvec(&self.f);
        let cross = Matrix::from_fn(q, k + 1, |a, b| {
            if b < k {
                mz[(a, b)] / s2
            } else {
                2.0 * fm[a] / (s2 * sigma)
            }
        });
        let solved = self.theta.solve_matrix(&cross.transpose());
        let mut variance = igg.sub(&cross.matmul(&solved));
        variance.symmetrize();
        let names: Vec<String> = snps.iter().map(|&c| ds.snp_names()[c].clone()).collect();
        let chol = Cholesky::new(&variance).map_err(|j| Error::Singular {
            what: "score variance",
            columns: names.get(j).cloned().into_iter().collect(),
        })?;
        let result = TestResult::new(chol.inv_quad_form(&score), q as u32, TestMethod::Score, n)?;
        Ok(EpsFullScore {
            result,
            score,
            variance,
            frequency_correction: correction,
        })
    }
}

/// Score test of the tested SNP main effects of `spec`. Tested interaction
/// terms are not supported here; use [`lrt_eps_full`].
pub fn score_test_eps_full(
    ds: &Dataset,
    design: Option<&ExtremeDesign>,
    spec: &ModelSpec,
    model: GenotypeModel,
) -> Result<EpsFullScore> {
    let mut snps = Vec::new();
    for t in spec.tested_terms() {
        match *t {
            Term::Snp(g) => snps.push(g),
            _ => {
                return Err(Error::Unsupported(String::from(
                    "the EPS-full score test covers SNP main effects only; use the likelihood ratio test",
                )))
            }
        }
    }
    let ds = restrict(ds, design)?;
    let null = EpsFullNull::fit(&ds, &spec.null_spec()?)?;
    null.score_test(&ds, &snps, model)
}
