//! Simulation models, sampling designs and single-replicate analysis for
//! power and bias studies.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::binary::{dichotomize, score_test_logistic};
use crate::eps_full::{fit_eps_full, lrt_eps_full, score_test_eps_full, EpsFullOptions, GenotypeModel};
use crate::eps_only::{fit_eps_only, EpsOnlyNull, Information};
use crate::error::{invalid, Error, Result};
use crate::linreg::ols;
use crate::model::{build_design, select_extremes, Dataset, Genotype, MissingPolicy, ModelSpec, Term, TestResult};
use crate::stats::optimize::MaximizeOptions;

/// Which interaction, if any, the generating model contains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimModel {
    MainEffects,
    /// Adds `β_e1g · e1 · g` with binary `e1`.
    BinaryInteraction,
    /// Adds `β_e2g · e2 · g` with continuous `e2`.
    ContinuousInteraction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    pub n_total: usize,
    pub n_genotyped: usize,
    pub alpha: f64,
    pub beta_e1: f64,
    pub beta_e2: f64,
    pub beta_g: f64,
    pub beta_e1g: f64,
    pub beta_e2g: f64,
    pub sigma: f64,
    /// Minor-allele frequency.
    pub maf: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            n_total: 5000,
            n_genotyped: 2500,
            alpha: 50.0,
            beta_e1: 10.0,
            beta_e2: 5.0,
            beta_g: 0.5,
            beta_e1g: 1.0,
            beta_e2g: 0.5,
            sigma: 6.0,
            maf: 0.3,
        }
    }
}

/// A binary stratum that shifts both the phenotype mean and the allele
/// frequency, producing confounding when ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confounder {
    pub stratum_prob: f64,
    pub allele_freq: [f64; 2],
    pub effect: f64,
}

impl Default for Confounder {
    fn default() -> Self {
        Confounder {
            stratum_prob: 0.5,
            allele_freq: [0.1, 0.5],
            effect: 10.0,
        }
    }
}

/// Simulated datasets have covariates `e1` (column 0) and `e2` (column 1),
/// then `s` (column 2) when there is a confounder, and one SNP `g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimScenario {
    pub model: SimModel,
    pub params: SimParams,
    pub confounder: Option<Confounder>,
    pub seed: u64,
}

pub const E1: usize = 0;
pub const E2: usize = 1;
pub const S: usize = 2;
pub const G: usize = 0;

impl SimScenario {
    pub fn new(model: SimModel, params: SimParams, seed: u64) -> Self {
        SimScenario {
            model,
            params,
            confounder: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        if p.n_total == 0 || p.n_genotyped == 0 || p.n_genotyped > p.n_total {
            return Err(invalid(format!(
                "need 0 < genotyped ({}) <= total ({})",
                p.n_genotyped, p.n_total
            )));
        }
        if !(p.sigma > 0.0) {
            return Err(invalid("sigma must be positive"));
        }
        if !(p.maf > 0.0 && p.maf < 1.0) {
            return Err(invalid("minor-allele frequency must lie in (0, 1)"));
        }
        if let Some(c) = &self.confounder {
            if !(c.stratum_prob > 0.0 && c.stratum_prob < 1.0) || c.allele_freq.iter().any(|q| !(*q > 0.0 && *q < 1.0))
            {
                return Err(invalid("confounder probabilities must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// The term tested by default: the SNP main effect, or the interaction
    /// of the generating model.
    pub fn default_tested(&self) -> Term {
        match self.model {
            SimModel::MainEffects => Term::Snp(G),
            SimModel::BinaryInteraction => Term::Interaction { env: E1, snp: G },
            SimModel::ContinuousInteraction => Term::Interaction { env: E2, snp: G },
        }
    }

    /// The generating model as a [`ModelSpec`], optionally with the
    /// confounding stratum as a covariate, testing [`Self::default_tested`].
    pub fn analysis_spec(&self, adjust_for_stratum: bool) -> Result<ModelSpec> {
        let mut env = vec![E1, E2];
        if adjust_for_stratum {
            if self.confounder.is_none() {
                return Err(invalid("scenario has no confounding stratum"));
            }
            env.push(S);
        }
        let pairs = match self.model {
            SimModel::MainEffects => vec![],
            SimModel::BinaryInteraction => vec![(E1, G)],
            SimModel::ContinuousInteraction => vec![(E2, G)],
        };
        ModelSpec::new(env, vec![G], pairs)?.with_tested(vec![self.default_tested()])
    }

    /// True value of the coefficient of `term`.
    pub fn true_coefficient(&self, term: Term) -> Option<f64> {
        let p = &self.params;
        match term {
            Term::Env(E1) => Some(p.beta_e1),
            Term::Env(E2) => Some(p.beta_e2),
            Term::Env(S) => self.confounder.map(|c| c.effect),
            Term::Snp(G) => Some(p.beta_g),
            Term::Interaction { env: E1, snp: G } => Some(if self.model == SimModel::BinaryInteraction {
                p.beta_e1g
            } else {
                0.0
            }),
            Term::Interaction { env: E2, snp: G } => Some(if self.model == SimModel::ContinuousInteraction {
                p.beta_e2g
            } else {
                0.0
            }),
            _ => None,
        }
    }
}

/// Which random stream of a replicate to draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data,
    Design,
}

/// Independent generator for one replicate. Data and design streams are
/// separate so every design sees the same cohort.
pub fn replicate_rng(seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * replicate + u64::from(stream == Stream::Design));
    rng
}

fn hwe_draw(rng: &mut impl Rng, q: f64) -> u8 {
    u8::from(rng.random_bool(q)) + u8::from(rng.random_bool(q))
}

/// Draws a full cohort of `n_total` rows.
pub fn simulate_dataset(sc: &SimScenario, rng: &mut impl Rng) -> Result<Dataset> {
    sc.validate()?;
    let p = &sc.params;
    let n = p.n_total;
    let noise = Normal::new(0.0, p.sigma).map_err(|e| invalid(format!("{e}")))?;
    let unit = Normal::new(2.0, 1.0).map_err(|e| invalid(format!("{e}")))?;
    let mut y = Vec::with_capacity(n);
    let mut e1 = Vec::with_capacity(n);
    let mut e2 = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    for _ in 0..n {
        let a = f64::from(u8::from(rng.random_bool(0.4)));
        let b = unit.sample(rng);
        let (stratum, q) = match &sc.confounder {
            Some(c) => {
                let st = usize::from(rng.random_bool(c.stratum_prob));
                (st, c.allele_freq[st])
            }
            None => (0, p.maf),
        };
        let gv = hwe_draw(rng, q);
        let gf = f64::from(gv);
        let mut mu = p.alpha + p.beta_e1 * a + p.beta_e2 * b + p.beta_g * gf;
        match sc.model {
            SimModel::MainEffects => {}
            SimModel::BinaryInteraction => mu += p.beta_e1g * a * gf,
            SimModel::ContinuousInteraction => mu += p.beta_e2g * b * gf,
        }
        if let Some(c) = &sc.confounder {
            mu += c.effect * stratum as f64;
        }
        y.push(mu + noise.sample(rng));
        e1.push(a);
        e2.push(b);
        s.push(stratum);
        g.push(Genotype::Called(gv));
    }
    let mut ds = Dataset::new(y)?.with_env("e1", e1)?.with_env("e2", e2)?;
    if sc.confounder.is_some() {
        ds = ds
            .with_env("s", s.iter().map(|&v| v as f64).collect())?
            .with_strata(s)?;
    }
    ds.with_snp("g", g)
}

/// How the genotyped sub-sample is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignKind {
    /// Everyone genotyped.
    Full,
    /// A simple random sub-sample, analysed alone.
    Random,
    /// A random sub-sample genotyped; everyone else kept with missing
    /// genotype.
    RsComplete,
    /// Phenotype extremes, analysed alone.
    EpsOnly,
    /// Phenotype extremes genotyped; everyone else kept with missing
    /// genotype.
    EpsFull,
    /// Extremes of an exposure, analysed alone.
    EesOnly,
    /// Extremes of an exposure genotyped; the rest kept.
    EesFull,
    /// `n_random` random rows plus phenotype extremes from the remainder;
    /// the rest kept.
    Combined { n_random: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DesignSpec {
    pub kind: DesignKind,
    /// Number of rows genotyped.
    pub n_genotyped: usize,
    /// Covariate column whose extremes drive the EES designs.
    pub exposure: usize,
}

impl DesignSpec {
    pub fn new(kind: DesignKind, n_genotyped: usize) -> Self {
        DesignSpec {
            kind,
            n_genotyped,
            exposure: E2,
        }
    }
}

/// A sampled dataset and, for truncated analyses, the cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub data: Dataset,
    pub cutoffs: Option<(f64, f64)>,
}

fn random_rows(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

fn tails(n: usize) -> (usize, usize) {
    (n / 2, n - n / 2)
}

/// Applies a sampling design to a full cohort.
pub fn apply_design(ds: &Dataset, spec: &DesignSpec, rng: &mut impl Rng) -> Result<Sample> {
    let n = ds.n();
    let k = spec.n_genotyped;
    if k == 0 || k > n {
        return Err(invalid(format!("cannot genotype {k} of {n} rows")));
    }
    let keep_mask = |rows: &[usize]| {
        let mut m = vec![false; n];
        for &i in rows {
            m[i] = true;
        }
        m
    };
    let exposure = || -> Result<&[f64]> {
        if spec.exposure >= ds.n_env() {
            return Err(invalid(format!("exposure column {} out of range", spec.exposure)));
        }
        Ok(ds.env(spec.exposure))
    };
    Ok(match spec.kind {
        DesignKind::Full => Sample {
            data: ds.clone(),
            cutoffs: None,
        },
        DesignKind::Random => Sample {
            data: ds.subset(&random_rows(n, k, rng)),
            cutoffs: None,
        },
        DesignKind::RsComplete => Sample {
            data: ds.mask_genotypes(&keep_mask(&random_rows(n, k, rng))),
            cutoffs: None,
        },
        DesignKind::EpsOnly => {
            let (lo, hi) = tails(k);
            let d = select_extremes(ds.y(), lo, hi)?;
            Sample {
                data: ds.subset(d.members()),
                cutoffs: Some((d.c_lower(), d.c_upper())),
            }
        }
        DesignKind::EpsFull => {
            let (lo, hi) = tails(k);
            let d = select_extremes(ds.y(), lo, hi)?;
            Sample {
                data: ds.mask_genotypes(d.mask()),
                cutoffs: None,
            }
        }
        DesignKind::EesOnly => {
            let (lo, hi) = tails(k);
            let d = select_extremes(exposure()?, lo, hi)?;
            Sample {
                data: ds.subset(d.members()),
                cutoffs: None,
            }
        }
        DesignKind::EesFull => {
            let (lo, hi) = tails(k);
            let d = select_extremes(exposure()?, lo, hi)?;
            Sample {
                data: ds.mask_genotypes(d.mask()),
                cutoffs: None,
            }
        }
        DesignKind::Combined { n_random } => {
            if n_random > k {
                return Err(invalid(format!("{n_random} random rows exceed {k} genotyped")));
            }
            let random = random_rows(n, n_random, rng);
            let mut mask = keep_mask(&random);
            let rest: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
            let rest_y: Vec<f64> = rest.iter().map(|&i| ds.y()[i]).collect();
            let (lo, hi) = tails(k - n_random);
            let d = select_extremes(&rest_y, lo, hi)?;
            for &r in d.members() {
                mask[rest[r]] = true;
            }
            Sample {
                data: ds.mask_genotypes(&mask),
                cutoffs: None,
            }
        }
    })
}

/// Analysis method applied to a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Normal linear model on fully genotyped rows.
    Linear,
    /// Truncated likelihood, expected-information score test.
    EpsOnly,
    /// Logistic regression on dichotomized extremes.
    EpsOnlyBinary,
    /// Mixture likelihood; score test for SNP main effects, likelihood
    /// ratio test otherwise.
    EpsFull,
    /// Mixture likelihood, always the likelihood ratio test.
    EpsFullLrt,
}

/// Rejects method/design pairs whose likelihood does not describe the
/// sample.
pub fn check_compatible(kind: DesignKind, method: Method) -> Result<()> {
    use DesignKind as D;
    let ok = match method {
        Method::Linear => matches!(kind, D::Full | D::Random | D::EesOnly),
        Method::EpsOnly | Method::EpsOnlyBinary => kind == D::EpsOnly,
        Method::EpsFull | Method::EpsFullLrt => {
            matches!(
                kind,
                D::Full | D::RsComplete | D::EpsFull | D::EesFull | D::Combined { .. }
            )
        }
    };
    if ok {
        Ok(())
    } else {
        Err(invalid(format!("method {method:?} cannot analyse a {kind:?} sample")))
    }
}

/// What to do with a replicate's sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub method: Method,
    pub spec: ModelSpec,
    /// Use the dataset's strata for genotype frequencies; otherwise treat
    /// the cohort as one stratum.
    pub use_strata: bool,
}

fn cutoffs(sample: &Sample) -> Result<(f64, f64)> {
    sample
        .cutoffs
        .ok_or_else(|| invalid("truncated analysis needs an extreme-phenotype sample"))
}

fn prepared(sample: &Sample, analysis: &Analysis) -> Result<Dataset> {
    let ds = sample.data.clone();
    if analysis.use_strata {
        Ok(ds)
    } else {
        let n = ds.n();
        ds.with_strata(vec![0; n])
    }
}

/// Tests the analysis' tested terms on one sample.
pub fn test_sample(sample: &Sample, analysis: &Analysis) -> Result<TestResult> {
    let spec = &analysis.spec;
    let ds = prepared(sample, analysis)?;
    match analysis.method {
        Method::Linear => {
            let view = build_design(&ds, spec, None, MissingPolicy::Reject)?;
            crate::linreg::score_test_linear(&view)
        }
        Method::EpsOnly => {
            let (cl, cu) = cutoffs(sample)?;
            let view = build_design(&ds, spec, None, MissingPolicy::Reject)?;
            let null = EpsOnlyNull::from_view(&view, cl, cu)?;
            Ok(null
                .score_test(&view.x0(), &view.tested_names(), Information::Expected)?
                .result)
        }
        Method::EpsOnlyBinary => {
            let (cl, cu) = cutoffs(sample)?;
            let view = build_design(&ds, spec, None, MissingPolicy::Reject)?;
            let y = dichotomize(&view.y, cl, cu)?;
            score_test_logistic(&y, &view.z(), &view.x0(), &view.nuisance_names(), &view.tested_names())
        }
        Method::EpsFull if spec.tested_terms().iter().all(|t| matches!(t, Term::Snp(_))) => {
            Ok(score_test_eps_full(&ds, None, spec, GenotypeModel::Saturated)?.result)
        }
        Method::EpsFull | Method::EpsFullLrt => {
            lrt_eps_full(&ds, None, &spec.null_spec()?, spec, &EpsFullOptions::default())
        }
    }
}

/// Estimates the coefficient of the first tested term on one sample.
pub fn estimate_sample(sample: &Sample, analysis: &Analysis) -> Result<f64> {
    let spec = &analysis.spec;
    let term = *spec
        .tested_terms()
        .first()
        .ok_or_else(|| invalid("no tested term to estimate"))?;
    let col = 1 + spec.terms().iter().position(|t| *t == term).expect("validated");
    let ds = prepared(sample, analysis)?;
    let coefs = match analysis.method {
        Method::Linear => {
            let view = build_design(&ds, spec, None, MissingPolicy::Reject)?;
            ols(&view.y, &view.x, &view.names)?.coefficients
        }
        Method::EpsOnly => {
            let (cl, cu) = cutoffs(sample)?;
            let view = build_design(&ds, spec, None, MissingPolicy::Reject)?;
            let fit = fit_eps_only(&view, spec, cl, cu, &MaximizeOptions::default(), 0.95)?;
            converged(fit.converged, fit.iterations)?;
            fit.estimates.coefficients()
        }
        Method::EpsFull | Method::EpsFullLrt => {
            let fit = fit_eps_full(&ds, None, spec, &EpsFullOptions::default())?.fit;
            converged(fit.converged, fit.iterations)?;
            fit.estimates.coefficients()
        }
        Method::EpsOnlyBinary => {
            return Err(Error::Unsupported(String::from(
                "the dichotomized analysis estimates log-odds, not the phenotype effect",
            )))
        }
    };
    Ok(coefs[col])
}

fn converged(ok: bool, iterations: usize) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::NotConverged {
            iterations,
            gradient_norm: f64::NAN,
        })
    }
}

/// What one replicate should report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    PValue,
    Estimate,
}

/// Simulates replicate `r` of a scenario, samples it and analyses it.
pub fn run_replicate(
    scenario: &SimScenario,
    design: &DesignSpec,
    analysis: &Analysis,
    replicate: u64,
    statistic: Statistic,
) -> Result<f64> {
    check_compatible(design.kind, analysis.method)?;
    let mut data_rng = replicate_rng(scenario.seed, replicate, Stream::Data);
    let ds = simulate_dataset(scenario, &mut data_rng)?;
    let mut design_rng = replicate_rng(scenario.seed, replicate, Stream::Design);
    let sample = apply_design(&ds, design, &mut design_rng)?;
    match statistic {
        Statistic::PValue => Ok(test_sample(&sample, analysis)?.p_value),
        Statistic::Estimate => estimate_sample(&sample, analysis),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_scenario() -> SimScenario {
        let params = SimParams {
            n_total: 400,
            n_genotyped: 200,
            ..SimParams::default()
        };
        SimScenario::new(SimModel::MainEffects, params, 7)
    }

    #[test]
    fn replicates_are_reproducible_and_distinct() {
        let sc = small_scenario();
        let a = simulate_dataset(&sc, &mut replicate_rng(7, 3, Stream::Data)).unwrap();
        let b = simulate_dataset(&sc, &mut replicate_rng(7, 3, Stream::Data)).unwrap();
        let c = simulate_dataset(&sc, &mut replicate_rng(7, 4, Stream::Data)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.y(), c.y());
    }

    #[test]
    fn designs_have_requested_sizes() {
        let sc = small_scenario();
        let ds = simulate_dataset(&sc, &mut replicate_rng(1, 0, Stream::Data)).unwrap();
        let mut rng = replicate_rng(1, 0, Stream::Design);
        let genotyped = |s: &Sample| s.data.snp(G).iter().filter(|g| !g.is_missing()).count();
        for kind in [
            DesignKind::Random,
            DesignKind::RsComplete,
            DesignKind::EpsOnly,
            DesignKind::EpsFull,
            DesignKind::EesOnly,
            DesignKind::EesFull,
            DesignKind::Combined { n_random: 50 },
        ] {
            let s = apply_design(&ds, &DesignSpec::new(kind, 200), &mut rng).unwrap();
            assert_eq!(genotyped(&s), 200, "{kind:?}");
        }
    }

    #[test]
    fn random_and_rs_complete_share_rows() {
        let sc = small_scenario();
        let ds = simulate_dataset(&sc, &mut replicate_rng(1, 0, Stream::Data)).unwrap();
        let a = apply_design(
            &ds,
            &DesignSpec::new(DesignKind::Random, 100),
            &mut replicate_rng(1, 0, Stream::Design),
        )
        .unwrap();
        let b = apply_design(
            &ds,
            &DesignSpec::new(DesignKind::RsComplete, 100),
            &mut replicate_rng(1, 0, Stream::Design),
        )
        .unwrap();
        let kept: Vec<f64> = (0..ds.n())
            .filter(|&i| !b.data.snp(G)[i].is_missing())
            .map(|i| ds.y()[i])
            .collect();
        assert_eq!(kept, a.data.y());
    }

    #[test]
    fn incompatible_pairs_are_rejected() {
        assert!(check_compatible(DesignKind::EpsOnly, Method::Linear).is_err());
        assert!(check_compatible(DesignKind::Random, Method::EpsOnly).is_err());
        assert!(check_compatible(DesignKind::Combined { n_random: 1 }, Method::EpsFull).is_ok());
    }

    #[test]
    fn one_replicate_of_each_method_runs() {
        let sc = small_scenario();
        let spec = sc.analysis_spec(false).unwrap();
        for (kind, method) in [
            (DesignKind::Full, Method::Linear),
            (DesignKind::Random, Method::Linear),
            (DesignKind::EpsOnly, Method::EpsOnly),
            (DesignKind::EpsOnly, Method::EpsOnlyBinary),
            (DesignKind::EpsFull, Method::EpsFull),
            (DesignKind::EpsFull, Method::EpsFullLrt),
        ] {
            let a = Analysis {
                method,
                spec: spec.clone(),
                use_strata: true,
            };
            let p = run_replicate(&sc, &DesignSpec::new(kind, 200), &a, 0, Statistic::PValue).unwrap();
            assert!((0.0..=1.0).contains(&p), "{method:?}");
        }
    }
}
