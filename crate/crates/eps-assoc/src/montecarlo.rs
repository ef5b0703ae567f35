//! Parallel Monte Carlo estimation of power and mean squared error.
//!
//! Replicate `r` draws its cohort and its design from streams derived from
//! the scenario seed and `r` alone, so results do not depend on the worker
//! count. Arms run on the same seed share cohorts, which makes their
//! outcomes paired.

use std::io::Write;

use eps_core::sim::{
    check_compatible, run_replicate, Analysis, DesignKind, DesignSpec, Method, SimScenario, Statistic,
};
use rayon::prelude::*;

use crate::error::{AppError, AppResult};
use crate::io::{fmt_f64, fmt_opt, writer};

pub const WORKERS_ENV: &str = "EPS_ASSOC_WORKERS";

/// Worker count: an explicit value, else `EPS_ASSOC_WORKERS`, else the
/// available parallelism.
pub fn resolve_workers(explicit: Option<usize>) -> AppResult<usize> {
    if let Some(w) = explicit {
        return if w == 0 {
            Err(AppError::Validation(String::from("worker count must be positive")))
        } else {
            Ok(w)
        };
    }
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        return match v.trim().parse::<usize>() {
            Ok(w) if w > 0 => Ok(w),
            _ => Err(AppError::Validation(format!(
                "{WORKERS_ENV}=`{v}` is not a positive integer"
            ))),
        };
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn pool(workers: usize) -> AppResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| AppError::Validation(format!("cannot start {workers} workers: {e}")))
}

/// One design/method combination.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub label: String,
    pub design: DesignSpec,
    pub analysis: Analysis,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    pub replicates: usize,
    /// Significance level for power.
    pub level: f64,
    pub statistic: Statistic,
}

impl McConfig {
    pub fn power(replicates: usize) -> Self {
        McConfig {
            replicates,
            level: 0.05,
            statistic: Statistic::PValue,
        }
    }

    pub fn mse(replicates: usize) -> Self {
        McConfig {
            replicates,
            level: 0.05,
            statistic: Statistic::Estimate,
        }
    }
}

/// Summary of one arm. `outcomes[r]` is the p-value or estimate of
/// replicate `r`, `None` when it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub label: String,
    pub design: DesignSpec,
    pub method: Method,
    pub statistic: Statistic,
    pub seed: u64,
    pub replicates: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub outcomes: Vec<Option<f64>>,
    pub level: f64,
    pub power: Option<f64>,
    pub power_se: Option<f64>,
    pub mse: Option<f64>,
    pub mse_se: Option<f64>,
    pub mean_estimate: Option<f64>,
}

impl SimResult {
    pub fn used(&self) -> usize {
        self.replicates - self.failures
    }
}

/// Runs `cfg.replicates` replicates of one arm. Failed replicates are
/// dropped from the denominators when they are under 1% of the total;
/// otherwise the run fails.
pub fn run_arm(scenario: &SimScenario, arm: &Arm, cfg: &McConfig, pool: &rayon::ThreadPool) -> AppResult<SimResult> {
    scenario.validate()?;
    check_compatible(arm.design.kind, arm.analysis.method)?;
    if cfg.replicates == 0 {
        return Err(AppError::Validation(String::from("need at least one replicate")));
    }
    let raw: Vec<Result<f64, eps_core::Error>> = pool.install(|| {
        (0..cfg.replicates as u64)
            .into_par_iter()
            .map(|r| run_replicate(scenario, &arm.design, &arm.analysis, r, cfg.statistic))
            .collect()
    });
    let failures = raw.iter().filter(|r| r.is_err()).count();
    let first_failure = raw
        .iter()
        .enumerate()
        .find_map(|(r, x)| x.as_ref().err().map(|e| format!("replicate {r}: {e}")));
    if failures * 100 >= cfg.replicates && failures > 0 {
        return Err(AppError::Simulation(format!(
            "arm `{}`: {failures} of {} replicates failed (limit is under 1%); {}",
            arm.label,
            cfg.replicates,
            first_failure.unwrap_or_default()
        )));
    }
    if failures > 0 {
        log::warn!(
            "arm `{}`: {failures} of {} replicates failed and are excluded; {}",
            arm.label,
            cfg.replicates,
            first_failure.as_deref().unwrap_or("")
        );
    }
    let outcomes: Vec<Option<f64>> = raw.into_iter().map(|r| r.ok()).collect();
    let ok: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let m = ok.len() as f64;
    let mut res = SimResult {
        label: arm.label.clone(),
        design: arm.design,
        method: arm.analysis.method,
        statistic: cfg.statistic,
        seed: scenario.seed,
        replicates: cfg.replicates,
        failures,
        first_failure,
        outcomes,
        level: cfg.level,
        power: None,
        power_se: None,
        mse: None,
        mse_se: None,
        mean_estimate: None,
    };
    match cfg.statistic {
        Statistic::PValue => {
            let p = ok.iter().filter(|&&p| p < cfg.level).count() as f64 / m;
            res.power = Some(p);
            res.power_se = Some((p * (1.0 - p) / m).sqrt());
        }
        Statistic::Estimate => {
            let term = *arm
                .analysis
                .spec
                .tested_terms()
                .first()
                .ok_or_else(|| AppError::Validation(String::from("no tested term to estimate")))?;
            let truth = scenario
                .true_coefficient(term)
                .ok_or_else(|| AppError::Validation(String::from("tested term has no true value")))?;
            let sq: Vec<f64> = ok.iter().map(|b| (b - truth).powi(2)).collect();
            let mse = sq.iter().sum::<f64>() / m;
            let var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
            res.mse = Some(mse);
            res.mse_se = Some((var / m).sqrt());
            res.mean_estimate = Some(ok.iter().sum::<f64>() / m);
        }
    }
    Ok(res)
}

/// Power difference `a − b` over replicates where both arms succeeded,
/// with its paired standard error.
pub fn paired_power_difference(a: &SimResult, b: &SimResult) -> AppResult<(f64, f64)> {
    if a.seed != b.seed
        || a.replicates != b.replicates
        || a.statistic != Statistic::PValue
        || b.statistic != Statistic::PValue
    {
        return Err(AppError::Validation(String::from(
            "paired comparison needs power runs with the same seed and replicate count",
        )));
    }
    let (mut n, mut p10, mut p01) = (0usize, 0usize, 0usize);
    for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
        if let (Some(x), Some(y)) = (x, y) {
            n += 1;
            match (*x < a.level, *y < b.level) {
                (true, false) => p10 += 1,
                (false, true) => p01 += 1,
                _ => {}
            }
        }
    }
    let nf = n as f64;
    let (p10, p01) = (p10 as f64 / nf, p01 as f64 / nf);
    let d = p10 - p01;
    Ok((d, ((p10 + p01 - d * d) / nf).sqrt()))
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n_genotyped: usize,
    pub result: SimResult,
}

/// Power of every arm at every genotyped sample size. A combined design
/// keeps its random share of the genotyped sample.
pub fn power_curve(
    scenario: &SimScenario,
    arms: &[Arm],
    grid: &[usize],
    cfg: &McConfig,
    pool: &rayon::ThreadPool,
) -> AppResult<Vec<CurvePoint>> {
    let mut out = Vec::new();
    for &n in grid {
        if n == 0 || n > scenario.params.n_total {
            return Err(AppError::Validation(format!(
                "grid value {n} is outside [1, {}]",
                scenario.params.n_total
            )));
        }
        for arm in arms {
            let mut a = arm.clone();
            a.design.n_genotyped = n;
            if let DesignKind::Combined { n_random } = arm.design.kind {
                let share = n_random as f64 / arm.design.n_genotyped as f64;
                a.design.kind = DesignKind::Combined {
                    n_random: (share * n as f64).round() as usize,
                };
            }
            out.push(CurvePoint {
                n_genotyped: n,
                result: run_arm(scenario, &a, cfg, pool)?,
            });
        }
    }
    Ok(out)
}

pub fn design_name(kind: DesignKind) -> String {
    match kind {
        DesignKind::Full => String::from("full"),
        DesignKind::Random => String::from("random"),
        DesignKind::RsComplete => String::from("rs-complete"),
        DesignKind::EpsOnly => String::from("eps-only"),
        DesignKind::EpsFull => String::from("eps-full"),
        DesignKind::EesOnly => String::from("ees-only"),
        DesignKind::EesFull => String::from("ees-full"),
        DesignKind::Combined { n_random } => format!("combined={n_random}"),
    }
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Linear => "linear",
        Method::EpsOnly => "eps-only",
        Method::EpsOnlyBinary => "eps-only-binary",
        Method::EpsFull => "eps-full",
        Method::EpsFullLrt => "eps-full-lrt",
    }
}

pub const RESULT_HEADER: [&str; 15] = [
    "arm",
    "design",
    "method",
    "n_total",
    "n_genotyped",
    "replicates",
    "failures",
    "level",
    "power",
    "power_se",
    "mse",
    "mse_se",
    "mean_estimate",
    "seed",
    "first_failure",
];

fn result_record(scenario: &SimScenario, r: &SimResult, n_genotyped: usize) -> Vec<String> {
    vec![
        r.label.clone(),
        design_name(r.design.kind),
        method_name(r.method).to_string(),
        scenario.params.n_total.to_string(),
        n_genotyped.to_string(),
        r.replicates.to_string(),
        r.failures.to_string(),
        fmt_f64(r.level),
        fmt_opt(r.power),
        fmt_opt(r.power_se),
        fmt_opt(r.mse),
        fmt_opt(r.mse_se),
        fmt_opt(r.mean_estimate),
        r.seed.to_string(),
        r.first_failure
            .clone()
            .unwrap_or_else(|| String::from("NA"))
            .replace(['\t', '\n'], " "),
    ]
}

/// Serializes results as TSV with a header row.
pub fn write_results<W: Write>(out: W, scenario: &SimScenario, results: &[SimResult]) -> AppResult<()> {
    let mut w = writer(out);
    let tsv = |e: csv::Error| AppError::Validation(format!("writing results: {e}"));
    w.write_record(RESULT_HEADER).map_err(tsv)?;
    for r in results {
        w.write_record(result_record(scenario, r, r.design.n_genotyped))
            .map_err(tsv)?;
    }
    w.flush()
        .map_err(|e| AppError::Validation(format!("writing results: {e}")))
}

/// Long-format power curve table.
pub fn write_curve<W: Write>(out: W, scenario: &SimScenario, points: &[CurvePoint]) -> AppResult<()> {
    let mut w = writer(out);
    let tsv = |e: csv::Error| AppError::Validation(format!("writing results: {e}"));
    w.write_record(RESULT_HEADER).map_err(tsv)?;
    for p in points {
        w.write_record(result_record(scenario, &p.result, p.n_genotyped))
            .map_err(tsv)?;
    }
    w.flush()
        .map_err(|e| AppError::Validation(format!("writing results: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use eps_core::sim::{SimModel, SimParams};

    fn scenario(beta_g: f64) -> SimScenario {
        let params = SimParams {
            n_total: 300,
            n_genotyped: 150,
            beta_g,
            ..SimParams::default()
        };
        SimScenario::new(SimModel::MainEffects, params, 99)
    }

    fn arm(sc: &SimScenario, kind: DesignKind, method: Method) -> Arm {
        Arm {
            label: format!("{kind:?}"),
            design: DesignSpec::new(kind, 150),
            analysis: Analysis {
                method,
                spec: sc.analysis_spec(false).unwrap(),
                use_strata: true,
            },
        }
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let sc = scenario(0.5);
        let a = arm(&sc, DesignKind::EpsFull, Method::EpsFull);
        let r1 = run_arm(&sc, &a, &McConfig::power(40), &pool(1).unwrap()).unwrap();
        let r3 = run_arm(&sc, &a, &McConfig::power(40), &pool(3).unwrap()).unwrap();
        assert_eq!(r1, r3);
        let mut b1 = Vec::new();
        let mut b3 = Vec::new();
        write_results(&mut b1, &sc, &[r1]).unwrap();
        write_results(&mut b3, &sc, &[r3]).unwrap();
        assert_eq!(b1, b3);
    }

    #[test]
    fn single_replicate_power_is_zero_or_one() {
        let sc = scenario(0.5);
        let r = run_arm(
            &sc,
            &arm(&sc, DesignKind::Full, Method::Linear),
            &McConfig::power(1),
            &pool(1).unwrap(),
        )
        .unwrap();
        assert!(r.power == Some(0.0) || r.power == Some(1.0));
        assert_eq!(r.power_se, Some(0.0));
    }

    #[test]
    fn power_counts_rejections() {
        let sc = scenario(0.5);
        let r = run_arm(
            &sc,
            &arm(&sc, DesignKind::Full, Method::Linear),
            &McConfig::power(30),
            &pool(1).unwrap(),
        )
        .unwrap();
        let k = r.outcomes.iter().flatten().filter(|&&p| p < 0.05).count();
        assert_eq!(r.power, Some(k as f64 / 30.0));
    }

    #[test]
    fn near_noiseless_mse_vanishes() {
        let mut sc = scenario(0.5);
        sc.params.sigma = 1e-9;
        let r = run_arm(
            &sc,
            &arm(&sc, DesignKind::Full, Method::Linear),
            &McConfig::mse(5),
            &pool(1).unwrap(),
        )
        .unwrap();
        assert!(r.mse.unwrap() < 1e-12);
    }

    #[test]
    fn incompatible_arm_is_a_validation_error() {
        let sc = scenario(0.5);
        let err = run_arm(
            &sc,
            &arm(&sc, DesignKind::Random, Method::EpsOnly),
            &McConfig::power(5),
            &pool(1).unwrap(),
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn paired_difference_of_an_arm_with_itself_is_zero() {
        let sc = scenario(0.3);
        let a = arm(&sc, DesignKind::Random, Method::Linear);
        let r = run_arm(&sc, &a, &McConfig::power(20), &pool(1).unwrap()).unwrap();
        assert_eq!(paired_power_difference(&r, &r).unwrap(), (0.0, 0.0));
    }
}
