use eps_core::eps_full::{
    estimate_genotype_dist, gradient_eps_full, loglik_eps_full, score_test_eps_full, EpsFullNull, GenotypeModel,
};
use eps_core::eps_only::{gradient_eps_only, loglik_eps_only, EpsOnlyNull, Information};
use eps_core::linreg::score_test_linear;
use eps_core::model::{
    build_design, select_extremes, Dataset, Genotype, MissingPolicy, ModelSpec, ParameterVector, Term,
};
use eps_core::stats::finite_diff_gradient;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cohort(rng: &mut ChaCha8Rng, n: usize, beta_g: f64, missing: f64) -> Dataset {
    let noise = Normal::new(0.0, 1.5).unwrap();
    let mut y = Vec::new();
    let mut e = Vec::new();
    let mut g = Vec::new();
    for _ in 0..n {
        let ev: f64 = rng.random_range(-1.0..1.0);
        let gv = u8::from(rng.random_bool(0.35)) + u8::from(rng.random_bool(0.35));
        y.push(1.0 + 0.8 * ev + beta_g * f64::from(gv) + noise.sample(rng));
        e.push(ev);
        g.push(if rng.random_bool(missing) {
            Genotype::Missing
        } else {
            Genotype::Called(gv)
        });
    }
    Dataset::new(y)
        .unwrap()
        .with_env("e", e)
        .unwrap()
        .with_snp("g", g)
        .unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn eps_only_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = ModelSpec::new(vec![0], vec![0], vec![(0, 0)]).unwrap();
    for _ in 0..10 {
        let ds = cohort(&mut rng, 300, 0.3, 0.0);
        let d = select_extremes(ds.y(), 60, 60).unwrap();
        let view = build_design(&ds, &spec, Some(&d), MissingPolicy::Reject).unwrap();
        let coefs: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
        let sigma = rng.random_range(0.8..2.5);
        let p = ParameterVector::from_coefficients(&spec, &coefs, sigma).unwrap();
        let g = gradient_eps_only(&p, &view, d.c_lower(), d.c_upper()).unwrap();
        let mut point = coefs.clone();
        point.push(sigma);
        let fd = finite_diff_gradient(
            |x| {
                let q = ParameterVector::from_coefficients(&spec, &x[..4], x[4]).unwrap();
                loglik_eps_only(&q, &view, d.c_lower(), d.c_upper()).unwrap()
            },
            &point,
            None,
        );
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel(*a, *b) < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn eps_full_gradient_matches_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let spec = ModelSpec::new(vec![0], vec![0], vec![(0, 0)]).unwrap();
    for _ in 0..10 {
        let ds = cohort(&mut rng, 200, 0.4, 0.5);
        let dist = estimate_genotype_dist(&ds, 0, GenotypeModel::Saturated).unwrap();
        let coefs: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.5)).collect();
        let sigma = rng.random_range(0.8..2.5);
        let p = ParameterVector::from_coefficients(&spec, &coefs, sigma).unwrap();
        let dists = [dist];
        let g = gradient_eps_full(&p, &ds, &spec, &dists).unwrap();
        let mut point = coefs.clone();
        point.push(sigma);
        let fd = finite_diff_gradient(
            |x| {
                let q = ParameterVector::from_coefficients(&spec, &x[..4], x[4]).unwrap();
                loglik_eps_full(&q, &ds, &spec, &dists).unwrap()
            },
            &point,
            None,
        );
        for (a, b) in g.iter().zip(&fd) {
            assert!(rel(*a, *b) < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn observed_information_form_matches_differenced_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let spec = ModelSpec::new(vec![0], vec![0], vec![])
        .unwrap()
        .with_tested(vec![Term::Snp(0)])
        .unwrap();
    for _ in 0..5 {
        let ds = cohort(&mut rng, 400, 0.0, 0.0);
        let d = select_extremes(ds.y(), 100, 100).unwrap();
        let view = build_design(&ds, &spec, Some(&d), MissingPolicy::Reject).unwrap();
        let null = EpsOnlyNull::from_view(&view, d.c_lower(), d.c_upper()).unwrap();
        let diag = null.information_diagnostic(&view.x0());
        assert!(diag.observed_vs_numeric < 1e-6, "{diag:?}");
        // The expected form differs from the observed Hessian in general.
        assert!(diag.expected_vs_numeric > diag.observed_vs_numeric);
    }
}

#[test]
fn tang_identity_for_intercept_only_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let spec = ModelSpec::new(vec![], vec![0], vec![])
        .unwrap()
        .with_tested(vec![Term::Snp(0)])
        .unwrap();
    for _ in 0..10 {
        let ds = cohort(&mut rng, 500, 0.2, 0.0);
        let d = select_extremes(ds.y(), 80, 70).unwrap();
        let view = build_design(&ds, &spec, Some(&d), MissingPolicy::Reject).unwrap();
        let null = EpsOnlyNull::from_view(&view, d.c_lower(), d.c_upper()).unwrap();
        let t = null
            .score_test(&view.x0(), &view.tested_names(), Information::Expected)
            .unwrap()
            .result
            .statistic;
        let x = view.x0().column(0);
        let n = x.len() as f64;
        let (mx, my) = (x.iter().sum::<f64>() / n, view.y.iter().sum::<f64>() / n);
        let sxy: f64 = x.iter().zip(&view.y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let syy: f64 = view.y.iter().map(|b| (b - my).powi(2)).sum();
        assert!((t - n * sxy * sxy / (sxx * syy)).abs() < 1e-8);
    }
}

#[test]
fn complete_data_eps_full_score_inflates_linear_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let spec = ModelSpec::new(vec![0], vec![0], vec![])
        .unwrap()
        .with_tested(vec![Term::Snp(0)])
        .unwrap();
    for _ in 0..10 {
        let ds = cohort(&mut rng, 300, 0.2, 0.0);
        let full = score_test_eps_full(&ds, None, &spec, GenotypeModel::Saturated)
            .unwrap()
            .result
            .statistic;
        let view = build_design(&ds, &spec, None, MissingPolicy::Reject).unwrap();
        let lin = score_test_linear(&view).unwrap().statistic;
        let n = ds.n() as f64;
        assert!(rel(full, lin / (1.0 - 2.0 * lin / n)) < 1e-10, "{full} {lin}");
    }
}

#[test]
fn eps_full_null_rejects_partially_observed_null_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let ds = cohort(&mut rng, 100, 0.0, 0.3);
    let null = ModelSpec::new(vec![0], vec![0], vec![]).unwrap();
    assert!(matches!(
        EpsFullNull::fit(&ds, &null),
        Err(eps_core::Error::Unsupported(_))
    ));
}

#[test]
fn constant_snp_is_reported_as_singular() {
    let y: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
    let ds = Dataset::new(y)
        .unwrap()
        .with_snp("mono", vec![Genotype::Called(1); 50])
        .unwrap();
    let spec = ModelSpec::new(vec![], vec![0], vec![])
        .unwrap()
        .with_tested(vec![Term::Snp(0)])
        .unwrap();
    let d = select_extremes(ds.y(), 10, 10).unwrap();
    let view = build_design(&ds, &spec, Some(&d), MissingPolicy::Reject).unwrap();
    let null = EpsOnlyNull::from_view(&view, d.c_lower(), d.c_upper()).unwrap();
    let err = null
        .score_test(&view.x0(), &view.tested_names(), Information::Expected)
        .unwrap_err();
    assert!(err.to_string().contains("mono"), "{err}");
}
