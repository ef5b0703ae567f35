use eps_core::eps_full::{loglik_eps_full, GenotypeDistribution};
use eps_core::eps_only::{loglik_eps_only, EpsOnlyNull, Information};
use eps_core::linalg::{Cholesky, Matrix};
use eps_core::linreg::LinearNull;
use eps_core::model::{build_design, select_extremes, Dataset, Genotype, MissingPolicy, ModelSpec, ParameterVector};
use eps_core::stats::{chi2_sf, log_sum_exp, maximize, norm_cdf, norm_log_pdf, FnObjective, MaximizeOptions};
use proptest::prelude::*;

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

proptest! {
    #[test]
    fn normal_cdf_is_symmetric(x in -30.0f64..30.0) {
        prop_assert!((norm_cdf(x) + norm_cdf(-x) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn normal_cdf_is_monotone(x in -10.0f64..10.0, dx in 1e-6f64..1.0) {
        prop_assert!(norm_cdf(x + dx) >= norm_cdf(x));
    }

    #[test]
    fn chi2_tail_is_a_decreasing_probability(t in 0.0f64..200.0, dt in 1e-3f64..10.0, df in 1u32..40) {
        let a = chi2_sf(t, df).unwrap();
        let b = chi2_sf(t + dt, df).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a);
        prop_assert!(chi2_sf(t, df + 1).unwrap() >= a - 1e-15);
    }

    #[test]
    fn log_sum_exp_is_shift_equivariant(xs in prop::collection::vec(-50.0f64..50.0, 1..8), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let a = log_sum_exp(&xs);
        prop_assert!((log_sum_exp(&shifted) - a - c).abs() < 1e-10);
        prop_assert!(a >= xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn extremes_are_consistent(ys in prop::collection::vec(-100.0f64..100.0, 4..60), lo_frac in 0.0f64..0.5, hi_frac in 0.0f64..0.5) {
        let n = ys.len();
        let lo = (lo_frac * n as f64) as usize;
        let hi = (hi_frac * n as f64) as usize;
        if let Ok(d) = select_extremes(&ys, lo, hi) {
            prop_assert_eq!(d.members().len(), lo + hi);
            prop_assert!(d.c_lower() <= d.c_upper());
            prop_assert!(d.is_consistent_with(&ys));
        }
    }

    #[test]
    fn maximizer_recovers_quadratic_optimum(
        entries in prop::collection::vec(-1.0f64..1.0, 9),
        b in prop::collection::vec(-3.0f64..3.0, 3),
    ) {
        // A = LLᵀ + I is positive definite.
        let l = Matrix::from_row_major(3, 3, entries);
        let a = l.matmul(&l.transpose()).add(&Matrix::identity(3));
        let obj = FnObjective::new(
            3,
            |x: &[f64]| b.iter().zip(x).map(|(u, v)| u * v).sum::<f64>() - 0.5 * x.iter().zip(a.matvec(x)).map(|(u, v)| u * v).sum::<f64>(),
            |x: &[f64], g: &mut [f64]| {
                let ax = a.matvec(x);
                for i in 0..3 {
                    g[i] = b[i] - ax[i];
                }
            },
        );
        let rep = maximize(&obj, &[0.0; 3], &MaximizeOptions::default()).unwrap();
        let want = Cholesky::new(&a).unwrap().solve(&b);
        for i in 0..3 {
            prop_assert!((rep.argmax[i] - want[i]).abs() < 1e-6);
        }
        let info = rep.observed_information.unwrap();
        prop_assert!(info.sub(&info.transpose()).max_abs() <= 1e-10 * info.max_abs());
    }

    #[test]
    fn equal_cutoffs_give_the_untruncated_likelihood(
        ys in prop::collection::vec(-5.0f64..5.0, 3..20),
        alpha in -2.0f64..2.0,
        sigma in 0.2f64..4.0,
    ) {
        let ds = Dataset::new(ys.clone()).unwrap();
        let spec = ModelSpec::new(vec![], vec![], vec![]).unwrap();
        let view = build_design(&ds, &spec, None, MissingPolicy::Reject).unwrap();
        let p = ParameterVector::from_coefficients(&spec, &[alpha], sigma).unwrap();
        let ll = loglik_eps_only(&p, &view, 0.0, 0.0).unwrap();
        let want: f64 = ys.iter().map(|y| norm_log_pdf((y - alpha) / sigma) - sigma.ln()).sum();
        prop_assert!((ll - want).abs() < 1e-10 * want.abs().max(1.0));
    }

    #[test]
    fn mixture_likelihood_matches_enumeration(
        rows in prop::collection::vec((-4.0f64..4.0, prop::option::weighted(0.6, 0u8..3), 0usize..2), 3..12),
        p0 in prop::array::uniform3(0.05f64..1.0),
        p1 in prop::array::uniform3(0.05f64..1.0),
        beta in prop::array::uniform2(-1.0f64..1.0),
        sigma in 0.3f64..3.0,
    ) {
        let norm = |p: [f64; 3]| { let s: f64 = p.iter().sum(); p.map(|v| v / s) };
        let probs = vec![norm(p0), norm(p1)];
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let g: Vec<Genotype> = rows.iter().map(|r| Genotype::from(r.1)).collect();
        let strata: Vec<usize> = rows.iter().map(|r| r.2).collect();
        let ds = Dataset::new(y.clone()).unwrap().with_snp("g", g.clone()).unwrap().with_strata(strata.clone()).unwrap();
        let ds = if ds.n_strata() < 2 { ds.with_strata(vec![0; rows.len()]).unwrap() } else { ds };
        let nj = ds.n_strata();
        let dist = GenotypeDistribution::new(probs[..nj].to_vec()).unwrap();
        let spec = ModelSpec::new(vec![], vec![0], vec![]).unwrap();
        let params = ParameterVector::from_coefficients(&spec, &beta, sigma).unwrap();
        let ll = loglik_eps_full(&params, &ds, &spec, &[dist]).unwrap();
        let mut want = 0.0;
        for i in 0..rows.len() {
            let j = ds.strata()[i];
            let dens = |k: usize| (norm_log_pdf((y[i] - beta[0] - beta[1] * k as f64) / sigma) - sigma.ln()).exp() * probs[j][k];
            want += match g[i] {
                Genotype::Called(k) => dens(k as usize).ln(),
                Genotype::Missing => (dens(0) + dens(1) + dens(2)).ln(),
            };
        }
        prop_assert!((ll - want).abs() < 1e-12 * want.abs().max(1.0));
    }

    #[test]
    fn score_tests_ignore_affine_rescaling_of_covariates(
        seed in 0u64..1000,
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let n = 120;
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        let mut y = Vec::new();
        let mut e = Vec::new();
        let mut g = Vec::new();
        for _ in 0..n {
            let ev = next() * 2.0;
            let gv = (next() * 3.0) as u8;
            y.push(ev + 0.3 * gv as f64 + (next() - 0.5) * 4.0);
            e.push(ev);
            g.push(gv.min(2) as f64);
        }
        let d = select_extremes(&y, 30, 30).unwrap();
        let stat = |e: &[f64]| {
            let rows = d.members();
            let z = Matrix::from_fn(rows.len(), 2, |i, j| if j == 0 { 1.0 } else { e[rows[i]] });
            let x0 = Matrix::from_fn(rows.len(), 1, |i, _| g[rows[i]]);
            let yy: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
            let eps = EpsOnlyNull::fit(&yy, &z, &names(2), d.c_lower(), d.c_upper(), &MaximizeOptions::default()).unwrap();
            let t1 = eps.score_test(&x0, &names(1), Information::Expected).unwrap().result.statistic;
            let lin = LinearNull::fit(&yy, &z, &names(2)).unwrap();
            let t2 = lin.score_test(&x0, &names(1)).unwrap().statistic;
            (t1, t2)
        };
        let (a1, a2) = stat(&e);
        let scaled: Vec<f64> = e.iter().map(|v| v * scale + shift).collect();
        let (b1, b2) = stat(&scaled);
        prop_assert!(a1 >= 0.0 && a2 >= 0.0);
        prop_assert!((a1 - b1).abs() < 1e-6 * a1.max(1.0), "{} {}", a1, b1);
        prop_assert!((a2 - b2).abs() < 1e-9 * a2.max(1.0));
    }
}
