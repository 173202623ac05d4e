//! Fitting, root search and holdout scoring.

mod common;

use common::{mean, median};
use hawkesn::estimation::{
    dll_dn, find_n_root, fit_hawkesn, fit_sir_stochastic, holdout_negative_ll, n_statistic,
    simplified_model_mle, SirFixed,
};
use hawkesn::process::{log_likelihood, simulate};
use hawkesn::sir::{
    fit_deterministic, simulate_deterministic, DeterministicFitConfig, SirObservations,
};
use hawkesn::{sir, split_cascade, Cascade, FitConfig, HawkesNParams, Identifiability, SirParams};
use proptest::prelude::*;

/// Log-likelihood of the kernel-free model `λ = 1 − N_t/N` started by one
/// event at time zero.
fn simplified_ll(times: &[f64], n_pop: f64) -> f64 {
    (1..times.len())
        .map(|j| {
            let f = 1.0 - j as f64 / n_pop;
            f.ln() - f * (times[j] - times[j - 1])
        })
        .sum()
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-10 * b {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) < f(x2) {
            a = x1;
        } else {
            b = x2;
        }
    }
    0.5 * (a + b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplified_mle_maximizes_likelihood(gaps in prop::collection::vec(0.2f64..3.0, 3..12)) {
        let mut times = vec![0.0];
        for g in &gaps {
            times.push(times.last().unwrap() + g);
        }
        let c = Cascade::from_relative(times.clone(), None).unwrap();
        let n = times.len() as f64;
        if let Some(n_hat) = simplified_model_mle(&c) {
            prop_assert!(n_hat > n);
            let numeric = golden_max(|x| simplified_ll(&times, x), n, 1e3 * n_hat);
            prop_assert!((n_hat - numeric).abs() < 1e-4 * n_hat, "{n_hat} vs {numeric}");
        } else {
            // no interior maximum: the likelihood keeps rising in N
            let ll = |x: f64| simplified_ll(&times, x);
            prop_assert!(ll(1e6 * n) >= ll(2.0 * n) - 1e-9 || ll(n) >= ll(n + 1e-3));
        }
    }

    #[test]
    fn root_scan_agrees_with_derivative(
        seed in 0u64..2000,
        kappa in 1.0f64..8.0,
        theta in 0.05f64..1.0,
    ) {
        let c = simulate(&HawkesNParams::new(5.0, 0.2, 100.0), seed, None).unwrap();
        prop_assume!(c.len() >= 10);
        let n_max = 200.0;
        if let Some(root) = find_n_root(kappa, theta, &c, n_max) {
            prop_assert!(root >= c.len() as f64 && root <= n_max);
            let d = |x: f64| dll_dn(&HawkesNParams::new(kappa, theta, x), &c).unwrap();
            let h = 1e-6 * root;
            prop_assert!(d(root - h) > 0.0 || root - h < c.len() as f64);
            prop_assert!(d(root + h) < 0.0);
            prop_assert!(n_statistic(kappa, theta, &c) <= 0.0);
        }
    }
}

#[test]
fn fit_recovers_parameters_on_large_cascades() {
    let truth = HawkesNParams::new(4.0, 0.5, 400.0);
    let cfg = FitConfig {
        starts: 4,
        ..FitConfig::default()
    };
    let mut kappas = Vec::new();
    let mut thetas = Vec::new();
    let mut pops = Vec::new();
    let mut seed = 0;
    while kappas.len() < 8 {
        let c = simulate(&truth, seed, None).unwrap();
        seed += 1;
        if c.len() < 200 {
            continue;
        }
        let fit = fit_hawkesn(&c, &cfg, None).unwrap();
        let p = fit.hawkesn.unwrap();
        let ll = fit.log_likelihood.unwrap();
        assert!((ll - log_likelihood(&p, &c).unwrap()).abs() < 1e-9);
        assert!(ll >= log_likelihood(&truth, &c).unwrap() - 1e-6);
        assert!(p.n_pop >= c.len() as f64 && p.n_pop <= cfg.n_pop_upper(c.len()));
        kappas.push(p.kappa);
        thetas.push(p.theta);
        pops.push(p.n_pop);
    }
    assert!((median(&kappas) - 4.0).abs() < 1.5, "kappa {kappas:?}");
    assert!((median(&thetas) - 0.5).abs() < 0.2, "theta {thetas:?}");
    assert!((mean(&pops) - 400.0).abs() < 20.0, "N {}", mean(&pops));
}

#[test]
fn fit_reports_identifiability() {
    let c = Cascade::from_relative(vec![0.0, 5.0], None).unwrap();
    let cfg = FitConfig {
        starts: 3,
        ..FitConfig::default()
    };
    let fit = fit_hawkesn(&c, &cfg, None).unwrap();
    let s = fit.statistic.unwrap();
    let expected = if s > 0.0 {
        Identifiability::NoValidN
    } else {
        Identifiability::ValidN
    };
    assert_eq!(fit.identifiability, expected);
    let plain = fit_hawkesn(&c, &cfg, Some(f64::INFINITY)).unwrap();
    assert!(plain.hawkesn.unwrap().n_pop.is_infinite());
    assert_eq!(plain.n_pop_rounded, None);
}

#[test]
fn stochastic_sir_fit_recovers_parameters() {
    let truth = SirParams::new(0.9, 0.3, 600.0, 20);
    let cfg = FitConfig {
        starts: 4,
        ..FitConfig::default()
    };
    let mut betas = Vec::new();
    let mut gammas = Vec::new();
    let mut pops = Vec::new();
    for seed in 0..10 {
        let r = sir::simulate_stochastic(&truth, seed).unwrap();
        let fit = fit_sir_stochastic(&r, &cfg, SirFixed::default()).unwrap();
        let p = fit.sir.unwrap();
        betas.push(p.beta);
        gammas.push(p.gamma);
        pops.push(p.n_pop);
    }
    assert!((mean(&betas) - 0.9).abs() < 0.1, "beta {}", mean(&betas));
    assert!((mean(&gammas) - 0.3).abs() < 0.05, "gamma {}", mean(&gammas));
    assert!((mean(&pops) - 600.0).abs() < 30.0, "N {}", mean(&pops));
}

#[test]
fn deterministic_fit_recovers_noiseless_trajectory() {
    let truth = SirParams::new(0.8, 0.25, 1000.0, 10);
    let traj = simulate_deterministic(&truth, 0.01, 60.0).unwrap();
    let obs = SirObservations::from_trajectory(&traj, 100);
    let fit = fit_deterministic(&obs, 10, &DeterministicFitConfig::default()).unwrap();
    assert!((fit.params.beta - 0.8).abs() < 1e-3, "{:?}", fit.params);
    assert!((fit.params.gamma - 0.25).abs() < 1e-3);
    assert!((fit.params.n_pop - 1000.0).abs() < 1.0);
}

#[test]
fn true_parameters_win_the_holdout() {
    let truth = HawkesNParams::new(2.0, 0.5, 200.0);
    let (mut t, mut lo, mut hi) = (Vec::new(), Vec::new(), Vec::new());
    let mut seed = 0;
    while t.len() < 100 {
        let c = simulate(&truth, seed, None).unwrap();
        seed += 1;
        if c.len() < 10 {
            continue;
        }
        let s = split_cascade(&c, 0.5).unwrap();
        let score = |k: f64| {
            holdout_negative_ll(&HawkesNParams { kappa: k, ..truth }, &s.observed, &s.holdout).unwrap()
        };
        t.push(score(2.0));
        lo.push(score(1.0));
        hi.push(score(3.0));
    }
    assert!(mean(&t) < mean(&lo), "{} vs {}", mean(&t), mean(&lo));
    assert!(mean(&t) < mean(&hi), "{} vs {}", mean(&t), mean(&hi));
}

#[test]
fn holdout_is_invariant_to_rebookkeeping() {
    let c = simulate(&HawkesNParams::new(3.0, 0.4, 80.0), 7, None).unwrap();
    let p = HawkesNParams::new(2.5, 0.3, 90.0);
    let a = split_cascade(&c, 0.6).unwrap();
    let b = split_cascade(&a.observed.concat(&a.holdout).unwrap(), 0.6).unwrap();
    assert_eq!(
        holdout_negative_ll(&p, &a.observed, &a.holdout).unwrap(),
        holdout_negative_ll(&p, &b.observed, &b.holdout).unwrap()
    );
}
