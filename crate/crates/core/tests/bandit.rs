mod common;

use common::{binomial_slack, rff_setup};
use mmucb::bandit::{
    bound_holds, coverage_fraction, eval_bound_data_independent, run_batch, Policy, RunConfig, StandardBoundParams,
};
use mmucb::{ConfidenceParams, MixtureSpec};

const SIGMA: f64 = 0.1;

#[test]
fn two_arm_regret_ordering() {
    let alpha = SIGMA * SIGMA;
    let policies = [Policy::Cmm { alpha }, Policy::Amm { alpha }, Policy::Oful { alpha }];
    let params = ConfidenceParams::new(SIGMA, 10.0, 0.01).unwrap();
    let spec = MixtureSpec::standard(1.0, SIGMA).unwrap();
    let seeds: Vec<u64> = (0..100).collect();
    let runs = run_batch(&policies, &seeds, &spec, &RunConfig::new(500, params), |seed| {
        rff_setup(seed ^ 0x2a, 2, 20, 2, SIGMA, 10.0)?.build(seed)
    })
    .unwrap();
    let mean: Vec<f64> =
        (0..3).map(|j| runs.iter().map(|r| r[j].cumulative_regret()).sum::<f64>() / runs.len() as f64).collect();
    assert!(mean[0] <= mean[1] && mean[1] <= mean[2], "{mean:?}");
}

#[test]
fn data_dependent_bound_at_delta_one_percent() {
    let policies = [Policy::Cmm { alpha: 0.01 }, Policy::Amm { alpha: 0.01 }];
    let params = ConfidenceParams::new(SIGMA, 10.0, 0.01).unwrap();
    let spec = MixtureSpec::standard(1.0, SIGMA).unwrap();
    let seeds: Vec<u64> = (100..200).collect();
    let runs = run_batch(&policies, &seeds, &spec, &RunConfig::new(100, params), |seed| {
        rff_setup(seed, 2, 8, 5, SIGMA, 10.0)?.build(seed)
    })
    .unwrap();
    let threshold = 0.99 - binomial_slack(0.01, 100);
    for j in 0..policies.len() {
        let held = runs.iter().filter(|r| bound_holds(&r[j])).count() as f64 / runs.len() as f64;
        assert!(held >= threshold, "{}: {held}", policies[j].name());
    }
}

#[test]
fn worst_case_bound_dominates_realized_regret() {
    // RFF features have norm at most sqrt(2), so |phi^T theta*| <= sqrt(2) B.
    let (d, b) = (6, 2.0);
    let params = ConfidenceParams::new(SIGMA, b, 0.05).unwrap();
    let spec = MixtureSpec::standard(1.0, SIGMA).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let runs = run_batch(&[Policy::Amm { alpha: SIGMA * SIGMA }], &seeds, &spec, &RunConfig::new(150, params), |seed| {
        rff_setup(seed, 2, d, 6, SIGMA, b)?.build(seed)
    })
    .unwrap();
    let l = 2f64.sqrt();
    let bp = StandardBoundParams { c: 1.0, sigma: SIGMA, bound_b: b, l, reward_bound: l * b, d, delta: 0.05 };
    for run in runs.iter().map(|r| &r[0]) {
        for rec in &run.records {
            assert!(rec.cum_regret <= eval_bound_data_independent(&bp, rec.t).unwrap());
            assert!(rec.regret <= 2.0 * l * b);
        }
    }
}

#[test]
fn coverage_at_degenerate_delta_is_a_fraction() {
    let params = ConfidenceParams::new(SIGMA, 10.0, 1.0).unwrap();
    let spec = MixtureSpec::standard(1.0, SIGMA).unwrap();
    let seeds: Vec<u64> = (0..20).collect();
    let runs = run_batch(&[Policy::Oful { alpha: 0.01 }], &seeds, &spec, &RunConfig::new(30, params), |seed| {
        rff_setup(seed, 2, 4, 3, SIGMA, 10.0)?.build(seed)
    })
    .unwrap();
    let flat: Vec<_> = runs.into_iter().flatten().collect();
    let frac = coverage_fraction(&flat).unwrap();
    assert!((0.0..=1.0).contains(&frac));
}
