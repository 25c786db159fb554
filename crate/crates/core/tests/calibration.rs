mod common;

use common::checks::{self, s2_physics};
use common::rng;
use wanpf::estimators::{loss_steady_points, steady_residuals_with_stderr};
use wanpf::oracle::{uniform_point, GibbsOracle};
use wanpf::testfn::PlaneWaveBank;

#[test]
fn gibbs_samples_have_vanishing_weak_residuals() {
    let o = checks::estimator_calibration(100_000, 200);
    println!("{}", o.detail);
    assert!(o.passed, "{}", o.detail);
}

#[test]
fn uniform_samples_are_detected() {
    // The same estimator must see a clearly non-stationary law.
    let ph = s2_physics();
    let mut r = rng(31);
    let pts: Vec<Vec<f64>> = (0..20_000).map(|_| uniform_point(&ph.geometry, &mut r).unwrap()).collect();
    let bank = PlaneWaveBank::random(200, 3, false, &mut r).unwrap();
    let res = steady_residuals_with_stderr(&bank, &pts, &ph).unwrap();
    let outside = res.iter().filter(|(m, se)| m.abs() > 3.0 * se).count();
    assert!(outside > 100, "only {outside} of 200 waves detect the uniform law");
}

#[test]
fn trained_level_loss_dominates_gibbs_loss() {
    let ph = s2_physics();
    let oracle = GibbsOracle::new(ph.drift, ph.sigma).unwrap();
    let gibbs = oracle.rejection_sample(200, 32).unwrap().points;
    let mut r = rng(33);
    let uniform: Vec<Vec<f64>> = (0..200).map(|_| uniform_point(&ph.geometry, &mut r).unwrap()).collect();
    let bank = PlaneWaveBank::random(200, 3, false, &mut r).unwrap();
    let lg = loss_steady_points(&bank, &gibbs, &ph).unwrap().loss;
    let lu = loss_steady_points(&bank, &uniform, &ph).unwrap().loss;
    assert!(lu > 2.0 * lg, "uniform {lu} vs gibbs {lg}");
}
