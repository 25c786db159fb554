mod common;

use common::checks::{self, circle_exact_loss};
use wanpf::oracle::wrapped_normal_moment;

#[test]
fn exact_heat_solution_sits_at_the_noise_floor() {
    let o = checks::circle_exact_solution(10_000);
    println!("{}", o.detail);
    assert!(o.passed, "{}", o.detail);
}

#[test]
fn floor_shrinks_with_batch_size() {
    let (_, small) = circle_exact_loss(1_000, 20, 41);
    let (_, large) = circle_exact_loss(10_000, 20, 41);
    let ratio = small / large;
    assert!((7.0..14.0).contains(&ratio), "{ratio}");
}

#[test]
fn wrapped_normal_moments_decay() {
    let m = wrapped_normal_moment(1, 1.0, 0.0, 0.5, 1.0);
    assert!((m - (-0.125f64).exp() * 1.0f64.sin()).abs() < 1e-15);
    assert!(wrapped_normal_moment(3, 1.0, 0.0, 0.5, 1.0).abs() < m.abs());
}

#[test]
fn initial_condition_is_reproduced_exactly() {
    let o = checks::initial_condition_identity(10_000);
    assert!(o.passed, "{}", o.detail);
}
