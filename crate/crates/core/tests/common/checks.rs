//! Checks shared by the focused test files and the acceptance harness.
//! Each returns an [`Outcome`] instead of panicking so the harness can
//! report every criterion.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use wanpf::commands;
use wanpf::config::{InitialLaw, Potential, TrainConfig};
use wanpf::diagnostics::probe_residuals;
use wanpf::estimators::{
    loss_steady, loss_steady_grad, loss_td, loss_td_grad, loss_td_points, steady_residuals_with_stderr, Physics,
    TdBatches,
};
use wanpf::generator::{Architecture, Draw, GeneratorMode, GeneratorNet};
use wanpf::geometry::{ambient_laplace_beltrami, ManifoldGeometry, ManifoldKind};
use wanpf::gradengine::ParamVector;
use wanpf::oracle::{uniform_point, GibbsOracle};
use wanpf::testfn::{planewave_laplace_beltrami, DriftField, PlaneWaveBank};
use wanpf::training;

use super::*;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl Outcome {
    fn new(passed: bool, detail: String, start: Instant) -> Self {
        Outcome { passed, detail, elapsed: start.elapsed() }
    }
}

pub const WELL: DriftField = DriftField::DoubleWell { alpha: 4.0, beta: 2.0 };

pub fn s2_physics() -> Physics {
    Physics { geometry: ManifoldGeometry::sphere(3).unwrap(), drift: WELL, sigma: 0.5 }
}

pub fn circle_physics(sigma: f64) -> Physics {
    Physics { geometry: ManifoldGeometry::flat_torus(1).unwrap(), drift: DriftField::Zero, sigma }
}

/// P idempotent and symmetric, trace m, P H = 0 and retraction membership
/// at `points` random points per manifold.
pub fn geometry_identities(points: usize) -> Outcome {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    let mut bad = Vec::new();
    let kinds = [
        ManifoldKind::Sphere { n: 3 },
        ManifoldKind::Sphere { n: 5 },
        ManifoldKind::FlatTorus { angles: 1 },
        ManifoldKind::FlatTorus { angles: 2 },
        ManifoldKind::Stiefel { n: 4, k: 2 },
    ];
    for kind in kinds {
        let geom = ManifoldGeometry::new(kind).unwrap();
        let mut r = rng(100);
        for _ in 0..points {
            let x = random_point(&geom, &mut r);
            if !geom.on_manifold(&x) {
                bad.push(format!("{kind:?}: retraction off manifold"));
            }
            if !geom.supports_operators() {
                continue;
            }
            let p = geom.tangential_projection(&x).unwrap();
            let h = geom.mean_curvature(&x).unwrap();
            let idem = (&p * &p - &p).norm();
            let sym = (&p - p.transpose()).norm();
            let ph = (&p * nalgebra::DVector::from_column_slice(&h)).norm();
            let tr = (p.trace() - geom.intrinsic_dim() as f64).abs();
            worst[0] = worst[0].max(idem);
            worst[1] = worst[1].max(ph);
            worst[2] = worst[2].max(tr);
            if idem > 1e-12 || sym > 1e-12 || ph > 1e-12 || tr > 1e-12 {
                bad.push(format!("{kind:?}: idem {idem:e} sym {sym:e} PH {ph:e} trace {tr:e}"));
            }
        }
    }
    let detail = format!(
        "{points} points x {} manifolds; max |P^2-P| {:.1e}, |PH| {:.1e}, |tr P - m| {:.1e}{}",
        kinds.len(),
        worst[0],
        worst[1],
        worst[2],
        bad.first().map(|b| format!("; first failure {b}")).unwrap_or_default()
    );
    let passed = bad.is_empty() && start.elapsed() < Duration::from_secs(1);
    Outcome::new(passed, detail, start)
}

/// Closed-form plane-wave Laplacian against the spherical finite-difference
/// stencil, plus the coordinate-function eigenvalue check.
pub fn laplace_beltrami_vs_fd(points: usize) -> Outcome {
    let start = Instant::now();
    let geom = ManifoldGeometry::sphere(3).unwrap();
    let mut r = rng(101);
    let (mut worst_rel, mut worst_eig) = (0.0f64, 0.0f64);
    let mut done = 0;
    while done < points {
        let x = random_point(&geom, &mut r);
        let (theta, phi) = sphere_angles(&x);
        if theta.sin() < 0.1 {
            continue;
        }
        let w: Vec<f64> = gaussian(&mut r, 3).iter().map(|v| 2.0 * v).collect();
        let b = 0.5 * gaussian(&mut r, 1)[0];
        let bank = PlaneWaveBank::single(&w, 0.0, b).unwrap();
        let exact = planewave_laplace_beltrami(&bank, 0, 0.0, &x, &geom).unwrap();
        let fd = fd_sphere_laplacian(|y| (w[0] * y[0] + w[1] * y[1] + w[2] * y[2] + b).sin(), theta, phi, 1e-4);
        worst_rel = worst_rel.max(rel_err(exact, fd, 1.0));

        let p = geom.tangential_projection(&x).unwrap();
        let h = geom.mean_curvature(&x).unwrap();
        for j in 0..3 {
            let mut g = vec![0.0; 3];
            g[j] = 1.0;
            let lap = ambient_laplace_beltrami(&nalgebra::DMatrix::zeros(3, 3), &g, &p, &h).unwrap();
            worst_eig = worst_eig.max((lap + 2.0 * x[j]).abs());
        }
        done += 1;
    }
    let passed = worst_rel <= 1e-5 && worst_eig <= 1e-12 && start.elapsed() < Duration::from_secs(5);
    Outcome::new(
        passed,
        format!("{points} random (w, b, x): max rel err {worst_rel:.2e}; max |Δx_j + 2x_j| {worst_eig:.1e}"),
        start,
    )
}

fn with_params(net: &GeneratorNet, values: &[f64]) -> GeneratorNet {
    let p = ParamVector { shape: net.params.shape.clone(), values: values.to_vec() };
    GeneratorNet::from_params(net.arch.clone(), p).unwrap()
}

/// Counts FD mismatches of `analytic` at rel tol 1e-5 with abs floor 1e-8.
fn fd_mismatches(analytic: &[f64], f: impl Fn(&[f64]) -> f64, at: &[f64], worst: &mut f64) -> usize {
    let fd = fd_gradient(f, at, 1e-5);
    let mut bad = 0;
    for (a, d) in analytic.iter().zip(&fd) {
        let err = (a - d).abs();
        if err > 1e-8 {
            *worst = worst.max(err / d.abs());
        }
        if !(err <= 1e-5 * d.abs() || err <= 1e-8) {
            bad += 1;
        }
    }
    bad
}

fn tiny_arch(mode: GeneratorMode, geometry: ManifoldGeometry) -> Architecture {
    Architecture { mode, geometry, base_dim: 2, width: 4, depth: 2 }
}

fn uniform_draw(r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..2).map(|_| r.random_range(-2.0..2.0)).collect()
}

/// Generator and adversary gradients of both losses against central
/// differences, on steady and time-dependent tiny nets over `seeds` seeds.
pub fn gradient_fd_suite(seeds: u64) -> Outcome {
    let start = Instant::now();
    let cases = [
        (GeneratorMode::Steady, s2_physics()),
        (GeneratorMode::Steady, Physics { geometry: ManifoldGeometry::flat_torus(2).unwrap(), drift: DriftField::Zero, sigma: 0.7 }),
        (GeneratorMode::TimeDependent, s2_physics()),
        (GeneratorMode::TimeDependent, circle_physics(0.5)),
    ];
    let (mut checked, mut bad, mut worst) = (0usize, 0usize, 0.0f64);
    for seed in 0..seeds {
        for (mode, ph) in &cases {
            let mut r = rng(200 + seed);
            let n = ph.geometry.ambient_dim();
            let net = GeneratorNet::new(tiny_arch(*mode, ph.geometry), seed).unwrap();
            let td = *mode == GeneratorMode::TimeDependent;
            let bank = PlaneWaveBank::random(3, n, td, &mut r).unwrap();
            let flat = bank.flat();
            let with_bank = |p: &[f64]| {
                let mut b = bank.clone();
                b.set_flat(p);
                b
            };
            if td {
                let x0 = random_point(&ph.geometry, &mut r);
                let horizon = 0.7;
                let batches = TdBatches {
                    terminal: (0..6).map(|_| Draw { t: horizon, x0: x0.clone(), r: uniform_draw(&mut r) }).collect(),
                    initial: vec![x0.clone(); 6],
                    interior: (0..6)
                        .map(|_| Draw { t: r.random_range(0.0..horizon), x0: x0.clone(), r: uniform_draw(&mut r) })
                        .collect(),
                };
                let g = loss_td_grad(&net, &bank, horizon, &batches, ph).unwrap();
                let loss_p = |p: &[f64]| loss_td(&with_params(&net, p), &bank, horizon, &batches, ph).unwrap().loss;
                let loss_b = |p: &[f64]| loss_td(&net, &with_bank(p), horizon, &batches, ph).unwrap().loss;
                bad += fd_mismatches(&g.params, loss_p, &net.params.values, &mut worst);
                bad += fd_mismatches(&g.bank, loss_b, &flat, &mut worst);
                checked += g.params.len() + g.bank.len();
            } else {
                let draws: Vec<Draw> = (0..8).map(|_| Draw::steady(uniform_draw(&mut r))).collect();
                let g = loss_steady_grad(&net, &bank, &draws, ph).unwrap();
                let loss_p = |p: &[f64]| loss_steady(&with_params(&net, p), &bank, &draws, ph).unwrap().loss;
                let loss_b = |p: &[f64]| loss_steady(&net, &with_bank(p), &draws, ph).unwrap().loss;
                bad += fd_mismatches(&g.params, loss_p, &net.params.values, &mut worst);
                bad += fd_mismatches(&g.bank, loss_b, &flat, &mut worst);
                checked += g.params.len() + g.bank.len();
            }
        }
    }
    let passed = bad == 0 && start.elapsed() < Duration::from_secs(30);
    Outcome::new(
        passed,
        format!("{checked} partials over {seeds} seeds x 4 nets; {bad} outside tolerance; max rel err above floor {worst:.1e}"),
        start,
    )
}

/// Weak residuals of exact Gibbs samples for random plane waves and the
/// harmonic probes, judged against 3 Monte Carlo standard errors.
pub fn estimator_calibration(samples: usize, waves: usize) -> Outcome {
    let start = Instant::now();
    let ph = s2_physics();
    let oracle = GibbsOracle::new(ph.drift, ph.sigma).unwrap();
    let pts = oracle.rejection_sample(samples, 300).unwrap().points;
    let bank = PlaneWaveBank::random(waves, 3, false, &mut rng(301)).unwrap();
    let res = steady_residuals_with_stderr(&bank, &pts, &ph).unwrap();
    let inside = res.iter().filter(|(m, se)| m.abs() <= 3.0 * se).count();
    let probes = probe_residuals(&pts, &ph).unwrap();
    let probes_inside = probes.iter().filter(|p| p.residual.abs() <= 3.0 * p.stderr).count();
    let frac = inside as f64 / waves as f64;
    let pfrac = probes_inside as f64 / probes.len() as f64;
    let passed = frac >= 0.95 && pfrac >= 0.95 && start.elapsed() < Duration::from_secs(60);
    Outcome::new(
        passed,
        format!(
            "{samples} Gibbs samples: {inside}/{waves} plane waves and {probes_inside}/{} harmonic probes within 3 SE",
            probes.len()
        ),
        start,
    )
}

pub fn circle_angle(x: &[f64]) -> f64 {
    x[1].atan2(x[0])
}

fn embed(theta: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin()]
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

/// The wrapped Brownian pushforward, the exact solution of the circle heat
/// equation, plugged into the three-term estimator. Returns (loss, floor),
/// the floor being the expected loss of an unbiased estimator.
pub fn circle_exact_loss(batch: usize, waves: usize, seed: u64) -> (f64, f64) {
    let (sigma, horizon, theta0): (f64, f64, f64) = (0.5, 1.0, 1.0);
    let ph = circle_physics(sigma);
    let mut r = rng(seed);
    let bank = PlaneWaveBank::random(waves, 2, true, &mut r).unwrap();
    let terminal: Vec<Vec<f64>> =
        (0..batch).map(|_| embed(theta0 + sigma * horizon.sqrt() * gaussian(&mut r, 1)[0])).collect();
    let initial = vec![embed(theta0); batch];
    let times: Vec<f64> = (0..batch).map(|_| r.random_range(0.0..horizon)).collect();
    let interior: Vec<Vec<f64>> =
        times.iter().map(|t| embed(theta0 + sigma * t.sqrt() * gaussian(&mut r, 1)[0])).collect();
    let report = loss_td_points(&bank, horizon, &terminal, &initial, (&times, &interior), &ph).unwrap();

    let mut floor = 0.0;
    for k in 0..bank.len() {
        let ft: Vec<f64> = terminal.iter().map(|y| bank.phase(k, horizon, y).sin()).collect();
        let fi: Vec<f64> = times
            .iter()
            .zip(&interior)
            .map(|(t, y)| {
                horizon
                    * wanpf::testfn::kolmogorov_td_integrand(&bank, k, *t, y, &ph.geometry, &ph.drift, sigma).unwrap()
            })
            .collect();
        floor += variance(&ft) / batch as f64 + variance(&fi) / batch as f64;
    }
    (report.loss, floor / bank.len() as f64)
}

pub fn circle_exact_solution(batch: usize) -> Outcome {
    let start = Instant::now();
    let (loss, floor) = circle_exact_loss(batch, 50, 400);
    Outcome::new(
        loss <= 10.0 * floor,
        format!("batches of {batch}: loss {loss:.3e}, MC floor {floor:.3e}, ratio {:.2}", loss / floor),
        start,
    )
}

/// `forward_td(0, x0, r) == x0` bit for bit.
pub fn initial_condition_identity(draws: usize) -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut total = 0;
    for (i, geom) in [ManifoldGeometry::sphere(3).unwrap(), ManifoldGeometry::flat_torus(2).unwrap()]
        .into_iter()
        .enumerate()
    {
        let arch = Architecture { mode: GeneratorMode::TimeDependent, geometry: geom, base_dim: 3, width: 16, depth: 2 };
        let net = GeneratorNet::new(arch, 500 + i as u64).unwrap();
        let mut r = rng(501 + i as u64);
        for _ in 0..draws {
            let x0 = uniform_point(&geom, &mut r).unwrap();
            let rr = gaussian(&mut r, 3);
            if net.forward_td(0.0, &x0, &rr).unwrap().0 != x0 {
                mismatches += 1;
            }
            total += 1;
        }
    }
    Outcome::new(mismatches == 0, format!("{total} draws on S^2 and T^2: {mismatches} mismatches"), start)
}

pub fn small_steady_config(seed: u64) -> TrainConfig {
    TrainConfig {
        width: 8,
        test_functions: 12,
        batch_size: 24,
        steps: 30,
        checkpoint_every: 10,
        seed,
        ..TrainConfig::default()
    }
}

pub fn small_td_config(seed: u64) -> TrainConfig {
    TrainConfig {
        manifold: ManifoldKind::FlatTorus { angles: 1 },
        mode: GeneratorMode::TimeDependent,
        potential: Potential::Zero,
        horizon: Some(1.0),
        initial: InitialLaw::PointMass { point: Some(embed(1.0)) },
        ..small_steady_config(seed)
    }
}

fn read_all(dir: &Path, files: &[&str]) -> Vec<Vec<u8>> {
    files.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
}

/// Two runs per configuration into fresh directories; every checkpoint,
/// log and sample CSV must agree byte for byte.
pub fn determinism(root: &Path) -> Outcome {
    let start = Instant::now();
    let files = [
        "train_log.jsonl",
        "checkpoint.json",
        "checkpoints/step_000010.json",
        "checkpoints/step_000020.json",
        "samples.csv",
    ];
    let mut compared = 0;
    let mut differing = Vec::new();
    for (name, cfg) in [("steady", small_steady_config(7)), ("td", small_td_config(7))] {
        let mut runs = Vec::new();
        for run in 0..2 {
            let dir = root.join(format!("{name}_{run}"));
            training::train(cfg.clone(), Some(&dir)).unwrap();
            commands::cmd_sample(&dir.join("checkpoint.json"), 500, 3, &dir.join("samples.csv")).unwrap();
            runs.push(read_all(&dir, &files));
        }
        for (i, f) in files.iter().enumerate() {
            compared += 1;
            if runs[0][i] != runs[1][i] {
                differing.push(format!("{name}/{f}"));
            }
        }
    }
    Outcome::new(
        differing.is_empty(),
        format!("{compared} artifact pairs compared; differing: {differing:?}"),
        start,
    )
}
