#![allow(dead_code)]

pub mod checks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use wanpf::geometry::ManifoldGeometry;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn random_point(geom: &ManifoldGeometry, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v = gaussian(rng, geom.retraction_input_dim());
    geom.retract(&v).unwrap().0
}

pub fn sphere_point(theta: f64, phi: f64) -> [f64; 3] {
    [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Colatitude and longitude of a point on `S^2`.
pub fn sphere_angles(x: &[f64]) -> (f64, f64) {
    (x[2].clamp(-1.0, 1.0).acos(), x[1].atan2(x[0]))
}

/// `f_tt + cot(t) f_t + f_pp / sin^2 t` by central differences with one
/// Richardson step, so the truncation error is `O(h^4)`.
pub fn fd_sphere_laplacian(f: impl Fn(&[f64]) -> f64, theta: f64, phi: f64, h: f64) -> f64 {
    let g = |t: f64, p: f64| f(&sphere_point(t, p));
    let once = |h: f64| {
        let f0 = g(theta, phi);
        let (tp, tm) = (g(theta + h, phi), g(theta - h, phi));
        let (pp, pm) = (g(theta, phi + h), g(theta, phi - h));
        let ftt = (tp - 2.0 * f0 + tm) / (h * h);
        let ft = (tp - tm) / (2.0 * h);
        let fpp = (pp - 2.0 * f0 + pm) / (h * h);
        let s = theta.sin();
        ftt + theta.cos() / s * ft + fpp / (s * s)
    };
    (4.0 * once(h / 2.0) - once(h)) / 3.0
}

/// Sum of second differences in the angles of a flat torus, Richardson-extrapolated.
pub fn fd_torus_laplacian(f: impl Fn(&[f64]) -> f64, angles: &[f64], h: f64) -> f64 {
    let embed = |th: &[f64]| -> Vec<f64> { th.iter().flat_map(|a| [a.cos(), a.sin()]).collect() };
    let once = |h: f64| {
        let f0 = f(&embed(angles));
        (0..angles.len())
            .map(|i| {
                let mut p = angles.to_vec();
                p[i] += h;
                let fp = f(&embed(&p));
                p[i] -= 2.0 * h;
                let fm = f(&embed(&p));
                (fp - 2.0 * f0 + fm) / (h * h)
            })
            .sum::<f64>()
    };
    (4.0 * once(h / 2.0) - once(h)) / 3.0
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Relative vector error with an absolute floor on the denominator.
pub fn rel_err_vec(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(floor)
}

/// Central finite-difference gradient of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let x0 = p[i];
            p[i] = x0 + h;
            let fp = f(&p);
            p[i] = x0 - h;
            let fm = f(&p);
            p[i] = x0;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}
