//! Ground truth for verification: the Gibbs density on `S^2` by quadrature,
//! exact samples from it by rejection, the circle heat kernel, and a
//! projected Euler-Maruyama integrator.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldGeometry, ManifoldKind};
use crate::testfn::DriftField;

pub const DEFAULT_QUAD_LON: usize = 720;
pub const DEFAULT_QUAD_LAT: usize = 360;
/// Safety factor on the grid maximum when the exact supremum is unknown.
pub const ENVELOPE_SAFETY: f64 = 1.01;
pub const MIN_ACCEPTANCE: f64 = 1e-6;

/// `rho(x) = exp(-2 V(x) / sigma^2) / Z` on the unit sphere in `R^3`,
/// normalized by a midpoint rule in (longitude, colatitude).
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsOracle {
    pub drift: DriftField,
    pub sigma: f64,
    pub n_lon: usize,
    pub n_lat: usize,
    pub log_norm_const: f64,
    /// Log of the rejection envelope: the supremum of the unnormalized density.
    log_envelope: f64,
    /// Normalized cell masses, colatitude-major (north first), longitude from -180 deg.
    cell_mass: Vec<f64>,
}

fn sphere_point(lon: f64, colat: f64) -> [f64; 3] {
    let s = colat.sin();
    [s * lon.cos(), s * lon.sin(), colat.cos()]
}

impl GibbsOracle {
    pub fn new(drift: DriftField, sigma: f64) -> Result<Self> {
        Self::with_grid(drift, sigma, DEFAULT_QUAD_LON, DEFAULT_QUAD_LAT)
    }

    pub fn with_grid(drift: DriftField, sigma: f64, n_lon: usize, n_lat: usize) -> Result<Self> {
        if !(sigma > 0.0) || n_lon == 0 || n_lat == 0 {
            return Err(Error::Config("Gibbs oracle needs sigma > 0 and a non-empty grid".into()));
        }
        let (dl, dt) = (2.0 * PI / n_lon as f64, PI / n_lat as f64);
        let mut logs = Vec::with_capacity(n_lon * n_lat);
        let mut log_w = Vec::with_capacity(n_lon * n_lat);
        for j in 0..n_lat {
            let colat = (j as f64 + 0.5) * dt;
            let lw = (colat.sin() * dl * dt).ln();
            for i in 0..n_lon {
                let lon = -PI + (i as f64 + 0.5) * dl;
                logs.push(-2.0 * drift.potential(&sphere_point(lon, colat)) / (sigma * sigma));
                log_w.push(lw);
            }
        }
        let log_grid_max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logs.iter().zip(&log_w).map(|(l, w)| (l + w - log_grid_max).exp()).collect();
        let total: f64 = shifted.iter().sum();
        let log_norm_const = log_grid_max + total.ln();
        let cell_mass = shifted.iter().map(|v| v / total).collect();
        // Cell centres miss the wells, so the grid maximum alone can undershoot.
        let log_envelope = match min_potential(&drift) {
            Some(v) => (-2.0 * v / (sigma * sigma)).max(log_grid_max),
            None => log_grid_max + ENVELOPE_SAFETY.ln(),
        };
        Ok(GibbsOracle { drift, sigma, n_lon, n_lat, log_norm_const, log_envelope, cell_mass })
    }

    pub fn log_unnormalized(&self, x: &[f64]) -> f64 {
        -2.0 * self.drift.potential(x) / (self.sigma * self.sigma)
    }

    /// Normalized density with respect to surface area.
    pub fn density(&self, x: &[f64]) -> f64 {
        (self.log_unnormalized(x) - self.log_norm_const).exp()
    }

    /// Quadrature expectation of `f` under the Gibbs law.
    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let (dl, dt) = (2.0 * PI / self.n_lon as f64, PI / self.n_lat as f64);
        let mut acc = 0.0;
        for j in 0..self.n_lat {
            let colat = (j as f64 + 0.5) * dt;
            for i in 0..self.n_lon {
                let lon = -PI + (i as f64 + 0.5) * dl;
                acc += self.cell_mass[j * self.n_lon + i] * f(&sphere_point(lon, colat));
            }
        }
        acc
    }

    /// Probability of the set where `pred` holds at cell centres.
    pub fn mass_where(&self, pred: impl Fn(&[f64]) -> bool) -> f64 {
        self.expectation(|x| if pred(x) { 1.0 } else { 0.0 })
    }

    /// Masses of a `n_lon x n_lat` longitude/latitude histogram, latitude-major
    /// from the south, matching [`crate::diagnostics::Histogram`]. The bins
    /// must tile the quadrature grid exactly.
    pub fn bin_masses(&self, n_lon: usize, n_lat: usize) -> Result<Vec<f64>> {
        if n_lon == 0 || n_lat == 0 || !self.n_lon.is_multiple_of(n_lon) || !self.n_lat.is_multiple_of(n_lat) {
            return Err(Error::Contract(format!(
                "{n_lon} x {n_lat} bins do not tile the {} x {} quadrature grid",
                self.n_lon, self.n_lat
            )));
        }
        let (fl, ft) = (self.n_lon / n_lon, self.n_lat / n_lat);
        let mut out = vec![0.0; n_lon * n_lat];
        for j in 0..self.n_lat {
            let lat_bin = n_lat - 1 - j / ft;
            for i in 0..self.n_lon {
                out[lat_bin * n_lon + i / fl] += self.cell_mass[j * self.n_lon + i];
            }
        }
        Ok(out)
    }

    /// Expected acceptance rate of [`Self::rejection_sample`].
    pub fn acceptance_rate(&self) -> f64 {
        // Z / (4 pi * envelope)
        (self.log_norm_const - self.log_envelope).exp() / (4.0 * PI)
    }

    /// Exact i.i.d. samples by rejection from the uniform law on the sphere.
    pub fn rejection_sample(&self, count: usize, seed: u64) -> Result<RejectionSamples> {
        let rate = self.acceptance_rate();
        if rate < MIN_ACCEPTANCE {
            return Err(Error::Config(format!("rejection acceptance rate {rate:e} is too small")));
        }
        let log_env = self.log_envelope;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut proposals = 0u64;
        while points.len() < count {
            let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if r < 1e-12 {
                continue;
            }
            let x = [v[0] / r, v[1] / r, v[2] / r];
            proposals += 1;
            let u: f64 = rng.random();
            if u.ln() < self.log_unnormalized(&x) - log_env {
                points.push(x.to_vec());
            }
        }
        Ok(RejectionSamples {
            acceptance_rate: if proposals == 0 { rate } else { count as f64 / proposals as f64 },
            points,
        })
    }
}

/// Exact minimum of the potential over `S^2`, when known in closed form.
fn min_potential(drift: &DriftField) -> Option<f64> {
    match *drift {
        DriftField::Zero => Some(0.0),
        // Both terms vanish at (+-1, 0, 0).
        DriftField::DoubleWell { alpha, beta } if alpha >= 0.0 && beta >= 0.0 => Some(0.0),
        DriftField::DoubleWell { .. } => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RejectionSamples {
    pub points: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
}

/// `E[sin(w theta_t + b)]` for Brownian motion on the circle started at
/// `theta0`, integer `w`: `exp(-w^2 sigma^2 t / 2) sin(w theta0 + b)`.
pub fn wrapped_normal_moment(w: i64, theta0: f64, phase: f64, sigma: f64, t: f64) -> f64 {
    let wf = w as f64;
    (-wf * wf * sigma * sigma * t / 2.0).exp() * (wf * theta0 + phase).sin()
}

/// Maps an ambient point near the manifold back onto it.
fn pull_back(geom: &ManifoldGeometry, y: &[f64]) -> Result<Vec<f64>> {
    match geom.kind() {
        ManifoldKind::Sphere { .. } => geom.retract(y).map(|p| p.0),
        ManifoldKind::FlatTorus { .. } => {
            let th: Vec<f64> = y.chunks_exact(2).map(|c| c[1].atan2(c[0])).collect();
            geom.retract(&th).map(|p| p.0)
        }
        ManifoldKind::Stiefel { .. } => Err(Error::Unsupported("SDE integration on Stiefel".into())),
    }
}

/// Projected Euler-Maruyama: `x <- retract(x + b(x) dt + sigma P(x) xi sqrt(dt))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeIntegrator {
    pub geometry: ManifoldGeometry,
    pub drift: DriftField,
    pub sigma: f64,
    pub dt: f64,
}

impl SdeIntegrator {
    pub fn new(geometry: ManifoldGeometry, drift: DriftField, sigma: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !(sigma >= 0.0) {
            return Err(Error::Config("SDE integration needs dt > 0 and sigma >= 0".into()));
        }
        if !geometry.supports_operators() {
            return Err(Error::Unsupported("SDE integration needs a tangential projection".into()));
        }
        drift.check_geometry(&geometry)?;
        Ok(SdeIntegrator { geometry, drift, sigma, dt })
    }

    fn steps_for(&self, t: f64) -> Result<usize> {
        let n = (t / self.dt).round();
        if !(t >= 0.0) || (n * self.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::Contract(format!("time {t} is not a multiple of dt = {}", self.dt)));
        }
        Ok(n as usize)
    }

    pub fn step<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let g = &self.geometry;
        let xi: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
        let noise = g.project(x, &xi);
        let amp = self.sigma * self.dt.sqrt();
        let b = self.drift.projected_drift(x, g);
        let y: Vec<f64> = (0..x.len())
            .map(|i| x[i] + b.as_ref().map_or(0.0, |b| b[i] * self.dt) + amp * noise[i])
            .collect();
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate(format!("SDE state became non-finite; reduce dt = {}", self.dt)));
        }
        pull_back(g, &y)
    }

    /// Endpoint at `t_end` from `x0`.
    pub fn integrate<R: Rng + ?Sized>(&self, x0: &[f64], t_end: f64, rng: &mut R) -> Result<Vec<f64>> {
        if !self.geometry.on_manifold(x0) {
            return Err(Error::Contract("SDE start point is not on the manifold".into()));
        }
        let mut x = x0.to_vec();
        for _ in 0..self.steps_for(t_end)? {
            x = self.step(&x, rng)?;
        }
        Ok(x)
    }

    /// Long-run occupancy of an ensemble of chains started uniformly on the
    /// sphere: each chain runs `burn_in`, then records its state every
    /// `record_every` until `t_end`. Chains use independent streams of `seed`.
    ///
    /// A single chain in a deep double well never changes basin on feasible
    /// horizons, so the ensemble carries the between-well balance.
    pub fn ensemble_occupancy(
        &self,
        chains: usize,
        burn_in: f64,
        t_end: f64,
        record_every: f64,
        seed: u64,
    ) -> Result<Vec<Vec<f64>>> {
        let burn = self.steps_for(burn_in)?;
        let total = self.steps_for(t_end)?;
        let every = self.steps_for(record_every)?.max(1);
        let mut out = Vec::with_capacity(chains * (total.saturating_sub(burn) / every));
        for c in 0..chains {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut x = uniform_point(&self.geometry, &mut rng)?;
            for s in 1..=total {
                x = self.step(&x, &mut rng)?;
                if s > burn && (s - burn) % every == 0 {
                    out.push(x.clone());
                }
            }
        }
        Ok(out)
    }
}

/// Uniform draw from the Riemannian volume of a sphere or flat torus.
pub fn uniform_point<R: Rng + ?Sized>(geom: &ManifoldGeometry, rng: &mut R) -> Result<Vec<f64>> {
    match geom.kind() {
        ManifoldKind::FlatTorus { angles } => {
            let th: Vec<f64> = (0..angles).map(|_| rng.random_range(-PI..PI)).collect();
            geom.retract(&th).map(|p| p.0)
        }
        ManifoldKind::Sphere { n } => loop {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(p) = geom.retract(&v) {
                return Ok(p.0);
            }
        },
        ManifoldKind::Stiefel { .. } => Err(Error::Unsupported("uniform sampling on Stiefel".into())),
    }
}
