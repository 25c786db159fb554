//! Plane-wave test functions and the operators the weak form applies to them.
//!
//! A test function is `f(t, x) = sin(w . x + kappa t + b)` on the ambient
//! space. Its intrinsic derivatives are closed-form once `P(x)` and `H(x)`
//! are known:
//!
//! ```text
//! lap f = -sin(phi) w^T P w + cos(phi) H . w
//! L f   = sigma^2 / 2 lap f + cos(phi) <P b, w>          (steady)
//! ```
//!
//! The time-dependent interior integrand adds `kappa cos(phi)`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, ManifoldGeometry};
use crate::gradengine::{ParamShape, ParamVector, Scalar};

/// Standard deviation of the initial spatial frequencies (variance 4).
pub const INIT_FREQ_STD: f64 = 2.0;
/// Standard deviation of the initial phase offsets (variance 0.25).
pub const INIT_PHASE_STD: f64 = 0.5;
/// Standard deviation of the initial temporal frequencies.
pub const INIT_KAPPA_STD: f64 = 1.0;

/// The adversary: `K` plane waves over an `n`-dimensional ambient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveBank {
    dim: usize,
    /// Row-major `K x n`.
    w: Vec<f64>,
    kappa: Vec<f64>,
    phase: Vec<f64>,
}

impl PlaneWaveBank {
    pub fn new(dim: usize, w: Vec<f64>, kappa: Vec<f64>, phase: Vec<f64>) -> Result<Self> {
        let k = phase.len();
        if k == 0 || dim == 0 || w.len() != k * dim || kappa.len() != k {
            return Err(Error::Contract(format!(
                "plane-wave bank needs K >= 1 with w: K x {dim}, kappa: K, phase: K \
                 (got w {}, kappa {}, phase {})",
                w.len(),
                kappa.len(),
                k
            )));
        }
        if w.iter().chain(&kappa).chain(&phase).any(|v| !v.is_finite()) {
            return Err(Error::Contract("plane-wave bank has non-finite entries".into()));
        }
        Ok(PlaneWaveBank { dim, w, kappa, phase })
    }

    /// A single wave, mostly for tests and probes.
    pub fn single(w: &[f64], kappa: f64, phase: f64) -> Result<Self> {
        Self::new(w.len(), w.to_vec(), vec![kappa], vec![phase])
    }

    /// `w ~ N(0, 4 I)`, `b ~ N(0, 0.25)`; `kappa ~ N(0, 1)` when time-dependent, else 0.
    pub fn random<R: Rng + ?Sized>(count: usize, dim: usize, time_dependent: bool, rng: &mut R) -> Result<Self> {
        let freq = Normal::new(0.0, INIT_FREQ_STD).expect("valid std");
        let w: Vec<f64> = (0..count * dim).map(|_| freq.sample(rng)).collect();
        let kappa: Vec<f64> = if time_dependent {
            (0..count)
                .map(|_| INIT_KAPPA_STD * rng.sample::<f64, _>(StandardNormal))
                .collect()
        } else {
            vec![0.0; count]
        };
        let phase: Vec<f64> = (0..count)
            .map(|_| INIT_PHASE_STD * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(dim, w, kappa, phase)
    }

    pub fn len(&self) -> usize {
        self.phase.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phase.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn w(&self, k: usize) -> &[f64] {
        &self.w[k * self.dim..(k + 1) * self.dim]
    }

    pub fn w_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.w[k * self.dim..(k + 1) * self.dim]
    }

    pub fn kappa(&self, k: usize) -> f64 {
        self.kappa[k]
    }

    pub fn phase_offset(&self, k: usize) -> f64 {
        self.phase[k]
    }

    pub fn shift_phases(&mut self, delta: f64) {
        self.phase.iter_mut().for_each(|b| *b += delta);
    }

    /// `phi = w . x + kappa t + b`.
    pub fn phase(&self, k: usize, t: f64, x: &[f64]) -> f64 {
        dot(self.w(k), x) + self.kappa[k] * t + self.phase[k]
    }

    pub fn param_shape(count: usize, dim: usize) -> ParamShape {
        ParamShape::new()
            .push("w", &[count, dim])
            .push("kappa", &[count])
            .push("phase", &[count])
    }

    pub fn to_params(&self) -> ParamVector {
        Self::param_shape(self.len(), self.dim)
            .flatten(&[&self.w, &self.kappa, &self.phase])
            .expect("shape matches by construction")
    }

    pub fn from_params(dim: usize, p: &ParamVector) -> Result<Self> {
        Self::new(
            dim,
            p.block("w").to_vec(),
            p.block("kappa").to_vec(),
            p.block("phase").to_vec(),
        )
    }

    /// Overwrites all parameters from a flat vector in `w, kappa, phase` order.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let (nw, k) = (self.w.len(), self.len());
        assert_eq!(flat.len(), nw + 2 * k);
        self.w.copy_from_slice(&flat[..nw]);
        self.kappa.copy_from_slice(&flat[nw..nw + k]);
        self.phase.copy_from_slice(&flat[nw + k..]);
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w.len() + 2 * self.len());
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.kappa);
        v.extend_from_slice(&self.phase);
        v
    }

    /// Rescales every `w^(k)` longer than `cap` back onto the sphere of radius `cap`.
    /// Returns how many waves were touched.
    pub fn cap_frequencies(&mut self, cap: f64) -> usize {
        let mut touched = 0;
        for k in 0..self.len() {
            let w = self.w_mut(k);
            let r = dot(w, w).sqrt();
            if r > cap {
                w.iter_mut().for_each(|c| *c *= cap / r);
                touched += 1;
            }
        }
        touched
    }
}

/// Potential-derived tangential drift `b(x) = -P(x) grad V(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftField {
    /// Pure diffusion.
    Zero,
    /// `V = alpha (x_1^2 - 1)^2 + beta x_3^2` on `R^3`.
    DoubleWell { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftEval {
    pub potential: f64,
    pub grad_potential: Vec<f64>,
    pub drift: Vec<f64>,
}

impl DriftField {
    pub fn check_geometry(&self, geom: &ManifoldGeometry) -> Result<()> {
        match self {
            DriftField::DoubleWell { .. } if geom.ambient_dim() != 3 => Err(Error::Contract(
                "the double-well potential is defined on R^3".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn potential(&self, x: &[f64]) -> f64 {
        match *self {
            DriftField::Zero => 0.0,
            DriftField::DoubleWell { alpha, beta } => {
                let a = x[0] * x[0] - 1.0;
                alpha * a * a + beta * x[2] * x[2]
            }
        }
    }

    /// Ambient gradient of the potential over any scalar type.
    pub fn grad_potential<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        match *self {
            DriftField::Zero => x.iter().map(|c| c.lift(0.0)).collect(),
            DriftField::DoubleWell { alpha, beta } => {
                let gx = (x[0] * x[0] - 1.0) * x[0] * (4.0 * alpha);
                vec![gx, x[1].lift(0.0), x[2] * (2.0 * beta)]
            }
        }
    }

    /// `P(x) b(x)` over any scalar type; `None` when the drift is identically zero.
    pub fn projected_drift<S: Scalar>(&self, x: &[S], geom: &ManifoldGeometry) -> Option<Vec<S>> {
        match self {
            DriftField::Zero => None,
            DriftField::DoubleWell { .. } => {
                let neg: Vec<S> = self.grad_potential(x).into_iter().map(|g| -g).collect();
                let b = geom.project(x, &neg);
                // b is tangential already; project once more to honour <P b, w>.
                Some(geom.project(x, &b))
            }
        }
    }

    pub fn eval(&self, x: &[f64], geom: &ManifoldGeometry) -> Result<DriftEval> {
        geom.tangential_projection(x)?;
        self.check_geometry(geom)?;
        let grad = self.grad_potential(x);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        Ok(DriftEval {
            potential: self.potential(x),
            drift: geom.project(x, &neg),
            grad_potential: grad,
        })
    }
}

/// Pieces of the operator for one wave at one point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct WaveTerms {
    pub sin: f64,
    pub cos: f64,
    /// `w^T P(x) w`
    pub q: f64,
    /// `H(x) . w`
    pub h: f64,
    /// `<P(x) b(x), w>`
    pub d: f64,
}

impl WaveTerms {
    pub fn new(geom: &ManifoldGeometry, x: &[f64], pb: Option<&[f64]>, w: &[f64], phi: f64) -> Self {
        let (sin, cos) = phi.sin_cos();
        WaveTerms {
            sin,
            cos,
            q: geom.projected_sq(x, w),
            h: geom.curvature_dot(x, w),
            d: pb.map_or(0.0, |g| dot(g, w)),
        }
    }

    pub fn laplacian(&self) -> f64 {
        -self.sin * self.q + self.cos * self.h
    }

    /// `kappa cos(phi) + sigma^2/2 lap f + cos(phi) <P b, w>`.
    pub fn generator(&self, half_sigma2: f64, kappa: f64) -> f64 {
        kappa * self.cos + half_sigma2 * self.laplacian() + self.cos * self.d
    }
}

fn check_index(bank: &PlaneWaveBank, k: usize, x: &[f64]) -> Result<()> {
    if k >= bank.len() {
        return Err(Error::Contract(format!("test function {k} out of range ({} waves)", bank.len())));
    }
    if x.len() != bank.dim() {
        return Err(Error::Contract(format!(
            "point has {} coordinates, bank expects {}",
            x.len(),
            bank.dim()
        )));
    }
    Ok(())
}

fn check_point(geom: &ManifoldGeometry, x: &[f64]) -> Result<()> {
    // Surfaces Unsupported / off-manifold errors with the geometry's wording.
    geom.mean_curvature(x).map(|_| ())
}

pub fn planewave_eval(bank: &PlaneWaveBank, k: usize, t: f64, x: &[f64]) -> Result<f64> {
    check_index(bank, k, x)?;
    Ok(bank.phase(k, t, x).sin())
}

pub fn planewave_laplace_beltrami(
    bank: &PlaneWaveBank,
    k: usize,
    t: f64,
    x: &[f64],
    geom: &ManifoldGeometry,
) -> Result<f64> {
    check_index(bank, k, x)?;
    check_point(geom, x)?;
    Ok(WaveTerms::new(geom, x, None, bank.w(k), bank.phase(k, t, x)).laplacian())
}

/// Steady backward Kolmogorov operator on wave `k` (time and `kappa` ignored).
pub fn kolmogorov_steady(
    bank: &PlaneWaveBank,
    k: usize,
    x: &[f64],
    geom: &ManifoldGeometry,
    drift: &DriftField,
    sigma: f64,
) -> Result<f64> {
    check_index(bank, k, x)?;
    check_point(geom, x)?;
    drift.check_geometry(geom)?;
    let pb = drift.projected_drift(x, geom);
    let phi = dot(bank.w(k), x) + bank.phase_offset(k);
    Ok(WaveTerms::new(geom, x, pb.as_deref(), bank.w(k), phi).generator(0.5 * sigma * sigma, 0.0))
}

/// Bracketed integrand of the interior term: `(d_t + L) f` at `(t, x)`.
pub fn kolmogorov_td_integrand(
    bank: &PlaneWaveBank,
    k: usize,
    t: f64,
    x: &[f64],
    geom: &ManifoldGeometry,
    drift: &DriftField,
    sigma: f64,
) -> Result<f64> {
    check_index(bank, k, x)?;
    check_point(geom, x)?;
    drift.check_geometry(geom)?;
    let pb = drift.projected_drift(x, geom);
    let phi = bank.phase(k, t, x);
    Ok(WaveTerms::new(geom, x, pb.as_deref(), bank.w(k), phi).generator(0.5 * sigma * sigma, bank.kappa(k)))
}

/// Divergence-form operator `1/2 div(a grad f) + <P b, grad f>` for a
/// constant ambient diffusion matrix `A`, with `a = P A P` on the tangent
/// bundle:
///
/// ```text
/// L f = 1/2 hess f : P A P + 1/2 c . grad f + <P b, P grad f>,
/// c_k = sum_ij P_ij d_i (P A P)_jk
/// ```
///
/// For `A = sigma^2 I` the correction `c` collapses to `sigma^2 H` and this
/// is [`kolmogorov_steady`].
pub fn kolmogorov_anisotropic(
    bank: &PlaneWaveBank,
    k: usize,
    x: &[f64],
    geom: &ManifoldGeometry,
    drift: &DriftField,
    a: &DMatrix<f64>,
) -> Result<f64> {
    check_index(bank, k, x)?;
    drift.check_geometry(geom)?;
    let n = x.len();
    if a.shape() != (n, n) {
        return Err(Error::Contract(format!("diffusion matrix must be {n} x {n}")));
    }
    let p = geom.tangential_projection(x)?;
    let dp = geom.projection_derivative(x)?;
    let w = bank.w(k);
    let phi = dot(w, x) + bank.phase_offset(k);
    let (s, c) = phi.sin_cos();

    let pa = &p * a;
    let ap = a * &p;
    let pap = &pa * &p;

    // d_i (PAP)_jk = sum_l dP[i][j][l] (AP)_lk + (PA)_jl dP[i][l][k]
    let dpi = |i: usize, j: usize, l: usize| dp[(i * n + j) * n + l];
    let mut corr = vec![0.0; n];
    for (kk, corr_k) in corr.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let pij = p[(i, j)];
                if pij == 0.0 {
                    continue;
                }
                let mut d = 0.0;
                for l in 0..n {
                    d += dpi(i, j, l) * ap[(l, kk)] + pa[(j, l)] * dpi(i, l, kk);
                }
                acc += pij * d;
            }
        }
        *corr_k = acc;
    }

    let wv = nalgebra::DVector::from_column_slice(w);
    let hess_term = -s * wv.dot(&(&pap * &wv));
    let corr_term = c * dot(&corr, w);
    let drift_term = match drift.projected_drift(x, geom) {
        Some(pb) => c * dot(&pb, &geom.project(x, w)),
        None => 0.0,
    };
    Ok(0.5 * hess_term + 0.5 * corr_term + drift_term)
}

/// Evaluates the drift at an on-manifold point.
pub fn drift_eval(drift: &DriftField, x: &[f64], geom: &ManifoldGeometry) -> Result<DriftEval> {
    drift.eval(x, geom)
}

/// Harmonic polynomials on `R^n` whose restrictions are sphere eigenfunctions.
/// Used only as fixed verification probes, never as trainable adversaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicProbe {
    /// `x_i`, degree 1.
    Linear(usize),
    /// `x_i x_j` with `i != j`, degree 2.
    Product(usize, usize),
    /// `x_i^2 - x_j^2`, degree 2.
    SquareDiff(usize, usize),
}

impl HarmonicProbe {
    /// Degree-1 and degree-2 probes spanning the non-constant harmonics up to degree 2 on `S^2`.
    pub fn s2_set() -> Vec<HarmonicProbe> {
        use HarmonicProbe::*;
        vec![
            Linear(0),
            Linear(1),
            Linear(2),
            Product(0, 1),
            Product(0, 2),
            Product(1, 2),
            SquareDiff(0, 1),
            SquareDiff(2, 0),
        ]
    }

    pub fn degree(&self) -> usize {
        match self {
            HarmonicProbe::Linear(_) => 1,
            _ => 2,
        }
    }

    pub fn label(&self) -> String {
        const AXES: [&str; 3] = ["x", "y", "z"];
        let ax = |i: usize| AXES.get(i).map_or_else(|| format!("x{}", i + 1), |s| s.to_string());
        match *self {
            HarmonicProbe::Linear(i) => ax(i),
            HarmonicProbe::Product(i, j) => format!("{}{}", ax(i), ax(j)),
            HarmonicProbe::SquareDiff(i, j) => format!("{}^2-{}^2", ax(i), ax(j)),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            HarmonicProbe::Linear(i) => x[i],
            HarmonicProbe::Product(i, j) => x[i] * x[j],
            HarmonicProbe::SquareDiff(i, j) => x[i] * x[i] - x[j] * x[j],
        }
    }

    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        match *self {
            HarmonicProbe::Linear(i) => g[i] = 1.0,
            HarmonicProbe::Product(i, j) => {
                g[i] = x[j];
                g[j] = x[i];
            }
            HarmonicProbe::SquareDiff(i, j) => {
                g[i] = 2.0 * x[i];
                g[j] = -2.0 * x[j];
            }
        }
        g
    }

    pub fn hessian(&self, n: usize) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(n, n);
        match *self {
            HarmonicProbe::Linear(_) => {}
            HarmonicProbe::Product(i, j) => {
                h[(i, j)] = 1.0;
                h[(j, i)] = 1.0;
            }
            HarmonicProbe::SquareDiff(i, j) => {
                h[(i, i)] = 2.0;
                h[(j, j)] = -2.0;
            }
        }
        h
    }

    /// `L f = sigma^2/2 lap f + <b, grad f>` on `S^{n-1}` using the eigenvalue
    /// `-l (l + n - 2)`.
    pub fn kolmogorov(&self, x: &[f64], drift: &DriftField, geom: &ManifoldGeometry, sigma: f64) -> f64 {
        let n = x.len() as f64;
        let l = self.degree() as f64;
        let lap = -l * (l + n - 2.0) * self.value(x);
        let adv = drift
            .projected_drift(x, geom)
            .map_or(0.0, |pb| dot(&pb, &self.grad(x)));
        0.5 * sigma * sigma * lap + adv
    }
}
