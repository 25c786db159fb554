//! Closed-form geometry of the supported embedded manifolds.
//!
//! Points are ambient coordinate vectors. The sphere `S^{n-1}` lives in
//! `R^n`; the flat torus `T^m` is the product of `m` unit circles in
//! `R^{2m}` with coordinates `(cos t_1, sin t_1, ..., cos t_m, sin t_m)`;
//! the Stiefel manifold `St(n, k)` is stored as a row-major `n x k` matrix.
//!
//! The Laplace-Beltrami operator of an ambient function is assembled as
//! `hess f : P + grad f . H` where `H_j = sum_i d_i P_ij` is the mean-curvature
//! vector. With `H = -(n-1) x` on the unit sphere this gives the expected
//! spectrum (`x_j` is an eigenfunction with eigenvalue `-(n-1)`). Each torus
//! factor is a unit circle in its own plane, so its curvature vector is
//! `-x` blockwise: the torus is intrinsically flat but not flatly embedded.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradengine::Scalar;

pub const SPHERE_TOL: f64 = 1e-12;
pub const TORUS_TOL: f64 = 1e-12;
pub const STIEFEL_TOL: f64 = 1e-10;
/// Below this pre-retraction norm the sphere retraction is undefined.
pub const MIN_RETRACT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldKind {
    /// Unit sphere in `R^n`.
    Sphere { n: usize },
    /// Product of `angles` unit circles in `R^{2 * angles}`.
    FlatTorus { angles: usize },
    /// Orthonormal `n x k` frames.
    Stiefel { n: usize, k: usize },
}

/// A point in the ambient space.
#[derive(Debug, Clone, PartialEq)]
pub struct AmbientPoint(pub Vec<f64>);

impl std::ops::Deref for AmbientPoint {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for AmbientPoint {
    fn from(v: Vec<f64>) -> Self {
        AmbientPoint(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ManifoldKind", into = "ManifoldKind")]
pub struct ManifoldGeometry {
    kind: ManifoldKind,
}

impl TryFrom<ManifoldKind> for ManifoldGeometry {
    type Error = Error;
    fn try_from(kind: ManifoldKind) -> Result<Self> {
        ManifoldGeometry::new(kind)
    }
}

impl From<ManifoldGeometry> for ManifoldKind {
    fn from(g: ManifoldGeometry) -> Self {
        g.kind
    }
}

impl ManifoldGeometry {
    pub fn new(kind: ManifoldKind) -> Result<Self> {
        let ok = match kind {
            ManifoldKind::Sphere { n } => n >= 2,
            ManifoldKind::FlatTorus { angles } => angles >= 1,
            ManifoldKind::Stiefel { n, k } => k >= 1 && n >= k,
        };
        if !ok {
            return Err(Error::Config(format!("invalid manifold dimensions {kind:?}")));
        }
        Ok(ManifoldGeometry { kind })
    }

    pub fn sphere(n: usize) -> Result<Self> {
        Self::new(ManifoldKind::Sphere { n })
    }

    pub fn flat_torus(angles: usize) -> Result<Self> {
        Self::new(ManifoldKind::FlatTorus { angles })
    }

    pub fn stiefel(n: usize, k: usize) -> Result<Self> {
        Self::new(ManifoldKind::Stiefel { n, k })
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere { n } => n,
            ManifoldKind::FlatTorus { angles } => 2 * angles,
            ManifoldKind::Stiefel { n, k } => n * k,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere { n } => n - 1,
            ManifoldKind::FlatTorus { angles } => angles,
            ManifoldKind::Stiefel { n, k } => n * k - k * (k + 1) / 2,
        }
    }

    /// Length of the vector the retraction consumes. Equal to the ambient
    /// dimension except on the torus, which retracts from angle space.
    pub fn retraction_input_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::FlatTorus { angles } => angles,
            _ => self.ambient_dim(),
        }
    }

    pub fn supports_operators(&self) -> bool {
        !matches!(self.kind, ManifoldKind::Stiefel { .. })
    }

    fn require_operators(&self, what: &str) -> Result<()> {
        if self.supports_operators() {
            Ok(())
        } else {
            Err(Error::Unsupported(format!("{what} is not available on {:?}", self.kind)))
        }
    }

    fn check_len(&self, x: &[f64], what: &str) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::Contract(format!(
                "{what}: expected {} ambient coordinates, got {}",
                self.ambient_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    pub fn on_manifold(&self, x: &[f64]) -> bool {
        if x.len() != self.ambient_dim() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self.kind {
            ManifoldKind::Sphere { .. } => (norm(x) - 1.0).abs() <= SPHERE_TOL,
            ManifoldKind::FlatTorus { .. } => x
                .chunks_exact(2)
                .all(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() <= TORUS_TOL),
            ManifoldKind::Stiefel { n, k } => {
                let m = DMatrix::from_row_slice(n, k, x);
                let gram = m.transpose() * &m - DMatrix::<f64>::identity(k, k);
                gram.norm() <= STIEFEL_TOL
            }
        }
    }

    fn require_on_manifold(&self, x: &[f64], what: &str) -> Result<()> {
        self.check_len(x, what)?;
        if !self.on_manifold(x) {
            return Err(Error::Contract(format!("{what}: point is not on the manifold")));
        }
        Ok(())
    }

    pub fn retract(&self, v: &[f64]) -> Result<AmbientPoint> {
        if v.len() != self.retraction_input_dim() {
            return Err(Error::Contract(format!(
                "retract: expected {} inputs, got {}",
                self.retraction_input_dim(),
                v.len()
            )));
        }
        match self.kind {
            ManifoldKind::Stiefel { n, k } => polar_retraction(n, k, v).map(AmbientPoint),
            _ => self.retract_scalar(v).map(AmbientPoint),
        }
    }

    /// Retraction over any [`Scalar`], so it can be recorded on a tape.
    /// The Stiefel polar retraction is only available on plain `f64`.
    pub fn retract_scalar<S: Scalar>(&self, v: &[S]) -> Result<Vec<S>> {
        match self.kind {
            ManifoldKind::Sphere { .. } => {
                let r = S::norm(v);
                if !(r.value() >= MIN_RETRACT_NORM) {
                    return Err(Error::Degenerate(format!(
                        "sphere retraction of a vector with norm {:e}",
                        r.value()
                    )));
                }
                Ok(v.iter().map(|&c| c / r).collect())
            }
            ManifoldKind::FlatTorus { .. } => {
                Ok(v.iter().flat_map(|&a| [a.cos(), a.sin()]).collect())
            }
            ManifoldKind::Stiefel { .. } => Err(Error::Unsupported(
                "differentiable Stiefel retraction".into(),
            )),
        }
    }

    /// `P(x)` as a dense matrix.
    pub fn tangential_projection(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.require_operators("tangential projection")?;
        self.require_on_manifold(x, "tangential projection")?;
        Ok(self.projection_extension(x))
    }

    /// Degree-zero ambient extension of `P`, defined off the manifold too
    /// (the sphere's `I - x x^T / |x|^2`, blockwise on the torus). Its
    /// divergence along the coordinate axes is the mean-curvature vector.
    pub fn projection_extension(&self, x: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut p = DMatrix::<f64>::identity(n, n);
        match self.kind {
            ManifoldKind::Sphere { .. } => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                for i in 0..n {
                    for j in 0..n {
                        p[(i, j)] -= x[i] * x[j] / r2;
                    }
                }
            }
            ManifoldKind::FlatTorus { .. } => {
                for b in 0..n / 2 {
                    let (c, s) = (x[2 * b], x[2 * b + 1]);
                    let r2 = c * c + s * s;
                    p[(2 * b, 2 * b)] = s * s / r2;
                    p[(2 * b + 1, 2 * b + 1)] = c * c / r2;
                    p[(2 * b, 2 * b + 1)] = -c * s / r2;
                    p[(2 * b + 1, 2 * b)] = -c * s / r2;
                }
            }
            ManifoldKind::Stiefel { .. } => unreachable!("guarded by require_operators"),
        }
        p
    }

    pub fn mean_curvature(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_operators("mean curvature")?;
        self.require_on_manifold(x, "mean curvature")?;
        Ok(match self.kind {
            ManifoldKind::Sphere { n } => x.iter().map(|v| -((n - 1) as f64) * v).collect(),
            _ => x.iter().map(|v| -v).collect(),
        })
    }

    /// `P(x) v` without materializing `P`. Assumes `x` on the manifold.
    pub fn project<S: Scalar>(&self, x: &[S], v: &[S]) -> Vec<S> {
        match self.kind {
            ManifoldKind::Sphere { .. } => {
                let xv = S::dot(x, v);
                v.iter().zip(x).map(|(&vi, &xi)| vi - xv * xi).collect()
            }
            ManifoldKind::FlatTorus { .. } => {
                let mut out = Vec::with_capacity(v.len());
                for (xb, vb) in x.chunks_exact(2).zip(v.chunks_exact(2)) {
                    // e = (-sin, cos) = (-x_s, x_c)
                    let ev = xb[0] * vb[1] - xb[1] * vb[0];
                    out.push(-(ev * xb[1]));
                    out.push(ev * xb[0]);
                }
                out
            }
            ManifoldKind::Stiefel { .. } => panic!("no tangential projection on Stiefel"),
        }
    }

    /// Projected squared frequency `w^T P(x) w`.
    pub fn projected_sq(&self, x: &[f64], w: &[f64]) -> f64 {
        match self.kind {
            ManifoldKind::Sphere { .. } => {
                let xw = dot(x, w);
                dot(w, w) - xw * xw
            }
            ManifoldKind::FlatTorus { .. } => x
                .chunks_exact(2)
                .zip(w.chunks_exact(2))
                .map(|(xb, wb)| {
                    let u = wb[1] * xb[0] - wb[0] * xb[1];
                    u * u
                })
                .sum(),
            ManifoldKind::Stiefel { .. } => panic!("no tangential projection on Stiefel"),
        }
    }

    /// Accumulates `bar * grad_{x,w} (w^T P(x) w)`.
    pub fn projected_sq_adjoint(&self, x: &[f64], w: &[f64], bar: f64, gx: &mut [f64], gw: &mut [f64]) {
        match self.kind {
            ManifoldKind::Sphere { .. } => {
                let xw = dot(x, w);
                for i in 0..x.len() {
                    gx[i] -= bar * 2.0 * xw * w[i];
                    gw[i] += bar * 2.0 * (w[i] - xw * x[i]);
                }
            }
            ManifoldKind::FlatTorus { .. } => {
                for b in 0..x.len() / 2 {
                    let (xc, xs) = (x[2 * b], x[2 * b + 1]);
                    let (wc, ws) = (w[2 * b], w[2 * b + 1]);
                    let u2 = 2.0 * bar * (ws * xc - wc * xs);
                    gx[2 * b] += u2 * ws;
                    gx[2 * b + 1] -= u2 * wc;
                    gw[2 * b] -= u2 * xs;
                    gw[2 * b + 1] += u2 * xc;
                }
            }
            ManifoldKind::Stiefel { .. } => panic!("no tangential projection on Stiefel"),
        }
    }

    /// `H(x) . w`.
    pub fn curvature_dot(&self, x: &[f64], w: &[f64]) -> f64 {
        -self.curvature_scale() * dot(x, w)
    }

    /// Accumulates `bar * grad_{x,w} (H(x) . w)`.
    pub fn curvature_dot_adjoint(&self, x: &[f64], w: &[f64], bar: f64, gx: &mut [f64], gw: &mut [f64]) {
        let c = -self.curvature_scale() * bar;
        for i in 0..x.len() {
            gx[i] += c * w[i];
            gw[i] += c * x[i];
        }
    }

    /// Both supported manifolds have `H(x) = -c x`.
    fn curvature_scale(&self) -> f64 {
        match self.kind {
            ManifoldKind::Sphere { n } => (n - 1) as f64,
            ManifoldKind::FlatTorus { .. } => 1.0,
            ManifoldKind::Stiefel { .. } => panic!("no mean curvature on Stiefel"),
        }
    }

    /// Dense tensor `D[i][j][k] = d_i P_jk(x)` of the degree-zero extension,
    /// flattened row-major. Only used by the anisotropic operator.
    pub fn projection_derivative(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.require_operators("projection derivative")?;
        self.require_on_manifold(x, "projection derivative")?;
        let n = x.len();
        let mut d = vec![0.0; n * n * n];
        // For the unit sphere in a block B:
        // d_i P_jk = -d_ij x_k - x_j d_ik + 2 x_i x_j x_k, for i, j, k in B.
        let blocks: Vec<std::ops::Range<usize>> = match self.kind {
            ManifoldKind::Sphere { .. } => vec![0..n],
            _ => (0..n / 2).map(|b| 2 * b..2 * b + 2).collect(),
        };
        for blk in blocks {
            for i in blk.clone() {
                for j in blk.clone() {
                    for k in blk.clone() {
                        let mut v = 2.0 * x[i] * x[j] * x[k];
                        if i == j {
                            v -= x[k];
                        }
                        if i == k {
                            v -= x[j];
                        }
                        d[(i * n + j) * n + k] = v;
                    }
                }
            }
        }
        Ok(d)
    }
}

/// `hess f : P + grad f . H`, the intrinsic Laplacian of an ambient function.
pub fn ambient_laplace_beltrami(
    hess: &DMatrix<f64>,
    grad: &[f64],
    p: &DMatrix<f64>,
    h: &[f64],
) -> Result<f64> {
    let n = grad.len();
    if hess.shape() != (n, n) || p.shape() != (n, n) || h.len() != n {
        return Err(Error::Contract(format!(
            "laplace-beltrami operands disagree: hess {:?}, grad {}, P {:?}, H {}",
            hess.shape(),
            n,
            p.shape(),
            h.len()
        )));
    }
    Ok(hess.component_mul(p).sum() + dot(grad, h))
}

/// `V (V^T V)^{-1/2}` through the eigendecomposition of the `k x k` Gram matrix.
fn polar_retraction(n: usize, k: usize, v: &[f64]) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, k, v);
    let gram = m.transpose() * &m;
    let eig = SymmetricEigen::new(gram);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= (k as f64) * f64::EPSILON * max {
        return Err(Error::Degenerate("Stiefel retraction of a rank-deficient matrix".into()));
    }
    let inv_sqrt = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&inv_sqrt) * q.transpose();
    let out = m * root;
    let mut flat = Vec::with_capacity(n * k);
    for i in 0..n {
        for j in 0..k {
            flat.push(out[(i, j)]);
        }
    }
    Ok(flat)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
