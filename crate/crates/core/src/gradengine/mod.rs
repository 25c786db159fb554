//! Reverse-mode differentiation substrate for both players' updates.

mod params;
mod scalar;
mod tape;

pub use params::{ParamShape, ParamVector, Slot};
pub use scalar::Scalar;
pub use tape::{Adjoints, OpKind, Tape, Var, VarId};

use crate::error::{Error, Result};
use crate::geometry::{ManifoldGeometry, ManifoldKind, MIN_RETRACT_NORM};

/// Value and gradient of a scalar expression at `at`.
///
/// The closure records its computation on the supplied tape, reading the
/// parameters from the leaves it is handed.
pub fn grad<F>(f: F, at: &[f64]) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::with_capacity(at.len() * 4, 0);
    let leaves = tape.leaves(at);
    let root = f(&tape, &leaves)?;
    let adj = tape.gradient(root)?;
    let g = match leaves.first() {
        Some(first) => adj.slice(first.id(), at.len()).to_vec(),
        None => Vec::new(),
    };
    Ok((root.value(), g))
}

/// Vector-Jacobian product of the retraction at `v`: `J(v)^T upstream`.
pub fn grad_through_retraction(geom: &ManifoldGeometry, v: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    if v.len() != geom.retraction_input_dim() || upstream.len() != geom.ambient_dim() {
        return Err(Error::Contract("retraction gradient operands have wrong length".into()));
    }
    match geom.kind() {
        ManifoldKind::Sphere { .. } => {
            let r = crate::geometry::norm(v);
            if !(r >= MIN_RETRACT_NORM) {
                return Err(Error::NonFinite {
                    kind: OpKind::Norm,
                    pass: crate::error::Pass::Reverse,
                });
            }
            let u: Vec<f64> = v.iter().map(|c| c / r).collect();
            let uu = crate::geometry::dot(&u, upstream);
            Ok(upstream.iter().zip(&u).map(|(g, ui)| (g - uu * ui) / r).collect())
        }
        ManifoldKind::FlatTorus { .. } => Ok(v
            .iter()
            .zip(upstream.chunks_exact(2))
            .map(|(a, g)| -a.sin() * g[0] + a.cos() * g[1])
            .collect()),
        ManifoldKind::Stiefel { .. } => Err(Error::Unsupported("Stiefel retraction gradient".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_examples() {
        let (v, g) = grad(|_, p| Ok(p[0] * p[0]), &[3.0]).unwrap();
        assert_eq!((v, g[0]), (9.0, 6.0));
        let (_, g) = grad(|_, p| Ok(p[0].sin()), &[0.0]).unwrap();
        assert_eq!(g[0], 1.0);
    }

    #[test]
    fn grad_reports_non_finite() {
        let r = grad(|_, p| Ok(p[0] / (p[0] - 1.0)), &[1.0]);
        assert!(matches!(r, Err(Error::NonFinite { kind: OpKind::Div, .. })));
    }

    #[test]
    fn retraction_vjp_examples() {
        let s = ManifoldGeometry::sphere(3).unwrap();
        let g = grad_through_retraction(&s, &[2.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.5, 0.0]);
        let g = grad_through_retraction(&s, &[2.0, 0.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
        assert!(grad_through_retraction(&s, &[0.0; 3], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn retraction_vjp_matches_tape() {
        let s = ManifoldGeometry::sphere(4).unwrap();
        let v = [0.3, -1.2, 0.7, 2.0];
        let up = [0.5, 0.1, -0.4, 0.9];
        let (_, g) = grad(
            |tape, p| {
                let x = s.retract_scalar(p)?;
                let ups: Vec<Var> = up.iter().map(|&u| tape.constant(u)).collect();
                Ok(tape.dot(&x, &ups))
            },
            &v,
        )
        .unwrap();
        let analytic = grad_through_retraction(&s, &v, &up).unwrap();
        for (a, b) in g.iter().zip(&analytic) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
