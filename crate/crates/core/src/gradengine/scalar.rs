use std::ops::{Add, Div, Mul, Neg, Sub};

use super::tape::Var;

/// Arithmetic shared by plain `f64` evaluation and tape recording, so the
/// generator, retractions and drift are written once and run either way.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn value(self) -> f64;
    /// A constant in the same evaluation context as `self`.
    fn lift(self, c: f64) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    /// Panics on empty or mismatched slices.
    fn dot(xs: &[Self], ys: &[Self]) -> Self;
    fn affine(bias: Self, weights: &[Self], inputs: &[Self]) -> Self;
    /// Panics on an empty slice.
    fn norm(xs: &[Self]) -> Self;
}

impl Scalar for f64 {
    fn value(self) -> f64 {
        self
    }
    fn lift(self, c: f64) -> Self {
        c
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn dot(xs: &[Self], ys: &[Self]) -> Self {
        assert!(!xs.is_empty() && xs.len() == ys.len());
        xs.iter().zip(ys).map(|(x, y)| x * y).sum()
    }
    fn affine(bias: Self, weights: &[Self], inputs: &[Self]) -> Self {
        assert_eq!(weights.len(), inputs.len());
        weights.iter().zip(inputs).fold(bias, |acc, (w, x)| acc + w * x)
    }
    fn norm(xs: &[Self]) -> Self {
        assert!(!xs.is_empty());
        xs.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl<'t> Scalar for Var<'t> {
    fn value(self) -> f64 {
        Var::value(self)
    }
    fn lift(self, c: f64) -> Self {
        self.tape().constant(c)
    }
    fn sin(self) -> Self {
        Var::sin(self)
    }
    fn cos(self) -> Self {
        Var::cos(self)
    }
    fn tanh(self) -> Self {
        Var::tanh(self)
    }
    fn sqrt(self) -> Self {
        Var::sqrt(self)
    }
    fn dot(xs: &[Self], ys: &[Self]) -> Self {
        assert!(!xs.is_empty());
        xs[0].tape().dot(xs, ys)
    }
    fn affine(bias: Self, weights: &[Self], inputs: &[Self]) -> Self {
        bias.tape().affine(bias, weights, inputs)
    }
    fn norm(xs: &[Self]) -> Self {
        assert!(!xs.is_empty());
        xs[0].tape().norm(xs)
    }
}
