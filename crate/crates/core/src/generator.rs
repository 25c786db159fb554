//! The pushforward map: a tanh MLP followed by the manifold retraction.
//!
//! Steady mode maps base noise `r` to `retract(mlp(r))`. Time-dependent mode
//! maps `(t, x0, r)` to `retract(x0 + sqrt(t) mlp(t, x0, r))`, so the initial
//! condition holds by construction. On the flat torus the sum is taken in
//! angle coordinates.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, ManifoldGeometry, ManifoldKind};
use crate::gradengine::{ParamShape, ParamVector, Scalar, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorMode {
    Steady,
    TimeDependent,
}

/// Everything needed to rebuild a network's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub mode: GeneratorMode,
    pub geometry: ManifoldGeometry,
    pub base_dim: usize,
    pub width: usize,
    pub depth: usize,
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match self.mode {
            GeneratorMode::Steady => self.base_dim,
            GeneratorMode::TimeDependent => 1 + self.geometry.ambient_dim() + self.base_dim,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.geometry.retraction_input_dim()
    }

    /// Layer `(fan_in, fan_out)` pairs, hidden layers first.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim()];
        dims.extend(std::iter::repeat_n(self.width, self.depth));
        dims.push(self.output_dim());
        dims.windows(2).map(|p| (p[0], p[1])).collect()
    }

    pub fn param_shape(&self) -> ParamShape {
        let layers = self.layers();
        let last = layers.len() - 1;
        layers
            .iter()
            .enumerate()
            .fold(ParamShape::new(), |shape, (i, &(fan_in, fan_out))| {
                let name = if i == last { "out".to_string() } else { format!("h{i}") };
                shape
                    .push(format!("{name}.w"), &[fan_out, fan_in])
                    .push(format!("{name}.b"), &[fan_out])
            })
    }

    pub fn param_count(&self) -> usize {
        self.layers().iter().map(|(i, o)| (i + 1) * o).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.base_dim == 0 || self.width == 0 {
            return Err(Error::Config("base_dim and width must be positive".into()));
        }
        Ok(())
    }
}

/// Glorot-uniform weights and zero biases, deterministic per seed.
pub fn init_params(arch: &Architecture, seed: u64) -> ParamVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamVector::zeros(arch.param_shape());
    let mut offset = 0;
    for (fan_in, fan_out) in arch.layers() {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for v in &mut params.values[offset..offset + fan_in * fan_out] {
            *v = rng.random_range(-limit..=limit);
        }
        offset += (fan_in + 1) * fan_out;
    }
    params
}

/// Standard Gaussian base distribution on `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaseSampler {
    pub dim: usize,
}

impl BaseSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn draw_many<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count).map(|_| self.draw(rng)).collect()
    }
}

/// One generator input. Steady draws leave `t = 0` and `x0` empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub t: f64,
    pub x0: Vec<f64>,
    pub r: Vec<f64>,
}

impl Draw {
    pub fn steady(r: Vec<f64>) -> Self {
        Draw { t: 0.0, x0: Vec::new(), r }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorNet {
    pub arch: Architecture,
    pub params: ParamVector,
}

/// Tape-recorded batch: parameter leaves plus one output point per draw.
pub struct RecordedBatch<'t> {
    pub params: Vec<Var<'t>>,
    pub points: Vec<Vec<Var<'t>>>,
}

impl GeneratorNet {
    pub fn new(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let params = init_params(&arch, seed);
        Ok(GeneratorNet { arch, params })
    }

    pub fn from_params(arch: Architecture, params: ParamVector) -> Result<Self> {
        arch.validate()?;
        if params.shape != arch.param_shape() {
            return Err(Error::Contract("parameter layout does not match the architecture".into()));
        }
        Ok(GeneratorNet { arch, params })
    }

    pub fn geometry(&self) -> &ManifoldGeometry {
        &self.arch.geometry
    }

    pub fn base_sampler(&self) -> BaseSampler {
        BaseSampler { dim: self.arch.base_dim }
    }

    /// Pre-retraction network output.
    pub fn mlp<S: Scalar>(&self, params: &[S], inputs: &[S]) -> Vec<S> {
        mlp(&self.arch.layers(), params, inputs)
    }

    pub fn forward_steady(&self, r: &[f64]) -> Result<AmbientPoint> {
        self.require_mode(GeneratorMode::Steady)?;
        self.check_base(r)?;
        let out = self.mlp(&self.params.values, r);
        self.arch.geometry.retract(&out)
    }

    pub fn forward_td(&self, t: f64, x0: &[f64], r: &[f64]) -> Result<AmbientPoint> {
        self.require_mode(GeneratorMode::TimeDependent)?;
        self.check_td(t, x0, r)?;
        if t == 0.0 {
            return Ok(AmbientPoint(x0.to_vec()));
        }
        let geom = &self.arch.geometry;
        let out = self.mlp(&self.params.values, &td_inputs(t, x0, r));
        let pre = perturb(geom, x0, t.sqrt(), &out);
        geom.retract(&pre)
    }

    pub fn forward(&self, draw: &Draw) -> Result<AmbientPoint> {
        match self.arch.mode {
            GeneratorMode::Steady => self.forward_steady(&draw.r),
            GeneratorMode::TimeDependent => self.forward_td(draw.t, &draw.x0, &draw.r),
        }
    }

    /// Records every draw on one tape with shared parameter leaves.
    pub fn record<'t>(&self, tape: &'t Tape, draws: &[Draw]) -> Result<RecordedBatch<'t>> {
        let geom = &self.arch.geometry;
        if !matches!(geom.kind(), ManifoldKind::Sphere { .. } | ManifoldKind::FlatTorus { .. }) {
            return Err(Error::Unsupported("training a Stiefel-valued generator".into()));
        }
        let params = tape.leaves(&self.params.values);
        let layers = self.arch.layers();
        let mut points = Vec::with_capacity(draws.len());
        for draw in draws {
            let point = match self.arch.mode {
                GeneratorMode::Steady => {
                    self.check_base(&draw.r)?;
                    let inputs: Vec<Var> = draw.r.iter().map(|&v| tape.constant(v)).collect();
                    geom.retract_scalar(&mlp(&layers, &params, &inputs))?
                }
                GeneratorMode::TimeDependent => {
                    self.check_td(draw.t, &draw.x0, &draw.r)?;
                    if draw.t == 0.0 {
                        draw.x0.iter().map(|&v| tape.constant(v)).collect()
                    } else {
                        let inputs: Vec<Var> = td_inputs(draw.t, &draw.x0, &draw.r)
                            .into_iter()
                            .map(|v| tape.constant(v))
                            .collect();
                        let out = mlp(&layers, &params, &inputs);
                        let pre = perturb(geom, &draw.x0, draw.t.sqrt(), &out);
                        geom.retract_scalar(&pre)?
                    }
                }
            };
            points.push(point);
        }
        tape.check_forward()?;
        Ok(RecordedBatch { params, points })
    }

    fn require_mode(&self, mode: GeneratorMode) -> Result<()> {
        if self.arch.mode != mode {
            return Err(Error::Contract(format!(
                "generator is in {:?} mode, call needs {:?}",
                self.arch.mode, mode
            )));
        }
        Ok(())
    }

    fn check_base(&self, r: &[f64]) -> Result<()> {
        if r.len() != self.arch.base_dim {
            return Err(Error::Contract(format!(
                "base draw has {} entries, expected {}",
                r.len(),
                self.arch.base_dim
            )));
        }
        Ok(())
    }

    fn check_td(&self, t: f64, x0: &[f64], r: &[f64]) -> Result<()> {
        if !(t >= 0.0) {
            return Err(Error::Contract(format!("negative time {t}")));
        }
        self.check_base(r)?;
        if !self.arch.geometry.on_manifold(x0) {
            return Err(Error::Contract("initial point is not on the manifold".into()));
        }
        Ok(())
    }
}

fn td_inputs(t: f64, x0: &[f64], r: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(1 + x0.len() + r.len());
    v.push(t);
    v.extend_from_slice(x0);
    v.extend_from_slice(r);
    v
}

/// `x0 + s * out`, in angle coordinates on the torus.
fn perturb<S: Scalar>(geom: &ManifoldGeometry, x0: &[f64], s: f64, out: &[S]) -> Vec<S> {
    match geom.kind() {
        ManifoldKind::FlatTorus { .. } => x0
            .chunks_exact(2)
            .zip(out)
            .map(|(p, &o)| o * s + p[1].atan2(p[0]))
            .collect(),
        _ => x0.iter().zip(out).map(|(&a, &o)| o * s + a).collect(),
    }
}

fn mlp<S: Scalar>(layers: &[(usize, usize)], params: &[S], inputs: &[S]) -> Vec<S> {
    let last = layers.len() - 1;
    let mut act: Vec<S> = inputs.to_vec();
    let mut offset = 0;
    for (i, &(fan_in, fan_out)) in layers.iter().enumerate() {
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        act = (0..fan_out)
            .map(|o| {
                let z = S::affine(b[o], &w[o * fan_in..(o + 1) * fan_in], &act);
                if i == last {
                    z
                } else {
                    z.tanh()
                }
            })
            .collect();
    }
    act
}
