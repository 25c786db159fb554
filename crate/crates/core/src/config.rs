//! Run configuration. Every field has a default, so an empty file is the
//! double-well experiment on `S^2`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Physics;
use crate::generator::{Architecture, GeneratorMode};
use crate::geometry::{ManifoldGeometry, ManifoldKind};
use crate::testfn::DriftField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Potential {
    DoubleWell,
    Zero,
}

/// Law of the initial point in time-dependent runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    /// Point mass; `point` defaults to the last basis vector on spheres and
    /// to all angles zero on tori.
    PointMass {
        #[serde(default)]
        point: Option<Vec<f64>>,
    },
    Uniform,
}

impl Default for InitialLaw {
    fn default() -> Self {
        InitialLaw::PointMass { point: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub manifold: ManifoldKind,
    pub mode: GeneratorMode,
    pub potential: Potential,
    pub alpha: f64,
    pub beta: f64,
    pub sigma: f64,
    /// Base noise dimension; the ambient dimension when unset.
    pub base_dim: Option<usize>,
    pub width: usize,
    pub depth: usize,
    pub test_functions: usize,
    pub batch_size: usize,
    /// Time-dependent batch sizes; each falls back to `batch_size`.
    pub batch_terminal: Option<usize>,
    pub batch_initial: Option<usize>,
    pub batch_interior: Option<usize>,
    pub steps: usize,
    pub lr_gen: f64,
    pub lr_gen_min: f64,
    pub lr_adv: f64,
    pub clip_norm: f64,
    /// Horizon `T`; required in time-dependent mode.
    pub horizon: Option<f64>,
    pub initial: InitialLaw,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Optional cap on adversary frequency norms, applied after each ascent.
    pub frequency_cap: Option<f64>,
    /// Record wall-clock time per step. Off by default so logs are reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            manifold: ManifoldKind::Sphere { n: 3 },
            mode: GeneratorMode::Steady,
            potential: Potential::DoubleWell,
            alpha: 4.0,
            beta: 2.0,
            sigma: 0.5,
            base_dim: None,
            width: 32,
            depth: 2,
            test_functions: 200,
            batch_size: 200,
            batch_terminal: None,
            batch_initial: None,
            batch_interior: None,
            steps: 5000,
            lr_gen: 1e-3,
            lr_gen_min: 1e-5,
            lr_adv: 5e-3,
            clip_norm: 1.0,
            horizon: None,
            initial: InitialLaw::default(),
            seed: 0,
            checkpoint_every: 500,
            frequency_cap: None,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_text(path)?;
        Self::from_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let geom = ManifoldGeometry::new(self.manifold).map_err(|e| Error::Config(e.to_string()))?;
        if !(self.sigma > 0.0) {
            return bad("sigma must be positive");
        }
        if self.width == 0 || self.test_functions == 0 || self.batch_size == 0 {
            return bad("width, test_functions and batch_size must be positive");
        }
        if [self.batch_terminal, self.batch_initial, self.batch_interior, self.base_dim].contains(&Some(0)) {
            return bad("batch sizes and base_dim must be positive");
        }
        if !(self.lr_gen > 0.0 && self.lr_gen_min > 0.0 && self.lr_adv > 0.0 && self.clip_norm > 0.0) {
            return bad("learning rates and clip_norm must be positive");
        }
        if self.lr_gen_min > self.lr_gen {
            return bad("lr_gen_min must not exceed lr_gen");
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive");
        }
        if let Some(cap) = self.frequency_cap {
            if !(cap > 0.0) {
                return bad("frequency_cap must be positive");
            }
        }
        if self.mode == GeneratorMode::TimeDependent {
            match self.horizon {
                None => return bad("time-dependent mode requires `horizon`"),
                Some(t) if !(t >= 0.0 && t.is_finite()) => return bad("horizon must be non-negative"),
                _ => {}
            }
            if let InitialLaw::PointMass { point: Some(p) } = &self.initial {
                if !geom.on_manifold(p) {
                    return bad("initial point is not on the manifold");
                }
            }
        }
        if self.potential == Potential::DoubleWell && geom.ambient_dim() != 3 {
            return bad("the double-well potential needs a manifold embedded in R^3");
        }
        if !geom.supports_operators() {
            return bad("training needs a sphere or flat torus");
        }
        Ok(())
    }

    pub fn geometry(&self) -> ManifoldGeometry {
        ManifoldGeometry::new(self.manifold).expect("validated")
    }

    pub fn drift(&self) -> DriftField {
        match self.potential {
            Potential::DoubleWell => DriftField::DoubleWell { alpha: self.alpha, beta: self.beta },
            Potential::Zero => DriftField::Zero,
        }
    }

    pub fn physics(&self) -> Physics {
        Physics { geometry: self.geometry(), drift: self.drift(), sigma: self.sigma }
    }

    pub fn architecture(&self) -> Architecture {
        let geometry = self.geometry();
        Architecture {
            mode: self.mode,
            base_dim: self.base_dim.unwrap_or(geometry.ambient_dim()),
            geometry,
            width: self.width,
            depth: self.depth,
        }
    }

    /// `(M_T, M_0, M)`.
    pub fn td_batch_sizes(&self) -> (usize, usize, usize) {
        (
            self.batch_terminal.unwrap_or(self.batch_size),
            self.batch_initial.unwrap_or(self.batch_size),
            self.batch_interior.unwrap_or(self.batch_size),
        )
    }

    pub fn initial_point(&self) -> Option<Vec<f64>> {
        match &self.initial {
            InitialLaw::Uniform => None,
            InitialLaw::PointMass { point: Some(p) } => Some(p.clone()),
            InitialLaw::PointMass { point: None } => {
                let n = self.geometry().ambient_dim();
                Some(match self.manifold {
                    ManifoldKind::FlatTorus { .. } => (0..n).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
                    _ => (0..n).map(|i| if i == n - 1 { 1.0 } else { 0.0 }).collect(),
                })
            }
        }
    }

    /// Canonical JSON, the input to the content hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_table_defaults() {
        let c = TrainConfig::from_str("").unwrap();
        assert_eq!(c, TrainConfig::default());
        assert_eq!(c.architecture().param_count(), 1283);
        assert_eq!(c.drift(), DriftField::DoubleWell { alpha: 4.0, beta: 2.0 });
        assert_eq!(TrainConfig::from_str("{}").unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let e = TrainConfig::from_str("sigmaa = 0.3").unwrap_err().to_string();
        assert!(e.contains("sigmaa"), "{e}");
    }

    #[test]
    fn td_requires_horizon() {
        let e = TrainConfig::from_str("mode = \"time_dependent\"").unwrap_err().to_string();
        assert!(e.contains("horizon"), "{e}");
        let c = TrainConfig::from_str(
            "mode = \"time_dependent\"\nhorizon = 1.0\npotential = \"zero\"\n[manifold]\nkind = \"flat_torus\"\nangles = 1\n",
        )
        .unwrap();
        assert_eq!(c.initial_point(), Some(vec![1.0, 0.0]));
        assert_eq!(c.architecture().input_dim(), 1 + 2 + 2);
    }

    #[test]
    fn rejects_inconsistent_values() {
        assert!(TrainConfig::from_str("lr_gen_min = 0.1").is_err());
        assert!(TrainConfig::from_str("sigma = 0.0").is_err());
        assert!(TrainConfig::from_str("[manifold]\nkind = \"flat_torus\"\nangles = 2").is_err());
        assert!(TrainConfig::from_str("[manifold]\nkind = \"stiefel\"\nn = 3\nk = 2").is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut c = TrainConfig::default();
        c.frequency_cap = Some(25.0);
        c.steps = 10;
        assert_eq!(TrainConfig::from_str(&c.canonical_json()).unwrap(), c);
    }
}
