//! Weak adversarial neural pushforward solver for Fokker-Planck equations on
//! embedded Riemannian manifolds.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod generator;
pub mod geometry;
pub mod gradengine;
pub mod io;
pub mod oracle;
pub mod testfn;
pub mod training;

pub use error::{Error, Result};
