//! Run orchestration behind the `wanpf` command line: training into a run
//! directory, sampling from a checkpoint, sample diagnostics and the
//! three-way comparison against the Gibbs and SDE oracles.

use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainConfig;
use crate::diagnostics::{self, DiagnosticsSummary};
use crate::error::{Error, Result};
use crate::generator::{GeneratorMode, GeneratorNet};
use crate::geometry::ManifoldKind;
use crate::io;
use crate::oracle::{GibbsOracle, SdeIntegrator};
use crate::training::{self, sample_initial};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.json";
pub const HISTOGRAM_FILE: &str = "histogram.csv";
pub const COMPARISON_FILE: &str = "comparison.json";
pub const COMPARISON_TABLE_FILE: &str = "comparison.csv";
/// Sample count for end-of-run and comparison diagnostics.
pub const DEFAULT_SAMPLE_COUNT: usize = 8000;

/// SDE settings for the long-run oracle.
pub const SDE_DT: f64 = 1e-3;
pub const SDE_BURN_IN: f64 = 2.0;
pub const SDE_RECORD_EVERY: f64 = 0.25;

/// `sha256("blob <len>\0" + bytes)`, git's object hash over SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub steps: usize,
    pub final_loss: Option<f64>,
    /// Median loss over the last 500 logged steps.
    pub trailing_median_loss: Option<f64>,
    /// Present for steady runs on `S^2`.
    pub diagnostics: Option<DiagnosticsSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    pub config_hash: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub metrics: FinalMetrics,
}

fn is_s2_steady(cfg: &TrainConfig) -> bool {
    cfg.manifold == ManifoldKind::Sphere { n: 3 } && cfg.mode == GeneratorMode::Steady
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Pushes `count` base draws through the generator. Steady nets ignore
/// time; time-dependent nets are evaluated at the horizon with `x0 ~ rho_0`.
pub fn generate_samples(net: &GeneratorNet, config: &TrainConfig, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = net.base_sampler();
    let geom = config.geometry();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let p = match config.mode {
            GeneratorMode::Steady => net.forward_steady(&sampler.draw(&mut rng))?,
            GeneratorMode::TimeDependent => {
                let x0 = sample_initial(config, &geom, &mut rng);
                let r = sampler.draw(&mut rng);
                net.forward_td(config.horizon.unwrap_or(0.0), &x0, &r)?
            }
        };
        out.push(p.0);
    }
    Ok(out)
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = match path {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn display(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.display().to_string()).collect()
}

/// Trains into `out_dir` and writes the log, checkpoints and manifest.
pub fn cmd_train(config: TrainConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    let started_at = now();
    let outcome = training::train(config.clone(), Some(out_dir))?;
    let losses: Vec<f64> = outcome.log.iter().map(|r| r.loss).collect();
    let diagnostics = if is_s2_steady(&config) {
        let pts = generate_samples(&outcome.state.net, &config, DEFAULT_SAMPLE_COUNT, config.seed)?;
        let oracle = GibbsOracle::new(config.drift(), config.sigma)?;
        Some(diagnostics::summarize(&pts, &oracle, &config.physics())?)
    } else {
        None
    };
    let metrics = FinalMetrics {
        steps: outcome.state.step,
        final_loss: losses.last().copied(),
        trailing_median_loss: median(&losses[losses.len().saturating_sub(500)..]),
        diagnostics,
    };
    let manifest = RunManifest {
        config_hash: content_hash(config.canonical_json().as_bytes()),
        config,
        started_at,
        finished_at: now(),
        outputs: display(&outcome.files),
        metrics,
    };
    io::write_atomic(&out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(manifest)
}

/// Writes `count` generator samples as CSV.
pub fn cmd_sample(checkpoint: &Path, count: usize, seed: u64, out_csv: &Path) -> Result<()> {
    let ck = io::read_checkpoint(checkpoint)?;
    let net = ck.net()?;
    let pts = generate_samples(&net, &ck.config, count, seed)?;
    if let Some(dir) = out_csv.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    io::write_samples(out_csv, &ck.config.geometry(), &pts)
}

/// Summarizes a sample CSV; writes the summary and the histogram into `out_dir`.
pub fn cmd_diagnose(samples_csv: &Path, config: &TrainConfig, out_dir: &Path) -> Result<DiagnosticsSummary> {
    let table = io::read_samples(samples_csv)?;
    let points = table.ambient_points();
    let oracle = GibbsOracle::new(config.drift(), config.sigma)?;
    let summary = diagnostics::summarize(&points, &oracle, &config.physics())?;
    std::fs::create_dir_all(out_dir)?;
    io::write_atomic(&out_dir.join(DIAGNOSTICS_FILE), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    io::write_atomic(&out_dir.join(HISTOGRAM_FILE), summary.bin_histogram.to_csv().as_bytes())?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub source: String,
    pub summary: DiagnosticsSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub sample_count: usize,
    pub seed: u64,
    pub gibbs_acceptance_rate: f64,
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, source: &str) -> Option<&DiagnosticsSummary> {
        self.rows.iter().find(|r| r.source == source).map(|r| &r.summary)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("source,sample_count,hemisphere_mass_pos_x,polar_mass_absz_gt_0.8,tv_distance_to_gibbs\n");
        for r in &self.rows {
            let m = &r.summary;
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.source,
                m.sample_count,
                io::format_coord(m.hemisphere_mass_pos_x),
                io::format_coord(m.polar_mass_absz_gt_0_8),
                io::format_coord(m.tv_distance_to_gibbs)
            ));
        }
        s
    }
}

/// Long-run SDE occupancy with about `count` recorded states.
pub fn sde_samples(config: &TrainConfig, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sde = SdeIntegrator::new(config.geometry(), config.drift(), config.sigma, SDE_DT)?;
    let per_chain = 8usize;
    let chains = count.div_ceil(per_chain).max(1);
    let t_end = SDE_BURN_IN + per_chain as f64 * SDE_RECORD_EVERY;
    let mut pts = sde.ensemble_occupancy(chains, SDE_BURN_IN, t_end, SDE_RECORD_EVERY, seed)?;
    pts.truncate(count);
    Ok(pts)
}

/// Generator, exact Gibbs (rejection) and SDE samples side by side.
pub fn compare_oracle(net: &GeneratorNet, config: &TrainConfig, count: usize, seed: u64) -> Result<Comparison> {
    if !is_s2_steady(config) {
        return Err(Error::Unsupported("oracle comparison is defined for steady runs on S^2".into()));
    }
    let oracle = GibbsOracle::new(config.drift(), config.sigma)?;
    let physics = config.physics();
    let gen = generate_samples(net, config, count, seed)?;
    let gibbs = oracle.rejection_sample(count, seed)?;
    let sde = sde_samples(config, count, seed)?;
    let rows = [("generator", &gen), ("gibbs_rejection", &gibbs.points), ("sde_long_run", &sde)]
        .into_iter()
        .map(|(name, pts)| {
            Ok(ComparisonRow { source: name.to_string(), summary: diagnostics::summarize(pts, &oracle, &physics)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { sample_count: count, seed, gibbs_acceptance_rate: gibbs.acceptance_rate, rows })
}

/// Runs [`compare_oracle`] on a checkpoint and writes the JSON report and CSV table.
pub fn cmd_compare_oracle(
    checkpoint: &Path,
    config: Option<&TrainConfig>,
    count: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Comparison> {
    let ck = io::read_checkpoint(checkpoint)?;
    let net = ck.net()?;
    let cfg = config.unwrap_or(&ck.config);
    let cmp = compare_oracle(&net, cfg, count, seed)?;
    std::fs::create_dir_all(out_dir)?;
    io::write_atomic(&out_dir.join(COMPARISON_FILE), serde_json::to_string_pretty(&cmp)?.as_bytes())?;
    io::write_atomic(&out_dir.join(COMPARISON_TABLE_FILE), cmp.to_csv().as_bytes())?;
    Ok(cmp)
}
