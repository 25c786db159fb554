//! Alternating ascent/descent training of the adversary and the generator.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Player, Result};
use crate::estimators::{self, Objective, ResidualReport, TdBatches};
use crate::generator::{Draw, GeneratorMode, GeneratorNet};
use crate::geometry::{norm, ManifoldGeometry, ManifoldKind};
use crate::gradengine::Tape;
use crate::io::{self, Checkpoint};
use crate::testfn::PlaneWaveBank;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

// Independent ChaCha streams for the three uses of the run seed.
const STREAM_ADVERSARY: u64 = 1;
const STREAM_BATCHES: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, dir: Direction) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        let sign = match dir {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        };
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] += sign * lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// Scales `grad` down to `max_norm` if it is longer; returns the pre-clip norm.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let n = norm(grad);
    if n > max_norm {
        let s = max_norm / n;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    n
}

/// Cosine annealing from `lr_gen` at step 0 to `lr_gen_min` at step `steps`.
pub fn lr_schedule(step: usize, config: &TrainConfig) -> f64 {
    let (lr0, lr1) = (config.lr_gen, config.lr_gen_min);
    if config.steps == 0 {
        return lr0;
    }
    let s = step.min(config.steps) as f64 / config.steps as f64;
    lr1 + (lr0 - lr1) * (1.0 + (PI * s).cos()) / 2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub loss: f64,
    pub lr_gen: f64,
    pub grad_norm_gen: f64,
    pub grad_norm_adv: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    /// Waves rescaled by the frequency cap this step, when the cap is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capped: Option<usize>,
}

/// One step's worth of draws.
#[derive(Debug, Clone, PartialEq)]
pub enum Batch {
    Steady(Vec<Draw>),
    TimeDependent(TdBatches),
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub net: GeneratorNet,
    pub bank: PlaneWaveBank,
    pub adam_gen: AdamState,
    pub adam_adv: AdamState,
    pub rng: ChaCha8Rng,
    pub step: usize,
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples the initial law.
pub fn sample_initial<R: Rng + ?Sized>(config: &TrainConfig, geom: &ManifoldGeometry, rng: &mut R) -> Vec<f64> {
    if let Some(p) = config.initial_point() {
        return p;
    }
    match geom.kind() {
        ManifoldKind::FlatTorus { angles } => {
            let th: Vec<f64> = (0..angles).map(|_| rng.random_range(-PI..PI)).collect();
            geom.retract(&th).expect("torus retraction is total").0
        }
        _ => loop {
            let v: Vec<f64> = (0..geom.ambient_dim()).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(x) = geom.retract(&v) {
                break x.0;
            }
        },
    }
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let arch = config.architecture();
        let net = GeneratorNet::new(arch, config.seed)?;
        let time_dependent = config.mode == GeneratorMode::TimeDependent;
        let n = config.geometry().ambient_dim();
        let bank = PlaneWaveBank::random(
            config.test_functions,
            n,
            time_dependent,
            &mut stream(config.seed, STREAM_ADVERSARY),
        )?;
        Ok(TrainState {
            adam_gen: AdamState::new(net.params.len()),
            adam_adv: AdamState::new(bank.flat().len()),
            rng: stream(config.seed, STREAM_BATCHES),
            net,
            bank,
            config,
            step: 0,
        })
    }

    pub fn draw_batch(&mut self) -> Batch {
        let cfg = &self.config;
        let geom = cfg.geometry();
        let base = self.net.base_sampler();
        let rng = &mut self.rng;
        match cfg.mode {
            GeneratorMode::Steady => Batch::Steady((0..cfg.batch_size).map(|_| Draw::steady(base.draw(rng))).collect()),
            GeneratorMode::TimeDependent => {
                let horizon = cfg.horizon.expect("validated");
                let (mt, m0, m) = cfg.td_batch_sizes();
                let terminal = (0..mt)
                    .map(|_| {
                        let x0 = sample_initial(cfg, &geom, rng);
                        Draw { t: horizon, x0, r: base.draw(rng) }
                    })
                    .collect();
                let initial = (0..m0).map(|_| sample_initial(cfg, &geom, rng)).collect();
                let interior = (0..m)
                    .map(|_| {
                        let t = horizon * rng.random::<f64>();
                        let x0 = sample_initial(cfg, &geom, rng);
                        Draw { t, x0, r: base.draw(rng) }
                    })
                    .collect();
                Batch::TimeDependent(TdBatches { terminal, initial, interior })
            }
        }
    }

    fn objective<'t>(&self, tape: &'t Tape, batch: &Batch) -> Result<Objective<'t>> {
        let physics = self.config.physics();
        match batch {
            Batch::Steady(d) => estimators::steady_objective(&self.net, tape, d, &physics),
            Batch::TimeDependent(b) => {
                estimators::td_objective(&self.net, tape, self.config.horizon.unwrap_or(0.0), b, &physics)
            }
        }
    }

    fn fail(&self, player: Player, e: Error) -> Error {
        Error::Training { step: self.step, player, source: Box::new(e) }
    }

    /// Current loss on a batch without updating anything.
    pub fn evaluate(&self, batch: &Batch) -> Result<ResidualReport> {
        let physics = self.config.physics();
        match batch {
            Batch::Steady(d) => estimators::loss_steady(&self.net, &self.bank, d, &physics),
            Batch::TimeDependent(b) => {
                estimators::loss_td(&self.net, &self.bank, self.config.horizon.unwrap_or(0.0), b, &physics)
            }
        }
    }

    /// Gradient ascent on the adversary. Returns `(loss before, pre-update gradient norm)`.
    pub fn adversary_step(&mut self, batch: &Batch) -> Result<(f64, f64)> {
        let tape = Tape::new();
        let obj = self.objective(&tape, batch).map_err(|e| self.fail(Player::Adversary, e))?;
        self.ascend(&obj)
    }

    /// Clipped Adam descent on the generator against the current adversary.
    /// Returns the pre-clip gradient norm.
    pub fn generator_step(&mut self, batch: &Batch) -> Result<f64> {
        let tape = Tape::new();
        let obj = self.objective(&tape, batch).map_err(|e| self.fail(Player::Generator, e))?;
        self.descend(&obj)
    }

    fn ascend(&mut self, obj: &Objective<'_>) -> Result<(f64, f64)> {
        let physics = self.config.physics();
        let ev = obj.evaluate(&self.bank, &physics);
        let loss = ev.loss();
        let grad = ev.bank_grad(&self.bank);
        let gnorm = norm(&grad);
        if !loss.is_finite() || !gnorm.is_finite() {
            return Err(self.fail(Player::Adversary, Error::Degenerate("non-finite adversary loss or gradient".into())));
        }
        let mut flat = self.bank.flat();
        self.adam_adv.step(&mut flat, &grad, self.config.lr_adv, Direction::Ascent);
        self.bank.set_flat(&flat);
        Ok((loss, gnorm))
    }

    fn descend(&mut self, obj: &Objective<'_>) -> Result<f64> {
        let physics = self.config.physics();
        let ev = obj.evaluate(&self.bank, &physics);
        let mut grad = ev.param_grad(&self.bank).map_err(|e| self.fail(Player::Generator, e))?;
        let gnorm = clip_global_norm(&mut grad, self.config.clip_norm);
        if !gnorm.is_finite() {
            return Err(self.fail(Player::Generator, Error::Degenerate("non-finite generator gradient".into())));
        }
        let lr = lr_schedule(self.step, &self.config);
        self.adam_gen.step(&mut self.net.params.values, &grad, lr, Direction::Descent);
        Ok(gnorm)
    }

    /// One full step: draw, ascend, recompute, descend. The logged loss is
    /// the value before the adversary moved.
    pub fn step(&mut self) -> Result<TrainLogRecord> {
        let start = self.config.log_wall_time.then(Instant::now);
        let batch = self.draw_batch();
        let tape = Tape::with_capacity(1 << 16, 1 << 18);
        let obj = self.objective(&tape, &batch).map_err(|e| self.fail(Player::Adversary, e))?;
        let (loss, grad_norm_adv) = self.ascend(&obj)?;
        let capped = self.config.frequency_cap.map(|cap| self.bank.cap_frequencies(cap));
        let lr_gen = lr_schedule(self.step, &self.config);
        let grad_norm_gen = self.descend(&obj)?;
        let record = TrainLogRecord {
            step: self.step,
            loss,
            lr_gen,
            grad_norm_gen,
            grad_norm_adv,
            wall_ms: start.map(|s| s.elapsed().as_secs_f64() * 1e3),
            capped,
        };
        self.step += 1;
        Ok(record)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_state(self)
    }
}

/// Where a training run writes its artifacts.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: &Path) -> Self {
        RunPaths { dir: dir.to_path_buf() }
    }
    pub fn log(&self) -> PathBuf {
        self.dir.join("train_log.jsonl")
    }
    pub fn final_checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn failure_checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint_last_good.json")
    }
    pub fn periodic_checkpoint(&self, step: usize) -> PathBuf {
        self.dir.join("checkpoints").join(format!("step_{step:06}.json"))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub log: Vec<TrainLogRecord>,
    /// Every file written, in order.
    pub files: Vec<PathBuf>,
}

/// Runs `config.steps` steps from a fresh initialization. With `out`, the
/// log is streamed to disk and checkpoints are written every
/// `checkpoint_every` steps and at the end. On a numeric failure the last
/// good state is saved before the error is returned.
pub fn train(config: TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let state = TrainState::new(config)?;
    run(state, out)
}

/// Continues training an existing state up to `state.config.steps`.
pub fn run(mut state: TrainState, out: Option<&Path>) -> Result<TrainOutcome> {
    let paths = out.map(RunPaths::new);
    let mut files = Vec::new();
    let mut log_writer = match &paths {
        Some(p) => {
            std::fs::create_dir_all(&p.dir)?;
            files.push(p.log());
            Some(io::LogWriter::create(&p.log())?)
        }
        None => None,
    };
    let mut log = Vec::with_capacity(state.config.steps);
    while state.step < state.config.steps {
        let last_good = state.clone();
        let rec = match state.step() {
            Ok(r) => r,
            Err(e) => {
                if let Some(p) = &paths {
                    io::write_checkpoint(&p.failure_checkpoint(), &last_good.to_checkpoint())?;
                }
                return Err(e);
            }
        };
        if let Some(w) = log_writer.as_mut() {
            w.append(&rec)?;
        }
        log.push(rec);
        if let Some(p) = &paths {
            if state.step.is_multiple_of(state.config.checkpoint_every) && state.step < state.config.steps {
                let path = p.periodic_checkpoint(state.step);
                io::write_checkpoint(&path, &state.to_checkpoint())?;
                files.push(path);
            }
        }
    }
    if let Some(w) = log_writer.as_mut() {
        w.flush()?;
    }
    if let Some(p) = &paths {
        io::write_checkpoint(&p.final_checkpoint(), &state.to_checkpoint())?;
        files.push(p.final_checkpoint());
    }
    Ok(TrainOutcome { state, log, files })
}
