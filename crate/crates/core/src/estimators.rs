//! Monte Carlo weak residuals and the adversarial losses.
//!
//! Steady: `E_k = 1/M sum_m L f_k(x_m)`, loss `1/K sum_k E_k^2`.
//! Time-dependent: `R_k = E_T - E_0 - E_I` with
//! `E_T = 1/M_T sum f_k(T, y_j)`, `E_0 = 1/M_0 sum f_k(0, x0_j)` and
//! `E_I = T/M sum (d_t + L) f_k(t_m, x_m)`; loss `1/K sum_k R_k^2`.
//!
//! Gradients use a hand-written adjoint of the per-(sample, wave) operator,
//! then one reverse sweep through the generator tape.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Draw, GeneratorNet};
use crate::geometry::{dot, ManifoldGeometry};
use crate::gradengine::{Tape, Var, VarId};
use crate::testfn::{DriftField, PlaneWaveBank, WaveTerms};

/// The forward problem: where, with what drift, and how much noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    pub geometry: ManifoldGeometry,
    pub drift: DriftField,
    pub sigma: f64,
}

impl Physics {
    pub fn half_sigma2(&self) -> f64 {
        0.5 * self.sigma * self.sigma
    }

    fn check(&self) -> Result<()> {
        if !self.geometry.supports_operators() {
            return Err(Error::Unsupported("weak residuals need P(x) and H(x)".into()));
        }
        self.drift.check_geometry(&self.geometry)
    }

    fn projected_drifts(&self, points: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
        match self.drift {
            DriftField::Zero => None,
            _ => Some(
                points
                    .iter()
                    .map(|x| self.drift.projected_drift(x, &self.geometry).expect("non-zero drift"))
                    .collect(),
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub per_test_residuals: Vec<f64>,
    pub loss: f64,
    /// `[M_s]` for steady runs, `[M_T, M_0, M]` for time-dependent runs.
    pub batch_sizes: Vec<usize>,
    pub seed: Option<u64>,
}

impl ResidualReport {
    fn new(residuals: Vec<f64>, batch_sizes: Vec<usize>) -> Self {
        ResidualReport {
            loss: mean_square(&residuals),
            per_test_residuals: residuals,
            batch_sizes,
            seed: None,
        }
    }
}

fn mean_square(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TermKind {
    /// `f_k(t, x)` itself.
    Value,
    /// `L f_k`, optionally with `kappa cos(phi)` and the `kappa t` phase.
    Operator { with_time: bool },
}

/// One Monte Carlo term of a residual, with every per-pair quantity cached
/// so values and both adjoints come from a single trigonometric pass.
struct TermCache<'a> {
    kind: TermKind,
    weight: f64,
    half_sigma2: f64,
    geom: &'a ManifoldGeometry,
    points: &'a [Vec<f64>],
    drifts: Option<&'a [Vec<f64>]>,
    times: &'a [f64],
    /// Index `k * M + m`.
    terms: Vec<WaveTerms>,
    means: Vec<f64>,
}

impl<'a> TermCache<'a> {
    #[allow(clippy::too_many_arguments)]
    fn new(
        bank: &PlaneWaveBank,
        physics: &'a Physics,
        kind: TermKind,
        weight: f64,
        points: &'a [Vec<f64>],
        drifts: Option<&'a [Vec<f64>]>,
        times: &'a [f64],
    ) -> Self {
        let geom = &physics.geometry;
        let a = physics.half_sigma2();
        let m = points.len();
        let mut terms = Vec::with_capacity(bank.len() * m);
        let mut means = Vec::with_capacity(bank.len());
        for k in 0..bank.len() {
            let w = bank.w(k);
            let mut acc = 0.0;
            for (j, x) in points.iter().enumerate() {
                let (wt, value) = match kind {
                    TermKind::Value => {
                        let (s, c) = bank.phase(k, times[j], x).sin_cos();
                        (WaveTerms { sin: s, cos: c, q: 0.0, h: 0.0, d: 0.0 }, s)
                    }
                    TermKind::Operator { with_time } => {
                        let phi = if with_time {
                            bank.phase(k, times[j], x)
                        } else {
                            dot(w, x) + bank.phase_offset(k)
                        };
                        let wt = WaveTerms::new(geom, x, drifts.map(|d| d[j].as_slice()), w, phi);
                        let kappa = if with_time { bank.kappa(k) } else { 0.0 };
                        (wt, wt.generator(a, kappa))
                    }
                };
                acc += value;
                terms.push(wt);
            }
            means.push(if m == 0 { 0.0 } else { weight * acc });
        }
        TermCache {
            kind,
            weight,
            half_sigma2: a,
            geom,
            points,
            drifts,
            times,
            terms,
            means,
        }
    }

    /// `dL / dphi` for an operator pair.
    fn dphi(&self, wt: &WaveTerms, kappa: f64) -> f64 {
        -kappa * wt.sin + self.half_sigma2 * (-wt.cos * wt.q - wt.sin * wt.h) - wt.sin * wt.d
    }

    /// Accumulates `sum_k upstream_k dE_k / d eta` into `out` (`w, kappa, phase` layout).
    fn bank_vjp(&self, bank: &PlaneWaveBank, upstream: &[f64], out: &mut [f64]) {
        let n = bank.dim();
        let kk = bank.len();
        let (gw_all, rest) = out.split_at_mut(kk * n);
        let (gkappa, gphase) = rest.split_at_mut(kk);
        let m = self.points.len();
        let mut scratch = vec![0.0; n];
        for k in 0..kk {
            let u = upstream[k] * self.weight;
            if u == 0.0 {
                continue;
            }
            let w = bank.w(k);
            let gw = &mut gw_all[k * n..(k + 1) * n];
            for (j, x) in self.points.iter().enumerate() {
                let wt = &self.terms[k * m + j];
                let t = self.times[j];
                match self.kind {
                    TermKind::Value => {
                        let uc = u * wt.cos;
                        for (g, xi) in gw.iter_mut().zip(x) {
                            *g += uc * xi;
                        }
                        gkappa[k] += uc * t;
                        gphase[k] += uc;
                    }
                    TermKind::Operator { with_time } => {
                        let kappa = if with_time { bank.kappa(k) } else { 0.0 };
                        let lphi = u * self.dphi(wt, kappa);
                        for (g, xi) in gw.iter_mut().zip(x) {
                            *g += lphi * xi;
                        }
                        if let Some(d) = self.drifts {
                            let uc = u * wt.cos;
                            for (g, di) in gw.iter_mut().zip(&d[j]) {
                                *g += uc * di;
                            }
                        }
                        let a = self.half_sigma2;
                        self.geom.projected_sq_adjoint(x, w, -u * a * wt.sin, &mut scratch, gw);
                        self.geom.curvature_dot_adjoint(x, w, u * a * wt.cos, &mut scratch, gw);
                        if with_time {
                            gkappa[k] += u * wt.cos + lphi * t;
                        }
                        gphase[k] += lphi;
                    }
                }
            }
        }
    }

    /// Accumulates `sum_k upstream_k dE_k / d x_m` (and `/ d g_m` for the
    /// projected drift inputs).
    fn sample_vjp(&self, bank: &PlaneWaveBank, upstream: &[f64], xbar: &mut [Vec<f64>], mut gbar: Option<&mut [Vec<f64>]>) {
        let m = self.points.len();
        let mut scratch = vec![0.0; bank.dim()];
        for k in 0..bank.len() {
            let u = upstream[k] * self.weight;
            if u == 0.0 {
                continue;
            }
            let w = bank.w(k);
            for (j, x) in self.points.iter().enumerate() {
                let wt = &self.terms[k * m + j];
                let xb = &mut xbar[j];
                match self.kind {
                    TermKind::Value => {
                        let uc = u * wt.cos;
                        for (g, wi) in xb.iter_mut().zip(w) {
                            *g += uc * wi;
                        }
                    }
                    TermKind::Operator { with_time } => {
                        let kappa = if with_time { bank.kappa(k) } else { 0.0 };
                        let lphi = u * self.dphi(wt, kappa);
                        for (g, wi) in xb.iter_mut().zip(w) {
                            *g += lphi * wi;
                        }
                        let a = self.half_sigma2;
                        self.geom.projected_sq_adjoint(x, w, -u * a * wt.sin, xb, &mut scratch);
                        self.geom.curvature_dot_adjoint(x, w, u * a * wt.cos, xb, &mut scratch);
                        if let Some(gb) = gbar.as_deref_mut() {
                            let uc = u * wt.cos;
                            for (g, wi) in gb[j].iter_mut().zip(w) {
                                *g += uc * wi;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Generator samples recorded on a tape, with the projected drift at each
/// sample recorded alongside so its dependence on the sample is differentiated.
pub(crate) struct Recorded<'t> {
    tape: &'t Tape,
    param_first: Option<VarId>,
    param_len: usize,
    xs: Vec<Vec<Var<'t>>>,
    gs: Option<Vec<Vec<Var<'t>>>>,
    pub points: Vec<Vec<f64>>,
    pub drifts: Option<Vec<Vec<f64>>>,
    pub times: Vec<f64>,
}

impl<'t> Recorded<'t> {
    pub fn new(net: &GeneratorNet, tape: &'t Tape, draws: &[Draw], physics: &Physics, with_drift: bool) -> Result<Self> {
        let batch = net.record(tape, draws)?;
        let gs: Option<Vec<Vec<Var<'t>>>> = if with_drift {
            batch
                .points
                .iter()
                .map(|x| physics.drift.projected_drift(x, &physics.geometry))
                .collect()
        } else {
            None
        };
        tape.check_forward()?;
        let vals = |vs: &[Vec<Var<'t>>]| -> Vec<Vec<f64>> {
            vs.iter().map(|v| v.iter().map(|c| c.value()).collect()).collect()
        };
        Ok(Recorded {
            tape,
            param_first: batch.params.first().map(|p| p.id()),
            param_len: batch.params.len(),
            points: vals(&batch.points),
            drifts: gs.as_deref().map(vals),
            times: draws.iter().map(|d| d.t).collect(),
            xs: batch.points,
            gs,
        })
    }

    fn zeros(&self) -> (Vec<Vec<f64>>, Option<Vec<Vec<f64>>>) {
        let z = |v: &Vec<Vec<f64>>| v.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        (z(&self.points), self.drifts.as_ref().map(z))
    }

    fn seeds(&self, xbar: &[Vec<f64>], gbar: Option<&[Vec<f64>]>, out: &mut Vec<(VarId, f64)>) {
        for (vars, bars) in self.xs.iter().zip(xbar) {
            out.extend(vars.iter().zip(bars).map(|(v, b)| (v.id(), *b)));
        }
        if let (Some(gs), Some(gbar)) = (&self.gs, gbar) {
            for (vars, bars) in gs.iter().zip(gbar) {
                out.extend(vars.iter().zip(bars).map(|(v, b)| (v.id(), *b)));
            }
        }
    }
}

/// The sample side of the game for one training step; the bank varies.
pub(crate) enum Objective<'t> {
    Steady {
        samples: Recorded<'t>,
    },
    TimeDependent {
        horizon: f64,
        terminal: Recorded<'t>,
        initial: Vec<Vec<f64>>,
        initial_times: Vec<f64>,
        interior: Recorded<'t>,
    },
}

pub(crate) struct Evaluation<'a> {
    terms: Vec<(TermCache<'a>, f64, Option<&'a Recorded<'a>>)>,
    pub residuals: Vec<f64>,
}

impl<'t> Objective<'t> {
    pub fn batch_sizes(&self) -> Vec<usize> {
        match self {
            Objective::Steady { samples } => vec![samples.points.len()],
            Objective::TimeDependent { terminal, initial, interior, .. } => {
                vec![terminal.points.len(), initial.len(), interior.points.len()]
            }
        }
    }

    pub fn evaluate<'a>(&'a self, bank: &PlaneWaveBank, physics: &'a Physics) -> Evaluation<'a>
    where
        't: 'a,
    {
        let mut terms = Vec::new();
        match self {
            Objective::Steady { samples } => {
                let w = 1.0 / samples.points.len() as f64;
                let c = TermCache::new(
                    bank,
                    physics,
                    TermKind::Operator { with_time: false },
                    w,
                    &samples.points,
                    samples.drifts.as_deref(),
                    &samples.times,
                );
                terms.push((c, 1.0, Some(samples_ref(samples))));
            }
            Objective::TimeDependent { horizon, terminal, initial, initial_times, interior } => {
                let c = TermCache::new(
                    bank,
                    physics,
                    TermKind::Value,
                    1.0 / terminal.points.len() as f64,
                    &terminal.points,
                    None,
                    &terminal.times,
                );
                terms.push((c, 1.0, Some(samples_ref(terminal))));
                let c = TermCache::new(
                    bank,
                    physics,
                    TermKind::Value,
                    1.0 / initial.len() as f64,
                    initial,
                    None,
                    initial_times,
                );
                terms.push((c, -1.0, None));
                let c = TermCache::new(
                    bank,
                    physics,
                    TermKind::Operator { with_time: true },
                    horizon / interior.points.len() as f64,
                    &interior.points,
                    interior.drifts.as_deref(),
                    &interior.times,
                );
                terms.push((c, -1.0, Some(samples_ref(interior))));
            }
        }
        let residuals = (0..bank.len())
            .map(|k| terms.iter().map(|(c, s, _)| s * c.means[k]).sum())
            .collect();
        Evaluation { terms, residuals }
    }
}

// Shortens the borrow of a recorded batch to the evaluation's lifetime.
fn samples_ref<'a, 't: 'a>(r: &'a Recorded<'t>) -> &'a Recorded<'a> {
    r
}

impl<'a> Evaluation<'a> {
    pub fn loss(&self) -> f64 {
        mean_square(&self.residuals)
    }

    fn upstream(&self) -> Vec<f64> {
        let k = self.residuals.len() as f64;
        self.residuals.iter().map(|r| 2.0 * r / k).collect()
    }

    /// Gradient of the loss with respect to the bank (`w, kappa, phase` layout).
    pub fn bank_grad(&self, bank: &PlaneWaveBank) -> Vec<f64> {
        let up = self.upstream();
        let mut out = vec![0.0; bank.len() * (bank.dim() + 2)];
        for (cache, sign, _) in &self.terms {
            let u: Vec<f64> = up.iter().map(|v| sign * v).collect();
            cache.bank_vjp(bank, &u, &mut out);
        }
        out
    }

    /// Gradient of the loss with respect to the generator parameters.
    pub fn param_grad(&self, bank: &PlaneWaveBank) -> Result<Vec<f64>> {
        let up = self.upstream();
        let mut seeds = Vec::new();
        let mut tape = None;
        // Each recorded batch carries its own copy of the parameter leaves.
        let mut leaf_sets = Vec::new();
        for (cache, sign, rec) in &self.terms {
            let Some(rec) = rec else { continue };
            let u: Vec<f64> = up.iter().map(|v| sign * v).collect();
            let (mut xbar, mut gbar) = rec.zeros();
            cache.sample_vjp(bank, &u, &mut xbar, gbar.as_deref_mut());
            rec.seeds(&xbar, gbar.as_deref(), &mut seeds);
            tape = Some(rec.tape);
            if let Some(first) = rec.param_first {
                leaf_sets.push((first, rec.param_len));
            }
        }
        let Some(tape) = tape else {
            return Ok(Vec::new());
        };
        let adj = tape.backward(&seeds)?;
        let mut out = vec![0.0; leaf_sets.first().map_or(0, |s| s.1)];
        for (first, len) in leaf_sets {
            for (o, a) in out.iter_mut().zip(adj.slice(first, len)) {
                *o += a;
            }
        }
        Ok(out)
    }
}

/// Draws for the three time-dependent terms.
#[derive(Debug, Clone, PartialEq)]
pub struct TdBatches {
    /// Generator inputs with `t = T`.
    pub terminal: Vec<Draw>,
    /// Direct draws from the initial law.
    pub initial: Vec<Vec<f64>>,
    /// Generator inputs with `t ~ U(0, T)`.
    pub interior: Vec<Draw>,
}

pub(crate) fn steady_objective<'t>(
    net: &GeneratorNet,
    tape: &'t Tape,
    draws: &[Draw],
    physics: &Physics,
) -> Result<Objective<'t>> {
    physics.check()?;
    if draws.is_empty() {
        return Err(Error::Contract("steady estimator needs at least one draw".into()));
    }
    let with_drift = physics.drift != DriftField::Zero;
    Ok(Objective::Steady {
        samples: Recorded::new(net, tape, draws, physics, with_drift)?,
    })
}

pub(crate) fn td_objective<'t>(
    net: &GeneratorNet,
    tape: &'t Tape,
    horizon: f64,
    batches: &TdBatches,
    physics: &Physics,
) -> Result<Objective<'t>> {
    physics.check()?;
    if batches.terminal.is_empty() || batches.initial.is_empty() || batches.interior.is_empty() {
        return Err(Error::Contract("time-dependent estimator needs non-empty batches".into()));
    }
    let with_drift = physics.drift != DriftField::Zero;
    Ok(Objective::TimeDependent {
        horizon,
        terminal: Recorded::new(net, tape, &batches.terminal, physics, false)?,
        initial_times: vec![0.0; batches.initial.len()],
        initial: batches.initial.clone(),
        interior: Recorded::new(net, tape, &batches.interior, physics, with_drift)?,
    })
}

/// Loss together with its gradients for both players.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub report: ResidualReport,
    /// Generator parameters, flat.
    pub params: Vec<f64>,
    /// Adversary parameters in `w, kappa, phase` order.
    pub bank: Vec<f64>,
}

pub fn loss_steady_grad(net: &GeneratorNet, bank: &PlaneWaveBank, draws: &[Draw], physics: &Physics) -> Result<LossGradient> {
    let tape = Tape::new();
    let obj = steady_objective(net, &tape, draws, physics)?;
    finish_grad(&obj, bank, physics)
}

pub fn loss_td_grad(
    net: &GeneratorNet,
    bank: &PlaneWaveBank,
    horizon: f64,
    batches: &TdBatches,
    physics: &Physics,
) -> Result<LossGradient> {
    let tape = Tape::new();
    let obj = td_objective(net, &tape, horizon, batches, physics)?;
    finish_grad(&obj, bank, physics)
}

fn finish_grad(obj: &Objective<'_>, bank: &PlaneWaveBank, physics: &Physics) -> Result<LossGradient> {
    let ev = obj.evaluate(bank, physics);
    Ok(LossGradient {
        params: ev.param_grad(bank)?,
        bank: ev.bank_grad(bank),
        report: ResidualReport::new(ev.residuals.clone(), obj.batch_sizes()),
    })
}

fn check_k(bank: &PlaneWaveBank, k: usize) -> Result<()> {
    if k >= bank.len() {
        return Err(Error::Contract(format!("test function {k} out of range ({} waves)", bank.len())));
    }
    Ok(())
}

fn forward_all(net: &GeneratorNet, draws: &[Draw]) -> Result<Vec<Vec<f64>>> {
    draws.iter().map(|d| net.forward(d).map(|p| p.0)).collect()
}

/// Steady residuals of a fixed point set (oracle samples or generator output).
pub fn steady_residuals_points(bank: &PlaneWaveBank, points: &[Vec<f64>], physics: &Physics) -> Result<Vec<f64>> {
    physics.check()?;
    if points.is_empty() {
        return Err(Error::Contract("steady estimator needs at least one sample".into()));
    }
    let drifts = physics.projected_drifts(points);
    let times = vec![0.0; points.len()];
    let c = TermCache::new(
        bank,
        physics,
        TermKind::Operator { with_time: false },
        1.0 / points.len() as f64,
        points,
        drifts.as_deref(),
        &times,
    );
    Ok(c.means)
}

pub fn ehat_steady(
    net: &GeneratorNet,
    bank: &PlaneWaveBank,
    k: usize,
    draws: &[Draw],
    physics: &Physics,
) -> Result<f64> {
    check_k(bank, k)?;
    let points = forward_all(net, draws)?;
    Ok(steady_residuals_points(bank, &points, physics)?[k])
}

pub fn loss_steady(net: &GeneratorNet, bank: &PlaneWaveBank, draws: &[Draw], physics: &Physics) -> Result<ResidualReport> {
    let points = forward_all(net, draws)?;
    loss_steady_points(bank, &points, physics)
}

pub fn loss_steady_points(bank: &PlaneWaveBank, points: &[Vec<f64>], physics: &Physics) -> Result<ResidualReport> {
    let r = steady_residuals_points(bank, points, physics)?;
    Ok(ResidualReport::new(r, vec![points.len()]))
}

/// Per-wave steady residual with its Monte Carlo standard error
/// `std(L f_k(x_m)) / sqrt(M)`.
pub fn steady_residuals_with_stderr(
    bank: &PlaneWaveBank,
    points: &[Vec<f64>],
    physics: &Physics,
) -> Result<Vec<(f64, f64)>> {
    physics.check()?;
    let m = points.len();
    if m < 2 {
        return Err(Error::Contract("standard errors need at least two samples".into()));
    }
    let drifts = physics.projected_drifts(points);
    let a = physics.half_sigma2();
    let mut out = Vec::with_capacity(bank.len());
    let mut vals = vec![0.0; m];
    for k in 0..bank.len() {
        let w = bank.w(k);
        for (j, x) in points.iter().enumerate() {
            let phi = dot(w, x) + bank.phase_offset(k);
            let pb = drifts.as_ref().map(|d| d[j].as_slice());
            vals[j] = WaveTerms::new(&physics.geometry, x, pb, w, phi).generator(a, 0.0);
        }
        out.push(mean_and_stderr(&vals));
    }
    Ok(out)
}

pub(crate) fn mean_and_stderr(vals: &[f64]) -> (f64, f64) {
    let m = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / m;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

pub fn ehat_terminal_points(bank: &PlaneWaveBank, k: usize, horizon: f64, points: &[Vec<f64>]) -> Result<f64> {
    check_k(bank, k)?;
    if points.is_empty() {
        return Err(Error::Contract("terminal estimator needs at least one sample".into()));
    }
    let s: f64 = points.iter().map(|y| bank.phase(k, horizon, y).sin()).sum();
    Ok(s / points.len() as f64)
}

pub fn ehat_terminal(net: &GeneratorNet, bank: &PlaneWaveBank, k: usize, horizon: f64, draws: &[Draw]) -> Result<f64> {
    let points: Vec<Vec<f64>> = draws
        .iter()
        .map(|d| net.forward_td(horizon, &d.x0, &d.r).map(|p| p.0))
        .collect::<Result<_>>()?;
    ehat_terminal_points(bank, k, horizon, &points)
}

pub fn ehat_initial(bank: &PlaneWaveBank, k: usize, x0s: &[Vec<f64>]) -> Result<f64> {
    ehat_terminal_points(bank, k, 0.0, x0s)
}

/// `T / M sum_m (d_t + L) f_k(t_m, x_m)` over a fixed set of space-time samples.
pub fn ehat_interior_points(
    bank: &PlaneWaveBank,
    k: usize,
    horizon: f64,
    times: &[f64],
    points: &[Vec<f64>],
    physics: &Physics,
) -> Result<f64> {
    Ok(interior_residuals_points(bank, horizon, times, points, physics)?[k])
}

fn interior_residuals_points(
    bank: &PlaneWaveBank,
    horizon: f64,
    times: &[f64],
    points: &[Vec<f64>],
    physics: &Physics,
) -> Result<Vec<f64>> {
    physics.check()?;
    if points.is_empty() || times.len() != points.len() {
        return Err(Error::Contract("interior estimator needs matching non-empty times and samples".into()));
    }
    let drifts = physics.projected_drifts(points);
    let c = TermCache::new(
        bank,
        physics,
        TermKind::Operator { with_time: true },
        horizon / points.len() as f64,
        points,
        drifts.as_deref(),
        times,
    );
    Ok(c.means)
}

pub fn ehat_interior(
    net: &GeneratorNet,
    bank: &PlaneWaveBank,
    k: usize,
    horizon: f64,
    draws: &[Draw],
    physics: &Physics,
) -> Result<f64> {
    check_k(bank, k)?;
    let points = forward_all(net, draws)?;
    let times: Vec<f64> = draws.iter().map(|d| d.t).collect();
    ehat_interior_points(bank, k, horizon, &times, &points, physics)
}

/// Three-term loss from explicit samples: `terminal` at `T`, `initial` at 0,
/// and interior `(t_m, x_m)` pairs.
pub fn loss_td_points(
    bank: &PlaneWaveBank,
    horizon: f64,
    terminal: &[Vec<f64>],
    initial: &[Vec<f64>],
    interior: (&[f64], &[Vec<f64>]),
    physics: &Physics,
) -> Result<ResidualReport> {
    let interior_r = interior_residuals_points(bank, horizon, interior.0, interior.1, physics)?;
    let r = (0..bank.len())
        .map(|k| {
            Ok(ehat_terminal_points(bank, k, horizon, terminal)? - ehat_initial(bank, k, initial)? - interior_r[k])
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ResidualReport::new(r, vec![terminal.len(), initial.len(), interior.1.len()]))
}

pub fn loss_td(
    net: &GeneratorNet,
    bank: &PlaneWaveBank,
    horizon: f64,
    batches: &TdBatches,
    physics: &Physics,
) -> Result<ResidualReport> {
    let terminal: Vec<Vec<f64>> = batches
        .terminal
        .iter()
        .map(|d| net.forward_td(horizon, &d.x0, &d.r).map(|p| p.0))
        .collect::<Result<_>>()?;
    let interior = forward_all(net, &batches.interior)?;
    let times: Vec<f64> = batches.interior.iter().map(|d| d.t).collect();
    loss_td_points(bank, horizon, &terminal, &batches.initial, (&times, &interior), physics)
}
