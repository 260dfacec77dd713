//! Step rules: MeZO, ZO-AdaMU and ZO-AdaMM driven by two loss evaluations
//! per step, plus first-order Adam and AdaMax references.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Minibatch;
use crate::error::{Error, Result};
use crate::estimators::{projected_gradient_with, GradEstimate};
use crate::objectives::Objective;
use crate::perturb::{mixed_sample, state_bytes, MomentumState, ParamVector, StateFootprint, SCALAR_STATE_BYTES};
use crate::rng::{step_seed, DrawSource, GaussianStream};
use crate::schedule::{schedule_at, AnnealConfig, ScheduleValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Mezo,
    ZoAdamu,
    ZoAdamm,
    Adam,
    #[serde(rename = "adamax")]
    AdaMax,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] = [
        OptimizerKind::Mezo,
        OptimizerKind::ZoAdamu,
        OptimizerKind::ZoAdamm,
        OptimizerKind::Adam,
        OptimizerKind::AdaMax,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Mezo => "mezo",
            OptimizerKind::ZoAdamu => "zo-adamu",
            OptimizerKind::ZoAdamm => "zo-adamm",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdaMax => "adamax",
        }
    }

    /// Uses only loss values (two per step).
    pub fn is_zeroth_order(self) -> bool {
        matches!(self, OptimizerKind::Mezo | OptimizerKind::ZoAdamu | OptimizerKind::ZoAdamm)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "mezo" => Ok(OptimizerKind::Mezo),
            "zo-adamu" | "adamu" => Ok(OptimizerKind::ZoAdamu),
            "zo-adamm" | "adamm" => Ok(OptimizerKind::ZoAdamm),
            "adam" => Ok(OptimizerKind::Adam),
            "adamax" => Ok(OptimizerKind::AdaMax),
            other => Err(Error::config("optimizer", format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Learning rate, constant for the run.
    pub eta: f64,
    /// Perturbation scale.
    pub eps: f64,
    /// Added under the square root of ZO-AdaMU's denominator, and to the
    /// denominators of the Adam-family baselines.
    pub sigma: f64,
    pub batch_size: usize,
    pub anneal: AnnealConfig,
    pub total_steps: u64,
    /// First-moment decay of ZO-AdaMM / Adam / AdaMax.
    pub moment_beta1: f64,
    /// Second-moment decay of ZO-AdaMM / Adam / AdaMax.
    pub moment_beta2: f64,
    /// Spend one extra evaluation per step on the loss at the updated point.
    pub track_loss: bool,
}

impl OptimizerConfig {
    pub const DEFAULT_EPS: f64 = 1e-3;
    pub const DEFAULT_SIGMA: f64 = 1e-8;

    /// Defaults for a run of `total_steps`, with the default schedule budgets.
    pub fn new(eta: f64, total_steps: u64) -> Self {
        let anneal = AnnealConfig::for_total_steps(total_steps);
        Self {
            eta,
            eps: Self::DEFAULT_EPS,
            sigma: Self::DEFAULT_SIGMA,
            batch_size: 1,
            total_steps: anneal.t3,
            anneal,
            moment_beta1: 0.9,
            moment_beta2: 0.999,
            track_loss: false,
        }
    }

    pub fn with_anneal(mut self, anneal: AnnealConfig) -> Self {
        self.anneal = anneal;
        self.total_steps = anneal.t3;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_track_loss(mut self, track: bool) -> Self {
        self.track_loss = track;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("eta", self.eta)?;
        positive("eps", self.eps)?;
        positive("sigma", self.sigma)?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        for (name, b) in [("moment_beta1", self.moment_beta1), ("moment_beta2", self.moment_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(name, format!("must lie in [0, 1), got {b}")));
            }
        }
        if self.total_steps != self.anneal.t3 {
            return Err(Error::config(
                "total_steps",
                format!("must equal t3 = {} (got {})", self.anneal.t3, self.total_steps),
            ));
        }
        self.anneal.validate()
    }
}

/// One row of the per-step trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub loss_plus: f64,
    pub loss_minus: f64,
    /// Projected gradient for zeroth-order kinds; gradient norm for
    /// first-order kinds.
    pub g_scalar: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub loss_at_theta: Option<f64>,
    pub theta_checksum: u64,
}

/// Everything one run mutates.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub theta: ParamVector,
    /// ZO-AdaMU momentum, or the first moment of the Adam-family kinds.
    pub momentum: Option<MomentumState>,
    pub second_moment: Option<Vec<f64>>,
    pub gradient: Option<Vec<f64>>,
    pub t: u64,
    pub seed: u64,
    pub trace: Vec<StepRecord>,
}

impl RunState {
    /// Allocates exactly the buffers `kind` needs.
    pub fn new(kind: OptimizerKind, theta: ParamVector, seed: u64) -> Self {
        let d = theta.dim();
        let (momentum, second_moment, gradient) = match kind {
            OptimizerKind::Mezo => (None, None, None),
            OptimizerKind::ZoAdamu => (Some(MomentumState::zeros(d)), None, None),
            OptimizerKind::ZoAdamm => (Some(MomentumState::zeros(d)), Some(vec![0.0; d]), None),
            OptimizerKind::Adam | OptimizerKind::AdaMax => {
                (Some(MomentumState::zeros(d)), Some(vec![0.0; d]), Some(vec![0.0; d]))
            }
        };
        Self {
            theta,
            momentum,
            second_moment,
            gradient,
            t: 0,
            seed,
            trace: Vec::new(),
        }
    }

    /// Measured persistent state beyond `theta` (the trace is excluded).
    pub fn footprint(&self) -> StateFootprint {
        let array_reals = self.momentum.as_ref().map_or(0, MomentumState::dim)
            + self.second_moment.as_ref().map_or(0, Vec::len)
            + self.gradient.as_ref().map_or(0, Vec::len);
        StateFootprint {
            array_reals,
            scalar_bytes: SCALAR_STATE_BYTES,
        }
    }

    fn momentum_mut(&mut self) -> &mut MomentumState {
        let d = self.theta.dim();
        self.momentum.get_or_insert_with(|| MomentumState::zeros(d))
    }

    fn second_moment_mut(&mut self) -> &mut Vec<f64> {
        let d = self.theta.dim();
        self.second_moment.get_or_insert_with(|| vec![0.0; d])
    }

    fn push_record(&mut self, est: &GradEstimate, sched: ScheduleValues, loss_at_theta: Option<f64>) -> Result<()> {
        if !self.theta.is_finite() {
            return Err(Error::NonFiniteLoss { which: "theta", value: f64::NAN });
        }
        self.t += 1;
        self.trace.push(StepRecord {
            step: self.t,
            loss_plus: est.loss_plus,
            loss_minus: est.loss_minus,
            g_scalar: est.g_scalar,
            alpha: sched.alpha,
            beta1: sched.beta1,
            beta2: sched.beta2,
            loss_at_theta,
            theta_checksum: self.theta.checksum(),
        });
        Ok(())
    }
}

/// Per-step diagnostics: every perturbation applied by the three walk moves
/// and the mixed perturbation regenerated by the update loop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepProbe {
    pub walk: [Vec<f64>; 3],
    pub update: Vec<f64>,
}

impl StepProbe {
    fn reset(&mut self, dim: usize) {
        for call in &mut self.walk {
            call.clear();
            call.resize(dim, f64::NAN);
        }
        self.update.clear();
        self.update.resize(dim, f64::NAN);
    }
}

fn track<L: FnMut(&[f64]) -> Result<f64>>(loss: &mut L, theta: &ParamVector, enabled: bool) -> Result<Option<f64>> {
    if !enabled {
        return Ok(None);
    }
    let v = loss(theta.as_slice())?;
    if v.is_finite() {
        Ok(Some(v))
    } else {
        Err(Error::NonFiniteLoss { which: "loss_at_theta", value: v })
    }
}

/// MeZO over an arbitrary loss callback.
pub fn mezo_step_with<L, S>(state: &mut RunState, mut loss: L, cfg: &OptimizerConfig, draws: &mut S) -> Result<()>
where
    L: FnMut(&[f64]) -> Result<f64>,
    S: DrawSource + ?Sized,
{
    let t = state.t + 1;
    let seed = step_seed(state.seed, t);
    let sched = ScheduleValues::WARMUP;
    let est = projected_gradient_with(&mut loss, &mut state.theta, None, cfg.eps, seed, &sched, draws, |_, _, _| {})?;
    draws.seek(seed, 0);
    let step = cfg.eta * est.g_scalar;
    for theta_i in state.theta.as_mut_slice() {
        let z = mixed_sample(0.0, &sched, draws).mixed;
        *theta_i -= step * z;
    }
    let tracked = track(&mut loss, &state.theta, cfg.track_loss)?;
    state.push_record(&est, sched, tracked)
}

/// `theta <- theta - eta * g * z`, with `z` regenerated from the step seed.
pub fn mezo_step<O, S>(state: &mut RunState, objective: &O, batch: &Minibatch, cfg: &OptimizerConfig, draws: &mut S) -> Result<()>
where
    O: Objective + ?Sized,
    S: DrawSource + ?Sized,
{
    mezo_step_with(state, |p: &[f64]| Ok(objective.evaluate(p, batch)), cfg, draws)
}

/// ZO-AdaMU over an arbitrary loss callback, optionally recording the
/// perturbations into `probe`.
pub fn zo_adamu_step_with<L, S>(
    state: &mut RunState,
    mut loss: L,
    cfg: &OptimizerConfig,
    draws: &mut S,
    mut probe: Option<&mut StepProbe>,
) -> Result<()>
where
    L: FnMut(&[f64]) -> Result<f64>,
    S: DrawSource + ?Sized,
{
    let t = state.t + 1;
    if t > cfg.total_steps {
        return Err(Error::StepOutOfRange { step: t, t3: cfg.total_steps });
    }
    let sched = schedule_at(t, &cfg.anneal)?;
    let seed = step_seed(state.seed, t);
    let dim = state.theta.dim();
    if let Some(p) = probe.as_deref_mut() {
        p.reset(dim);
    }
    state.momentum_mut();
    let RunState { theta, momentum, .. } = state;
    let momentum = momentum.as_mut().expect("allocated above");

    let est = projected_gradient_with(&mut loss, theta, Some(momentum), cfg.eps, seed, &sched, draws, |call, i, z| {
        if let Some(p) = probe.as_deref_mut() {
            p.walk[call][i] = z;
        }
    })?;

    // Regenerate the same draws; each index reads m^(t-1) before writing m^(t).
    draws.seek(seed, 0);
    let g = est.g_scalar;
    for (i, (theta_i, m_i)) in theta.as_mut_slice().iter_mut().zip(momentum.as_mut_slice()).enumerate() {
        let s = mixed_sample(*m_i, &sched, draws);
        let v = sched.beta2 * s.zdot * s.zdot + (1.0 - sched.beta2) * s.zddot * s.zddot;
        *theta_i -= cfg.eta * (g / (v + cfg.sigma).sqrt()) * s.mixed;
        *m_i = s.mixed;
        if let Some(p) = probe.as_deref_mut() {
            p.update[i] = s.mixed;
        }
    }
    let tracked = track(&mut loss, &state.theta, cfg.track_loss)?;
    state.push_record(&est, sched, tracked)
}

/// One ZO-AdaMU step: the three-move walk with momentum-mixed perturbations
/// at `schedule_at(t)`, then the per-parameter momentum and second-moment
/// update `theta_i -= eta * g / sqrt(v_i + sigma) * m_i`.
pub fn zo_adamu_step<O, S>(state: &mut RunState, objective: &O, batch: &Minibatch, cfg: &OptimizerConfig, draws: &mut S) -> Result<()>
where
    O: Objective + ?Sized,
    S: DrawSource + ?Sized,
{
    zo_adamu_step_with(state, |p: &[f64]| Ok(objective.evaluate(p, batch)), cfg, draws, None)
}

fn adam_update(
    theta: &mut [f64],
    first: &mut [f64],
    second: &mut [f64],
    grad: impl Fn(usize) -> f64,
    step: u64,
    cfg: &OptimizerConfig,
) {
    let (b1, b2) = (cfg.moment_beta1, cfg.moment_beta2);
    let c1 = 1.0 - b1.powf(step as f64);
    let c2 = 1.0 - b2.powf(step as f64);
    for i in 0..theta.len() {
        let g = grad(i);
        first[i] = b1 * first[i] + (1.0 - b1) * g;
        second[i] = b2 * second[i] + (1.0 - b2) * g * g;
        let m_hat = first[i] / c1;
        let v_hat = second[i] / c2;
        theta[i] -= cfg.eta * m_hat / (v_hat.sqrt() + cfg.sigma);
    }
}

/// ZO-AdaMM over an arbitrary loss callback.
pub fn zo_adamm_step_with<L, S>(state: &mut RunState, mut loss: L, cfg: &OptimizerConfig, draws: &mut S) -> Result<()>
where
    L: FnMut(&[f64]) -> Result<f64>,
    S: DrawSource + ?Sized,
{
    let t = state.t + 1;
    let seed = step_seed(state.seed, t);
    let sched = ScheduleValues::WARMUP;
    let est = projected_gradient_with(&mut loss, &mut state.theta, None, cfg.eps, seed, &sched, draws, |_, _, _| {})?;
    draws.seek(seed, 0);
    let z: Vec<f64> = (0..state.theta.dim()).map(|_| mixed_sample(0.0, &sched, draws).mixed).collect();
    state.momentum_mut();
    state.second_moment_mut();
    let RunState { theta, momentum, second_moment, .. } = state;
    adam_update(
        theta.as_mut_slice(),
        momentum.as_mut().expect("allocated").as_mut_slice(),
        second_moment.as_mut().expect("allocated"),
        |i| est.g_scalar * z[i],
        t,
        cfg,
    );
    let tracked = track(&mut loss, &state.theta, cfg.track_loss)?;
    state.push_record(&est, sched, tracked)
}

/// Adam moments over the SPSA estimate `g * z` (momentum-free `z`).
pub fn zo_adamm_step<O, S>(state: &mut RunState, objective: &O, batch: &Minibatch, cfg: &OptimizerConfig, draws: &mut S) -> Result<()>
where
    O: Objective + ?Sized,
    S: DrawSource + ?Sized,
{
    zo_adamm_step_with(state, |p: &[f64]| Ok(objective.evaluate(p, batch)), cfg, draws)
}

fn first_order_gradient<O: Objective + ?Sized>(state: &mut RunState, objective: &O, batch: &Minibatch) -> Result<GradEstimate> {
    let grad = objective
        .gradient(state.theta.as_slice(), batch)
        .ok_or_else(|| Error::GradientUnavailable(objective.name().to_string()))?;
    if grad.len() != state.theta.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.theta.dim(),
            actual: grad.len(),
        });
    }
    let loss = objective.evaluate(state.theta.as_slice(), batch);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { which: "loss", value: loss });
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    state.gradient = Some(grad);
    Ok(GradEstimate {
        g_scalar: norm,
        loss_plus: loss,
        loss_minus: loss,
        epsilon: 0.0,
        seed: 0,
    })
}

fn first_order_tracked<O: Objective + ?Sized>(state: &RunState, objective: &O, batch: &Minibatch, cfg: &OptimizerConfig) -> Option<f64> {
    cfg.track_loss.then(|| objective.evaluate(state.theta.as_slice(), batch))
}

/// Standard Adam with bias correction on the analytic gradient.
pub fn adam_step<O: Objective + ?Sized>(state: &mut RunState, objective: &O, batch: &Minibatch, cfg: &OptimizerConfig) -> Result<()> {
    let est = first_order_gradient(state, objective, batch)?;
    let t = state.t + 1;
    state.momentum_mut();
    state.second_moment_mut();
    let RunState { theta, momentum, second_moment, gradient, .. } = state;
    let grad = gradient.as_ref().expect("set by first_order_gradient");
    adam_update(
        theta.as_mut_slice(),
        momentum.as_mut().expect("allocated").as_mut_slice(),
        second_moment.as_mut().expect("allocated"),
        |i| grad[i],
        t,
        cfg,
    );
    let tracked = first_order_tracked(state, objective, batch, cfg);
    state.push_record(&est, ScheduleValues::WARMUP, tracked)
}

/// AdaMax: infinity-norm second moment, `theta -= eta / (1 - b1^t) * m / (u + sigma)`.
pub fn adamax_step<O: Objective + ?Sized>(state: &mut RunState, objective: &O, batch: &Minibatch, cfg: &OptimizerConfig) -> Result<()> {
    let est = first_order_gradient(state, objective, batch)?;
    let t = state.t + 1;
    state.momentum_mut();
    state.second_moment_mut();
    let RunState { theta, momentum, second_moment, gradient, .. } = state;
    let grad = gradient.as_ref().expect("set by first_order_gradient");
    let first = momentum.as_mut().expect("allocated").as_mut_slice();
    let norm = second_moment.as_mut().expect("allocated");
    let (b1, b2) = (cfg.moment_beta1, cfg.moment_beta2);
    let lr = cfg.eta / (1.0 - b1.powf(t as f64));
    for (i, theta_i) in theta.as_mut_slice().iter_mut().enumerate() {
        first[i] = b1 * first[i] + (1.0 - b1) * grad[i];
        norm[i] = (b2 * norm[i]).max(grad[i].abs());
        *theta_i -= lr * first[i] / (norm[i] + cfg.sigma);
    }
    let tracked = first_order_tracked(state, objective, batch, cfg);
    state.push_record(&est, ScheduleValues::WARMUP, tracked)
}

/// A run of one optimizer kind with its own draw source.
#[derive(Debug, Clone)]
pub struct Optimizer<S: DrawSource = GaussianStream> {
    kind: OptimizerKind,
    cfg: OptimizerConfig,
    state: RunState,
    draws: S,
}

impl Optimizer<GaussianStream> {
    pub fn new(kind: OptimizerKind, cfg: OptimizerConfig, theta: ParamVector, seed: u64) -> Result<Self> {
        Self::with_draws(kind, cfg, theta, seed, GaussianStream::new(seed))
    }
}

impl<S: DrawSource> Optimizer<S> {
    pub fn with_draws(kind: OptimizerKind, cfg: OptimizerConfig, theta: ParamVector, seed: u64, draws: S) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            kind,
            cfg,
            state: RunState::new(kind, theta, seed),
            draws,
        })
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &RunState {
        &self.state
    }

    pub fn into_state(self) -> RunState {
        self.state
    }

    pub fn theta(&self) -> &ParamVector {
        &self.state.theta
    }

    pub fn step_count(&self) -> u64 {
        self.state.t
    }

    /// Accounted footprint for this kind and dimension.
    pub fn state_bytes(&self) -> StateFootprint {
        state_bytes(self.kind, self.state.theta.dim())
    }

    fn last(&self) -> &StepRecord {
        self.state.trace.last().expect("a step was just recorded")
    }

    pub fn step<O: Objective + ?Sized>(&mut self, objective: &O, batch: &Minibatch) -> Result<&StepRecord> {
        if objective.dim() != self.state.theta.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.state.theta.dim(),
                actual: objective.dim(),
            });
        }
        let (state, cfg, draws) = (&mut self.state, &self.cfg, &mut self.draws);
        match self.kind {
            OptimizerKind::Mezo => mezo_step(state, objective, batch, cfg, draws)?,
            OptimizerKind::ZoAdamu => zo_adamu_step(state, objective, batch, cfg, draws)?,
            OptimizerKind::ZoAdamm => zo_adamm_step(state, objective, batch, cfg, draws)?,
            OptimizerKind::Adam => adam_step(state, objective, batch, cfg)?,
            OptimizerKind::AdaMax => adamax_step(state, objective, batch, cfg)?,
        }
        Ok(self.last())
    }

    /// Steps a zeroth-order kind against a loss callback over the parameter
    /// slice. The callback runs exactly twice (three times with
    /// `track_loss`), and the parameters are restored if it fails during the
    /// perturbation walk.
    pub fn step_with<L>(&mut self, loss: L) -> Result<&StepRecord>
    where
        L: FnMut(&[f64]) -> Result<f64>,
    {
        let (state, cfg, draws) = (&mut self.state, &self.cfg, &mut self.draws);
        match self.kind {
            OptimizerKind::Mezo => mezo_step_with(state, loss, cfg, draws)?,
            OptimizerKind::ZoAdamu => zo_adamu_step_with(state, loss, cfg, draws, None)?,
            OptimizerKind::ZoAdamm => zo_adamm_step_with(state, loss, cfg, draws)?,
            OptimizerKind::Adam | OptimizerKind::AdaMax => {
                return Err(Error::GradientUnavailable("loss callback".to_string()))
            }
        }
        Ok(self.last())
    }
}
