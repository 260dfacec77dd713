//! Gradient-free optimization by simultaneous perturbation.
//!
//! The central optimizer, ZO-AdaMU, estimates a directional derivative from
//! two loss evaluations along a perturbation that mixes a zero-centred
//! Gaussian with a Gaussian centred on the momentum of past perturbations.
//! The mixing weights follow an annealing schedule. MeZO and ZO-AdaMM are
//! provided as zeroth-order baselines, Adam and AdaMax as first-order ones.
//!
//! Perturbations are regenerated from a per-step seed rather than stored, so
//! the persistent state of MeZO is a handful of scalars and that of
//! ZO-AdaMU a single momentum vector.

pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod objectives;
pub mod optimizers;
pub mod perturb;
pub mod rng;
pub mod schedule;

pub use data::{BatchSampler, Dataset, Example, Minibatch};
pub use error::{Error, Result};
pub use estimators::{projected_gradient, spsa_gradient, GradEstimate};
pub use objectives::{AccuracyLoss, CountingObjective, LogisticLoss, Objective, TestFunction};
pub use optimizers::{Optimizer, OptimizerConfig, OptimizerKind, RunState, StepProbe, StepRecord};
pub use perturb::{mixed_sample, perturb, state_bytes, MomentumState, ParamVector, StateFootprint};
pub use rng::{DrawSource, GaussianStream, PinnedDraws};
pub use schedule::{anneal, anneal_curve, schedule_at, AnnealConfig, AnnealPreset, Quantity, ScheduleValues};
