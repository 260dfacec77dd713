//! Flat parameter storage and the in-place perturbation walk.
//!
//! A perturbation is never stored. Each call to [`perturb`] reseeks the draw
//! source to `(seed, 0)` and regenerates the mixed sample for every index in
//! ascending order, consuming exactly [`DRAWS_PER_INDEX`] variates per index
//! (zero-centred draw first, then momentum-centred draw).

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::OptimizerKind;
use crate::rng::DrawSource;
use crate::schedule::ScheduleValues;

pub const DRAWS_PER_INDEX: u64 = 2;

/// Model parameters as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
}

impl ParamVector {
    /// # Errors
    /// `Config` if `values` is empty or holds a non-finite entry.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("theta", "parameter vector must be non-empty"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config("theta", format!("entry {i} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { values: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Mutable view for the step rules. Callers must keep every entry finite.
    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// FNV-1a over the IEEE bit patterns.
    pub fn checksum(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        self.values.iter().fold(OFFSET, |mut h, v| {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(PRIME);
            }
            h
        })
    }

    /// Little-endian: `u64` dimension header, then `dim` `f64` values.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)?;
        let dim = u64::from_le_bytes(header) as usize;
        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() != dim * 8 {
            return Err(Error::Io(format!(
                "parameter file declares {dim} values but holds {} bytes",
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut buf = Vec::with_capacity(8 + 8 * self.dim());
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(fs::File::open(path)?)
    }
}

impl TryFrom<Vec<f64>> for ParamVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

/// Exponential moving average of past mixed perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumState {
    m: Vec<f64>,
}

impl MomentumState {
    pub fn zeros(dim: usize) -> Self {
        Self { m: vec![0.0; dim] }
    }

    /// Momentum restored from a saved vector.
    pub fn from_vec(m: Vec<f64>) -> Self {
        Self { m }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.m
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.m
    }

    /// Bytes held by the momentum buffer.
    pub fn allocated(&self) -> usize {
        self.m.len() * std::mem::size_of::<f64>()
    }
}

/// One regenerated mixed sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixedSample {
    /// `beta1 * zdot + (1 - beta1) * zddot`
    pub mixed: f64,
    /// Zero-centred component, `sqrt(alpha) * u1`.
    pub zdot: f64,
    /// Momentum-centred component, `m_i + sqrt(1 - alpha) * u2`.
    pub zddot: f64,
}

/// Draws the mixed sample for one index. The source must sit at that
/// index's offset (`2 * i`); it advances by [`DRAWS_PER_INDEX`].
#[inline]
pub fn mixed_sample<S: DrawSource + ?Sized>(m_i: f64, sched: &ScheduleValues, draws: &mut S) -> MixedSample {
    let u1 = draws.next_normal();
    let u2 = draws.next_normal();
    let zdot = sched.alpha.sqrt() * u1;
    let zddot = m_i + (1.0 - sched.alpha).sqrt() * u2;
    MixedSample {
        mixed: sched.beta1 * zdot + (1.0 - sched.beta1) * zddot,
        zdot,
        zddot,
    }
}

fn check_momentum(theta: &ParamVector, momentum: Option<&MomentumState>) -> Result<()> {
    match momentum {
        Some(m) if m.dim() != theta.dim() => Err(Error::DimensionMismatch {
            expected: theta.dim(),
            actual: m.dim(),
        }),
        _ => Ok(()),
    }
}

/// `theta_i += coef * mixed_i` for every index, regenerating the mixed
/// sample from `(seed, 0)`. `None` momentum means a zero mean.
pub fn perturb<S: DrawSource + ?Sized>(
    theta: &mut ParamVector,
    momentum: Option<&MomentumState>,
    coef: f64,
    seed: u64,
    sched: &ScheduleValues,
    draws: &mut S,
) -> Result<()> {
    perturb_observed(theta, momentum, coef, seed, sched, draws, |_, _| {})
}

/// [`perturb`], reporting each applied mixed sample to `observe(i, mixed_i)`.
pub fn perturb_observed<S, F>(
    theta: &mut ParamVector,
    momentum: Option<&MomentumState>,
    coef: f64,
    seed: u64,
    sched: &ScheduleValues,
    draws: &mut S,
    mut observe: F,
) -> Result<()>
where
    S: DrawSource + ?Sized,
    F: FnMut(usize, f64),
{
    check_momentum(theta, momentum)?;
    draws.seek(seed, 0);
    let means = momentum.map(MomentumState::as_slice);
    for (i, theta_i) in theta.as_mut_slice().iter_mut().enumerate() {
        let m_i = means.map_or(0.0, |m| m[i]);
        let sample = mixed_sample(m_i, sched, draws);
        observe(i, sample.mixed);
        *theta_i += coef * sample.mixed;
    }
    Ok(())
}

/// Materializes the mixed perturbation for `(seed, sched, momentum)`.
pub fn mixed_perturbation<S: DrawSource + ?Sized>(
    dim: usize,
    momentum: Option<&MomentumState>,
    seed: u64,
    sched: &ScheduleValues,
    draws: &mut S,
) -> Vec<f64> {
    draws.seek(seed, 0);
    (0..dim)
        .map(|i| mixed_sample(momentum.map_or(0.0, |m| m.as_slice()[i]), sched, draws).mixed)
        .collect()
}

/// Persistent optimizer state beyond the parameters themselves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateFootprint {
    /// `f64` buffers that scale with the dimension.
    pub array_reals: usize,
    /// Fixed-size bookkeeping (seeds, step counter, scalars).
    pub scalar_bytes: usize,
}

impl StateFootprint {
    pub fn total_bytes(&self) -> usize {
        self.array_reals * std::mem::size_of::<f64>() + self.scalar_bytes
    }
}

/// Run seed, step counter, and the last projected gradient.
pub const SCALAR_STATE_BYTES: usize = 3 * 8;

/// Persistent state each optimizer keeps for a `dim`-parameter model.
///
/// ZO-AdaMU's second moment is rebuilt from the regenerated draws every
/// step, so only the momentum buffer persists. Adam additionally
/// materializes the gradient.
pub fn state_bytes(kind: OptimizerKind, dim: usize) -> StateFootprint {
    let array_reals = match kind {
        OptimizerKind::Mezo => 0,
        OptimizerKind::ZoAdamu => dim,
        OptimizerKind::ZoAdamm => 2 * dim,
        OptimizerKind::Adam | OptimizerKind::AdaMax => 3 * dim,
    };
    StateFootprint {
        array_reals,
        scalar_bytes: SCALAR_STATE_BYTES,
    }
}
