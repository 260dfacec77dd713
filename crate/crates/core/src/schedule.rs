//! Simulated-annealing schedule for the perturbation uncertainty `alpha` and
//! the smoothing parameters `beta1`, `beta2`.
//!
//! The curve has three phases over the step budget `t3`:
//!
//! * warm-up, `t in [1, t1)`: every quantity is `1`;
//! * annealing, `t in [t1, t2)`:
//!   `0.5 + 0.5 cos(pi (t3 - t1) / (t3 - t phi (t3 - t2) / (t2 - t1)))`;
//! * fixed, `t in [t2, t3]`: a constant chosen by [`AnnealPreset`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of every quantity in the fixed phase under [`AnnealPreset::Uniform`].
pub const UNIFORM_FINAL_VALUE: f64 = 0.9;

/// Which constants the fixed phase `[t2, t3]` uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AnnealPreset {
    /// `0.9` for all three quantities, exactly as the closed-form curve reads.
    Uniform,
    /// `alpha = 0.5`, `beta1 = 0.9`, `beta2 = 0.01`.
    #[default]
    PerQuantity,
}

impl AnnealPreset {
    pub fn final_value(self, quantity: Quantity) -> f64 {
        match (self, quantity) {
            (AnnealPreset::Uniform, _) => UNIFORM_FINAL_VALUE,
            (AnnealPreset::PerQuantity, Quantity::Alpha) => 0.5,
            (AnnealPreset::PerQuantity, Quantity::Beta1) => 0.9,
            (AnnealPreset::PerQuantity, Quantity::Beta2) => 0.01,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnnealPreset::Uniform => "uniform",
            AnnealPreset::PerQuantity => "per-quantity",
        }
    }
}

impl fmt::Display for AnnealPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnealPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(AnnealPreset::Uniform),
            "per-quantity" | "per_quantity" => Ok(AnnealPreset::PerQuantity),
            other => Err(Error::config(
                "preset",
                format!("unknown preset `{other}` (expected `per-quantity` or `uniform`)"),
            )),
        }
    }
}

/// The three annealed quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Alpha,
    Beta1,
    Beta2,
}

/// Step budgets and per-quantity curvature of the annealing schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
    pub phi_alpha: f64,
    pub phi_beta1: f64,
    pub phi_beta2: f64,
    pub preset: AnnealPreset,
}

impl AnnealConfig {
    pub const DEFAULT_PHI_ALPHA: f64 = 1.0;
    pub const DEFAULT_PHI_BETA1: f64 = 0.1;
    pub const DEFAULT_PHI_BETA2: f64 = 1.5;

    /// Budgets with the default curvatures and preset. Not validated.
    pub fn new(t1: u64, t2: u64, t3: u64) -> Self {
        Self {
            t1,
            t2,
            t3,
            phi_alpha: Self::DEFAULT_PHI_ALPHA,
            phi_beta1: Self::DEFAULT_PHI_BETA1,
            phi_beta2: Self::DEFAULT_PHI_BETA2,
            preset: AnnealPreset::default(),
        }
    }

    /// Default budgets for a run of `total` steps: `t1 = 10%`, `t2 = 50%`.
    pub fn for_total_steps(total: u64) -> Self {
        let t1 = (total / 10).max(1);
        let t2 = (total / 2).max(t1 + 1);
        Self::new(t1, t2, total.max(t2 + 1))
    }

    pub fn with_preset(mut self, preset: AnnealPreset) -> Self {
        self.preset = preset;
        self
    }

    pub fn with_phis(mut self, alpha: f64, beta1: f64, beta2: f64) -> Self {
        self.phi_alpha = alpha;
        self.phi_beta1 = beta1;
        self.phi_beta2 = beta2;
        self
    }

    pub fn phi(&self, quantity: Quantity) -> f64 {
        match quantity {
            Quantity::Alpha => self.phi_alpha,
            Quantity::Beta1 => self.phi_beta1,
            Quantity::Beta2 => self.phi_beta2,
        }
    }

    /// Checks the budget ordering, the curvatures, and that no cosine
    /// denominator reaches zero anywhere in `[t1, t2)`.
    pub fn validate(&self) -> Result<()> {
        if self.t1 < 1 {
            return Err(Error::InvalidSchedule(format!("t1 = {} must be >= 1", self.t1)));
        }
        if self.t1 >= self.t2 {
            return Err(Error::InvalidSchedule(format!("t1 = {} must be < t2 = {}", self.t1, self.t2)));
        }
        if self.t2 >= self.t3 {
            return Err(Error::InvalidSchedule(format!("t2 = {} must be < t3 = {}", self.t2, self.t3)));
        }
        if self.t3 > MAX_EXACT_BUDGET {
            return Err(Error::InvalidSchedule(format!("t3 = {} exceeds {MAX_EXACT_BUDGET}", self.t3)));
        }
        for (name, phi) in [
            ("phi_alpha", self.phi_alpha),
            ("phi_beta1", self.phi_beta1),
            ("phi_beta2", self.phi_beta2),
        ] {
            if !(phi.is_finite() && phi > 0.0) {
                return Err(Error::InvalidSchedule(format!("{name} = {phi} must be finite and > 0")));
            }
            // The denominator decreases in t, so the last annealing step is the worst.
            let last = self.t2 - 1;
            let denominator = cosine_denominator(last, phi, self).hi;
            if denominator <= 0.0 {
                return Err(Error::DegenerateSchedule { step: last, phi, denominator });
            }
        }
        Ok(())
    }
}

/// Largest budget for which all integer products stay exact in an `f64`.
pub const MAX_EXACT_BUDGET: u64 = 1 << 26;

/// Annealed values at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleValues {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl ScheduleValues {
    /// The warm-up values; also what a momentum-free perturbation uses.
    pub const WARMUP: ScheduleValues = ScheduleValues { alpha: 1.0, beta1: 1.0, beta2: 1.0 };

    pub fn new(alpha: f64, beta1: f64, beta2: f64) -> Self {
        Self { alpha, beta1, beta2 }
    }

    pub fn is_valid(&self) -> bool {
        [self.alpha, self.beta1, self.beta2]
            .iter()
            .all(|v| (0.0..=1.0).contains(v))
    }
}

/// Error-free `a + b = s + e`.
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn renormalize(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Self { hi, lo }
    }
}

/// `t3 (t2 - t1) - t phi (t3 - t2)`, i.e. the cosine denominator scaled by
/// `t2 - t1`, carried to roughly 106 bits.
fn cosine_denominator(t: u64, phi: f64, cfg: &AnnealConfig) -> DoubleDouble {
    let scaled_t3 = (cfg.t3 * (cfg.t2 - cfg.t1)) as f64;
    let k = (t * (cfg.t3 - cfg.t2)) as f64;
    let p_hi = phi * k;
    let p_lo = phi.mul_add(k, -p_hi);
    let (s, e) = two_sum(scaled_t3, -p_hi);
    DoubleDouble::renormalize(s, e - p_lo)
}

/// `cos(pi * num / den)` with the quotient reduced modulo 2 in double-double,
/// so large arguments do not lose the fractional part.
fn cos_pi_quotient(num: f64, den: DoubleDouble) -> f64 {
    let q_hi = num / den.hi;
    let residual = (-q_hi).mul_add(den.hi, num) - q_hi * den.lo;
    let q_lo = residual / den.hi;
    let whole = 2.0 * (q_hi * 0.5).floor();
    let (x_hi, x_lo) = {
        let reduced = q_hi - whole;
        two_sum(reduced, q_lo)
    };
    let angle = PI * x_hi;
    angle.cos() - PI * x_lo * angle.sin()
}

/// The annealing curve with curvature `phi` and a fixed-phase value of
/// [`UNIFORM_FINAL_VALUE`].
///
/// Fails with `DegenerateSchedule` only when the denominator at this `t` is
/// not positive; use [`AnnealConfig::validate`] to check a whole run.
pub fn anneal_curve(t: u64, phi: f64, cfg: &AnnealConfig) -> Result<f64> {
    anneal_with_final(t, phi, UNIFORM_FINAL_VALUE, cfg)
}

/// One annealed quantity at step `t`, with the preset's fixed-phase value.
pub fn anneal(t: u64, quantity: Quantity, cfg: &AnnealConfig) -> Result<f64> {
    anneal_with_final(t, cfg.phi(quantity), cfg.preset.final_value(quantity), cfg)
}

fn anneal_with_final(t: u64, phi: f64, final_value: f64, cfg: &AnnealConfig) -> Result<f64> {
    if t < 1 || t > cfg.t3 {
        return Err(Error::StepOutOfRange { step: t, t3: cfg.t3 });
    }
    if t < cfg.t1 {
        return Ok(1.0);
    }
    if t >= cfg.t2 {
        return Ok(final_value);
    }
    let den = cosine_denominator(t, phi, cfg);
    if den.hi.is_nan() || den.hi <= 0.0 {
        return Err(Error::DegenerateSchedule { step: t, phi, denominator: den.hi });
    }
    let num = ((cfg.t3 - cfg.t1) * (cfg.t2 - cfg.t1)) as f64;
    let value = 0.5 + 0.5 * cos_pi_quotient(num, den);
    Ok(value.clamp(0.0, 1.0))
}

/// `(alpha, beta1, beta2)` at step `t`.
pub fn schedule_at(t: u64, cfg: &AnnealConfig) -> Result<ScheduleValues> {
    Ok(ScheduleValues {
        alpha: anneal(t, Quantity::Alpha, cfg)?,
        beta1: anneal(t, Quantity::Beta1, cfg)?,
        beta2: anneal(t, Quantity::Beta2, cfg)?,
    })
}
