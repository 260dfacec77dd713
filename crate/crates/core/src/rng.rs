//! Counter-based Gaussian streams.
//!
//! Every variate is a pure function of `(seed, counter)`: the counter is fed
//! through the Philox4x32-10 bijection keyed by the seed, and the resulting
//! 128 bits become two uniforms for a Box-Muller transform. Exactly one
//! counter increment is consumed per variate, so replaying a perturbation is
//! a matter of resetting the counter.

/// Number of counter increments consumed by one standard-normal draw.
pub const COUNTER_STEP_PER_DRAW: u64 = 1;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;
const PHILOX_ROUNDS: usize = 10;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..PHILOX_ROUNDS {
        if round > 0 {
            k[0] = k[0].wrapping_add(PHILOX_W0);
            k[1] = k[1].wrapping_add(PHILOX_W1);
        }
        let (hi0, lo0) = mulhilo(PHILOX_M0, c[0]);
        let (hi1, lo1) = mulhilo(PHILOX_M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Maps the top 53 bits of `bits` to `(0, 1]`.
#[inline(always)]
fn open_closed_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The standard-normal variate at position `counter` of the stream `seed`.
#[inline]
pub fn standard_normal_at(seed: u64, counter: u64) -> f64 {
    let block = philox4x32(
        [counter as u32, (counter >> 32) as u32, 0, 0],
        [seed as u32, (seed >> 32) as u32],
    );
    let a = u64::from(block[0]) | (u64::from(block[1]) << 32);
    let b = u64::from(block[2]) | (u64::from(block[3]) << 32);
    let radius = (-2.0 * open_closed_unit(a).ln()).sqrt();
    radius * (std::f64::consts::TAU * open_closed_unit(b)).cos()
}

/// A source of standard-normal draws that can be repositioned exactly.
///
/// The perturbation engine and the optimizers are generic over this so tests
/// can pin draws; production code uses [`GaussianStream`].
pub trait DrawSource {
    /// Reposition to `counter` within the sequence keyed by `seed`.
    fn seek(&mut self, seed: u64, counter: u64);
    /// Next N(0, 1) variate.
    fn next_normal(&mut self) -> f64;
}

/// Seekable standard-normal stream keyed by `(seed, counter)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GaussianStream {
    seed: u64,
    counter: u64,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self { seed, counter: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Draws the next variate and advances the counter by
    /// [`COUNTER_STEP_PER_DRAW`].
    pub fn draw_standard_normal(&mut self) -> f64 {
        let z = standard_normal_at(self.seed, self.counter);
        self.counter = self.counter.wrapping_add(COUNTER_STEP_PER_DRAW);
        z
    }

    /// `mean + scale * N(0, 1)` from the same canonical stream.
    pub fn draw_normal(&mut self, mean: f64, scale: f64) -> f64 {
        mean + scale * self.draw_standard_normal()
    }

    pub fn reset(&mut self, counter: u64) {
        self.counter = counter;
    }

    pub fn with_counter(mut self, counter: u64) -> Self {
        self.counter = counter;
        self
    }
}

impl DrawSource for GaussianStream {
    fn seek(&mut self, seed: u64, counter: u64) {
        self.seed = seed;
        self.counter = counter;
    }

    fn next_normal(&mut self) -> f64 {
        self.draw_standard_normal()
    }
}

impl Iterator for GaussianStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        Some(self.draw_standard_normal())
    }
}

/// Replays a fixed list of values cyclically, ignoring the seed.
///
/// Used to reproduce hand-computed examples with pinned perturbations.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnedDraws {
    values: Vec<f64>,
    pos: usize,
}

impl PinnedDraws {
    /// # Panics
    /// If `values` is empty.
    pub fn new(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "pinned draws need at least one value");
        Self { values, pos: 0 }
    }
}

impl DrawSource for PinnedDraws {
    fn seek(&mut self, _seed: u64, counter: u64) {
        self.pos = (counter % self.values.len() as u64) as usize;
    }

    fn next_normal(&mut self) -> f64 {
        let z = self.values[self.pos];
        self.pos = (self.pos + 1) % self.values.len();
        z
    }
}

/// SplitMix64 finalizer; used to derive per-step seeds from a run seed.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for step `step` of a run started from `run_seed`.
pub fn step_seed(run_seed: u64, step: u64) -> u64 {
    mix64(run_seed ^ mix64(step))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn philox_known_answer() {
        // Random123 known-answer vectors for philox4x32-10.
        assert_eq!(
            philox4x32([0, 0, 0, 0], [0, 0]),
            [0x6627_e8d5, 0xe169_c58d, 0xbc57_ac4c, 0x9b00_dbd8]
        );
        assert_eq!(
            philox4x32([0xffff_ffff; 4], [0xffff_ffff; 2]),
            [0x408f_276d, 0x41c8_3b0e, 0xa20b_c7c6, 0x6d54_51fd]
        );
        assert_eq!(
            philox4x32(
                [0x243f_6a88, 0x85a3_08d3, 0x1319_8a2e, 0x0370_7344],
                [0xa409_3822, 0x299f_31d0]
            ),
            [0xd16c_fe09, 0x94fd_cceb, 0x5001_e420, 0x2412_6ea1]
        );
    }

    #[test]
    fn same_seed_same_first_draw() {
        let mut a = GaussianStream::new(42);
        let mut b = GaussianStream::new(42);
        assert_eq!(a.draw_standard_normal().to_bits(), b.draw_standard_normal().to_bits());
    }

    #[test]
    fn neighbouring_seeds_differ() {
        let a: Vec<f64> = GaussianStream::new(42).take(100).collect();
        let b: Vec<f64> = GaussianStream::new(43).take(100).collect();
        assert!(a.iter().zip(&b).any(|(x, y)| x != y));
    }

    #[test]
    fn seed_zero_is_usable() {
        let draws: Vec<f64> = GaussianStream::new(0).take(1000).collect();
        assert!(draws.iter().all(|z| z.is_finite()));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.15);
    }

    #[test]
    fn reset_replays() {
        let mut s = GaussianStream::new(7);
        let first: Vec<f64> = (0..5).map(|_| s.draw_standard_normal()).collect();
        s.reset(0);
        let second: Vec<f64> = (0..5).map(|_| s.draw_standard_normal()).collect();
        assert_eq!(first, second);
    }

    #[test]
    fn reset_indexes_by_counter() {
        let fresh: Vec<f64> = GaussianStream::new(9).take(4).collect();
        let mut s = GaussianStream::new(9);
        s.draw_standard_normal();
        s.reset(3);
        assert_eq!(s.draw_standard_normal(), fresh[3]);
    }

    #[test]
    fn reset_to_current_is_noop() {
        let mut a = GaussianStream::new(11);
        let mut b = GaussianStream::new(11);
        for _ in 0..3 {
            a.draw_standard_normal();
            b.draw_standard_normal();
        }
        let here = a.counter();
        a.reset(here);
        for _ in 0..10 {
            assert_eq!(a.draw_standard_normal(), b.draw_standard_normal());
        }
    }

    #[test]
    fn counter_advances_by_fixed_amount() {
        let mut s = GaussianStream::new(3);
        for k in 1..=50 {
            s.draw_standard_normal();
            assert_eq!(s.counter(), k * COUNTER_STEP_PER_DRAW);
        }
    }

    #[test]
    fn scaled_draw_is_affine_in_canonical_draw() {
        let mut a = GaussianStream::new(5);
        let mut b = GaussianStream::new(5);
        let z = a.draw_standard_normal();
        assert_eq!(b.draw_normal(2.0, 0.5), 2.0 + 0.5 * z);
    }

    #[test]
    fn pinned_draws_cycle_and_seek() {
        let mut p = PinnedDraws::new(vec![1.0, 2.0, 3.0]);
        assert_eq!(p.next_normal(), 1.0);
        assert_eq!(p.next_normal(), 2.0);
        p.seek(99, 0);
        assert_eq!(p.next_normal(), 1.0);
        p.seek(0, 5);
        assert_eq!(p.next_normal(), 3.0);
    }

    #[test]
    fn step_seeds_are_distinct() {
        let seeds: std::collections::HashSet<u64> = (1..1000).map(|t| step_seed(17, t)).collect();
        assert_eq!(seeds.len(), 999);
    }
}
