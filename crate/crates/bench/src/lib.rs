//! Fixtures shared by the benchmarks.

use zo_adamu::{Minibatch, Objective};

/// `sum(theta_i^2)`, cheap enough that the optimizer dominates the timing.
pub struct Sphere(pub usize);

impl Objective for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn dim(&self) -> usize {
        self.0
    }

    fn evaluate(&self, theta: &[f64], _batch: &Minibatch) -> f64 {
        theta.iter().map(|v| v * v).sum()
    }

    fn gradient(&self, theta: &[f64], _batch: &Minibatch) -> Option<Vec<f64>> {
        Some(theta.iter().map(|v| 2.0 * v).collect())
    }
}
