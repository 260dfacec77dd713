//! Black-box losses: the 2-D optimization test functions and toy
//! classification objectives.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::Minibatch;
use crate::error::{Error, Result};

/// Loss evaluated at a parameter vector on a minibatch.
///
/// `evaluate` must be deterministic for a fixed `(theta, batch)`. The
/// analytic gradient is only used by first-order baselines and validation.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn evaluate(&self, theta: &[f64], batch: &Minibatch) -> f64;

    fn gradient(&self, _theta: &[f64], _batch: &Minibatch) -> Option<Vec<f64>> {
        None
    }

    /// Per-coordinate `(low, high)` bounds; advisory only.
    fn search_domain(&self) -> Option<Vec<(f64, f64)>> {
        None
    }
}

/// The six 2-D test functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestFunction {
    /// `|x| + |y|`
    A,
    /// `|x + y| + |x - y| / 10`
    B,
    /// `(x + y)^2 + (x - y)^2 / 10`
    C,
    /// `|x| / 10 + |y|`
    D,
    Beale,
    /// `100 (x - y^2)^2 + (1 - y)^2`, minimum at `(1, 1)`.
    Rosenbrock,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl TestFunction {
    pub const ALL: [TestFunction; 6] = [
        TestFunction::A,
        TestFunction::B,
        TestFunction::C,
        TestFunction::D,
        TestFunction::Beale,
        TestFunction::Rosenbrock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestFunction::A => "a",
            TestFunction::B => "b",
            TestFunction::C => "c",
            TestFunction::D => "d",
            TestFunction::Beale => "beale",
            TestFunction::Rosenbrock => "rosenbrock",
        }
    }

    pub fn value(self, x: f64, y: f64) -> f64 {
        match self {
            TestFunction::A => x.abs() + y.abs(),
            TestFunction::B => (x + y).abs() + (x - y).abs() / 10.0,
            TestFunction::C => (x + y).powi(2) + (x - y).powi(2) / 10.0,
            TestFunction::D => x.abs() / 10.0 + y.abs(),
            TestFunction::Beale => {
                (1.5 - x + x * y).powi(2) + (2.25 - x + x * y * y).powi(2) + (2.625 - x + x * y.powi(3)).powi(2)
            }
            TestFunction::Rosenbrock => 100.0 * (x - y * y).powi(2) + (1.0 - y).powi(2),
        }
    }

    /// Analytic (sub)gradient; `sign(0) = 0` at kinks.
    pub fn grad(self, x: f64, y: f64) -> [f64; 2] {
        match self {
            TestFunction::A => [sign(x), sign(y)],
            TestFunction::B => {
                let s = sign(x + y);
                let d = sign(x - y) / 10.0;
                [s + d, s - d]
            }
            TestFunction::C => {
                let s = 2.0 * (x + y);
                let d = 2.0 * (x - y) / 10.0;
                [s + d, s - d]
            }
            TestFunction::D => [sign(x) / 10.0, sign(y)],
            TestFunction::Beale => {
                let r1 = 1.5 - x + x * y;
                let r2 = 2.25 - x + x * y * y;
                let r3 = 2.625 - x + x * y.powi(3);
                [
                    2.0 * (r1 * (y - 1.0) + r2 * (y * y - 1.0) + r3 * (y.powi(3) - 1.0)),
                    2.0 * (r1 * x + r2 * 2.0 * x * y + r3 * 3.0 * x * y * y),
                ]
            }
            TestFunction::Rosenbrock => {
                let r = x - y * y;
                [200.0 * r, -400.0 * r * y - 2.0 * (1.0 - y)]
            }
        }
    }

    pub fn global_minimum(self) -> ([f64; 2], f64) {
        match self {
            TestFunction::Beale => ([3.0, 0.5], 0.0),
            TestFunction::Rosenbrock => ([1.0, 1.0], 0.0),
            _ => ([0.0, 0.0], 0.0),
        }
    }

    pub fn bounds(self) -> (f64, f64) {
        match self {
            TestFunction::Beale | TestFunction::Rosenbrock => (-4.5, 4.5),
            _ => (-3.0, 3.0),
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(TestFunction::A),
            "b" => Ok(TestFunction::B),
            "c" => Ok(TestFunction::C),
            "d" => Ok(TestFunction::D),
            "beale" => Ok(TestFunction::Beale),
            "rosenbrock" => Ok(TestFunction::Rosenbrock),
            other => Err(Error::config("objective", format!("unknown test function `{other}`"))),
        }
    }
}

impl Objective for TestFunction {
    fn name(&self) -> &str {
        self.as_str()
    }

    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, theta: &[f64], _batch: &Minibatch) -> f64 {
        self.value(theta[0], theta[1])
    }

    fn gradient(&self, theta: &[f64], _batch: &Minibatch) -> Option<Vec<f64>> {
        Some(self.grad(theta[0], theta[1]).to_vec())
    }

    fn search_domain(&self) -> Option<Vec<(f64, f64)>> {
        Some(vec![self.bounds(); 2])
    }
}

/// Returns the named test function.
pub fn test_function(name: TestFunction) -> TestFunction {
    name
}

/// Linear score `w . x + b`; the bias is the last parameter.
fn score(theta: &[f64], features: &[f64]) -> f64 {
    let (w, b) = theta.split_at(features.len());
    w.iter().zip(features).map(|(w, x)| w * x).sum::<f64>() + b[0]
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean negative log-likelihood of a linear binary classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogisticLoss {
    features: usize,
}

impl LogisticLoss {
    pub fn new(features: usize) -> Self {
        Self { features }
    }
}

impl Objective for LogisticLoss {
    fn name(&self) -> &str {
        "logistic"
    }

    fn dim(&self) -> usize {
        self.features + 1
    }

    fn evaluate(&self, theta: &[f64], batch: &Minibatch) -> f64 {
        let total: f64 = batch
            .examples()
            .iter()
            .map(|e| {
                let y = if e.label == 1 { 1.0 } else { -1.0 };
                softplus(-y * score(theta, &e.features))
            })
            .sum();
        total / batch.size() as f64
    }

    fn gradient(&self, theta: &[f64], batch: &Minibatch) -> Option<Vec<f64>> {
        let mut grad = vec![0.0; self.dim()];
        let scale = 1.0 / batch.size() as f64;
        for e in batch.examples() {
            let y = if e.label == 1 { 1.0 } else { -1.0 };
            let coef = -y * sigmoid(-y * score(theta, &e.features)) * scale;
            for (g, x) in grad.iter_mut().zip(&e.features) {
                *g += coef * x;
            }
            grad[self.features] += coef;
        }
        Some(grad)
    }
}

/// `1 - accuracy` of a linear classifier predicting class 1 when the score
/// is positive. Piecewise constant, no gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccuracyLoss {
    features: usize,
}

impl AccuracyLoss {
    pub fn new(features: usize) -> Self {
        Self { features }
    }

    pub fn accuracy(&self, theta: &[f64], batch: &Minibatch) -> f64 {
        1.0 - self.evaluate(theta, batch)
    }
}

impl Objective for AccuracyLoss {
    fn name(&self) -> &str {
        "accuracy"
    }

    fn dim(&self) -> usize {
        self.features + 1
    }

    fn evaluate(&self, theta: &[f64], batch: &Minibatch) -> f64 {
        let wrong = batch
            .examples()
            .iter()
            .filter(|e| (score(theta, &e.features) > 0.0) != (e.label == 1))
            .count();
        wrong as f64 / batch.size() as f64
    }
}

/// Counts calls to `evaluate`.
#[derive(Debug)]
pub struct CountingObjective<O> {
    inner: O,
    evaluations: AtomicUsize,
}

impl<O: Objective> CountingObjective<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            evaluations: AtomicUsize::new(0),
        }
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Objective> Objective for CountingObjective<O> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn evaluate(&self, theta: &[f64], batch: &Minibatch) -> f64 {
        self.evaluations.fetch_add(1, Ordering::Relaxed);
        self.inner.evaluate(theta, batch)
    }

    fn gradient(&self, theta: &[f64], batch: &Minibatch) -> Option<Vec<f64>> {
        self.inner.gradient(theta, batch)
    }

    fn search_domain(&self) -> Option<Vec<(f64, f64)>> {
        self.inner.search_domain()
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&self, theta: &[f64], batch: &Minibatch) -> f64 {
        (**self).evaluate(theta, batch)
    }

    fn gradient(&self, theta: &[f64], batch: &Minibatch) -> Option<Vec<f64>> {
        (**self).gradient(theta, batch)
    }

    fn search_domain(&self) -> Option<Vec<(f64, f64)>> {
        (**self).search_domain()
    }
}

impl<O: Objective + ?Sized> Objective for Box<O> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&self, theta: &[f64], batch: &Minibatch) -> f64 {
        (**self).evaluate(theta, batch)
    }

    fn gradient(&self, theta: &[f64], batch: &Minibatch) -> Option<Vec<f64>> {
        (**self).gradient(theta, batch)
    }

    fn search_domain(&self) -> Option<Vec<(f64, f64)>> {
        (**self).search_domain()
    }
}
