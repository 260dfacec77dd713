//! Labelled examples, minibatches, synthetic datasets and batch sampling.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub label: u8,
}

/// A non-empty set of examples evaluated together.
#[derive(Debug, Clone, PartialEq)]
pub struct Minibatch {
    examples: Vec<Example>,
}

impl Minibatch {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::config("batch_size", "minibatch must hold at least one example"));
        }
        Ok(Self { examples })
    }

    /// A single empty example, for objectives that ignore data.
    pub fn placeholder() -> Self {
        Self {
            examples: vec![Example { features: Vec::new(), label: 0 }],
        }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn size(&self) -> usize {
        self.examples.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    examples: Vec<Example>,
    features: usize,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        let features = examples.first().map(|e| e.features.len()).ok_or_else(|| Error::config("dataset", "dataset is empty"))?;
        if examples.iter().any(|e| e.features.len() != features) {
            return Err(Error::config("dataset", "examples have differing feature counts"));
        }
        if examples.iter().any(|e| e.label > 1) {
            return Err(Error::config("dataset", "labels must be 0 or 1"));
        }
        Ok(Self { examples, features })
    }

    /// Balanced two-class Gaussian mixture: class means at `+/- separation / 2`
    /// along a seeded random unit direction, identity covariance.
    pub fn gaussian_mixture(n: usize, features: usize, separation: f64, seed: u64) -> Result<Self> {
        let direction = mixture_direction(n, features, seed)?;
        // Examples come from a separate stream so that splits sharing `seed`
        // for the direction can differ in their samples.
        Self::gaussian_mixture_along(&direction, n, separation, seed.wrapping_add(0x5EED))
    }

    /// Train and held-out sets drawn from the same mixture. The training set
    /// equals `gaussian_mixture(n_train, features, separation, seed)`.
    pub fn gaussian_mixture_split(
        n_train: usize,
        n_test: usize,
        features: usize,
        separation: f64,
        seed: u64,
    ) -> Result<(Self, Self)> {
        let direction = mixture_direction(n_train.min(n_test), features, seed)?;
        let train = Self::gaussian_mixture_along(&direction, n_train, separation, seed.wrapping_add(0x5EED))?;
        let test = Self::gaussian_mixture_along(&direction, n_test, separation, seed.wrapping_add(0x5EEE))?;
        Ok((train, test))
    }

    /// Like [`Dataset::gaussian_mixture`] with an explicit class direction.
    pub fn gaussian_mixture_along(direction: &[f64], n: usize, separation: f64, sample_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        let examples = (0..n)
            .map(|k| {
                let label = (k % 2) as u8;
                let sign = if label == 1 { 1.0 } else { -1.0 };
                let features = direction
                    .iter()
                    .map(|d| sign * 0.5 * separation * d + { let noise: f64 = StandardNormal.sample(&mut rng); noise })
                    .collect();
                Example { features, label }
            })
            .collect();
        Self::new(examples)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Minibatch> {
        Minibatch::new(indices.iter().map(|&i| self.examples[i].clone()).collect())
    }

    pub fn full_batch(&self) -> Minibatch {
        Minibatch { examples: self.examples.clone() }
    }

    /// One example per line: `label,x_1,...,x_n`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&e.label.to_string());
            for x in &e.features {
                let _ = write!(out, ",{x}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut examples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |what: &str| Error::config("dataset", format!("line {}: {what}", lineno + 1));
            let mut fields = line.split(',');
            let label = fields
                .next()
                .and_then(|l| l.trim().parse::<u8>().ok())
                .ok_or_else(|| bad("bad label"))?;
            let features = fields
                .map(|f| f.trim().parse::<f64>().map_err(|_| bad("bad feature value")))
                .collect::<Result<Vec<_>>>()?;
            examples.push(Example { features, label });
        }
        Self::new(examples)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

fn mixture_direction(n: usize, features: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 2 || features == 0 {
        return Err(Error::config("dataset", "need at least 2 examples and 1 feature"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction: Vec<f64> = (0..features).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect();
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    direction.iter_mut().for_each(|v| *v /= norm);
    Ok(direction)
}

/// Seeded sampling without replacement within each epoch.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    len: usize,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(len: usize, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || batch_size > len {
            return Err(Error::config("batch_size", format!("must be in [1, {len}]")));
        }
        let mut sampler = Self {
            len,
            batch_size,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        sampler.shuffle();
        Ok(sampler)
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.order = (0..self.len).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Next batch of indices. A trailing partial batch is dropped and a new
    /// epoch starts.
    pub fn next_indices(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.len {
            self.epoch += 1;
            self.shuffle();
        }
        let out = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        out
    }
}
