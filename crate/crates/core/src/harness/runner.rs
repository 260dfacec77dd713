//! Executing repeats of an experiment and writing their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, InitSpec, ObjectiveSpec};
use crate::data::{BatchSampler, Dataset, Minibatch};
use crate::error::{Error, Result};
use crate::objectives::{AccuracyLoss, LogisticLoss, Objective};
use crate::optimizers::{Optimizer, OptimizerKind};
use crate::perturb::{ParamVector, StateFootprint};

/// Trajectory CSVs carry parameter columns only up to this dimension.
pub const MAX_TRACED_DIM: usize = 4;

/// The objective of an experiment together with its data.
pub struct Problem {
    pub objective: Box<dyn Objective>,
    pub train: Option<Dataset>,
    pub test: Option<Dataset>,
    /// Batch the logged loss is measured on.
    eval_batch: Minibatch,
    test_batch: Option<Minibatch>,
}

impl Problem {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let (objective, train, test): (Box<dyn Objective>, _, _) = match cfg.objective {
            ObjectiveSpec::Test(f) => (Box::new(f), None, None),
            ObjectiveSpec::Logistic | ObjectiveSpec::Accuracy => {
                let d = &cfg.data;
                let (train, test) = Dataset::gaussian_mixture_split(d.train_size, d.test_size, d.features, d.separation, d.seed)?;
                let objective: Box<dyn Objective> = if cfg.objective == ObjectiveSpec::Logistic {
                    Box::new(LogisticLoss::new(d.features))
                } else {
                    Box::new(AccuracyLoss::new(d.features))
                };
                (objective, Some(train), Some(test))
            }
        };
        let eval_batch = train.as_ref().map_or_else(Minibatch::placeholder, Dataset::full_batch);
        let test_batch = test.as_ref().map(Dataset::full_batch);
        Ok(Self {
            objective,
            train,
            test,
            eval_batch,
            test_batch,
        })
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        self.objective.evaluate(theta, &self.eval_batch)
    }

    /// Held-out accuracy of the linear classifier `theta`, for the dataset
    /// objectives.
    pub fn held_out_accuracy(&self, theta: &[f64]) -> Option<f64> {
        let batch = self.test_batch.as_ref()?;
        let features = self.train.as_ref()?.features();
        Some(AccuracyLoss::new(features).accuracy(theta, batch))
    }
}

/// Starting point of repeat seed `seed`.
pub fn sample_init(cfg: &ExperimentConfig, objective: &dyn Objective, seed: u64) -> Vec<f64> {
    match &cfg.init {
        InitSpec::Point(p) => p.clone(),
        InitSpec::Sample => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match objective.search_domain() {
                Some(bounds) => bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect(),
                None => {
                    let normal = Normal::new(0.0, cfg.init_scale).expect("init_scale validated");
                    (0..objective.dim()).map(|_| normal.sample(&mut rng)).collect()
                }
            }
        }
    }
}

/// One logged step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub step: u64,
    /// Objective at the updated parameters, on the full training set when
    /// there is one.
    pub loss: f64,
    pub g_scalar: f64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(skip)]
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub optimizer: OptimizerKind,
    pub repeat: usize,
    pub seed: u64,
    pub init: Vec<f64>,
    #[serde(skip)]
    pub rows: Vec<TraceRow>,
    pub steps: u64,
    pub initial_loss: f64,
    /// Loss after the last step, `NaN` when the run failed.
    pub final_loss: f64,
    pub best_loss: f64,
    /// First step whose loss is below the threshold, `-1` if none.
    pub steps_to_threshold: i64,
    pub state_bytes: StateFootprint,
    pub held_out_accuracy: Option<f64>,
    /// Error that stopped the run early.
    pub failure: Option<String>,
}

impl RunResult {
    pub fn succeeded(&self, threshold: f64) -> bool {
        self.failure.is_none() && self.final_loss < threshold
    }

    pub fn csv_name(&self) -> String {
        format!("{}_r{}.csv", self.optimizer.as_str(), self.repeat)
    }

    /// Trajectory with header `step,loss,g_scalar,alpha,beta1,beta2` plus
    /// `theta_i` columns for small dimensions.
    pub fn to_csv(&self) -> String {
        let d = self.init.len();
        let traced = d <= MAX_TRACED_DIM;
        let mut s = String::from("step,loss,g_scalar,alpha,beta1,beta2");
        if traced {
            for i in 0..d {
                let _ = write!(s, ",theta_{i}");
            }
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{},{},{}", r.step, r.loss, r.g_scalar, r.alpha, r.beta1, r.beta2);
            if traced {
                for v in &r.theta {
                    let _ = write!(s, ",{v}");
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs one repeat of one optimizer. Numeric failures end the run and are
/// recorded rather than returned.
pub fn execute_one(cfg: &ExperimentConfig, problem: &Problem, kind: OptimizerKind, repeat: usize) -> Result<RunResult> {
    let seed = cfg.seed.wrapping_add(repeat as u64);
    let init = sample_init(cfg, problem.objective.as_ref(), seed);
    let theta = ParamVector::new(init.clone())?;
    let mut opt = Optimizer::new(kind, cfg.optimizer, theta, seed)?;
    let mut sampler = match &problem.train {
        Some(train) => Some(BatchSampler::new(train.len(), cfg.optimizer.batch_size, seed)?),
        None => None,
    };
    let placeholder = Minibatch::placeholder();
    let traced = init.len() <= MAX_TRACED_DIM;

    let initial_loss = problem.loss(&init);
    let mut best_loss = initial_loss;
    let mut steps_to_threshold = if initial_loss < cfg.threshold { 0 } else { -1 };
    let mut rows = Vec::with_capacity(cfg.optimizer.total_steps as usize);
    let mut failure = None;

    for _ in 0..cfg.optimizer.total_steps {
        let batch = match (&mut sampler, &problem.train) {
            (Some(s), Some(train)) => train.batch(&s.next_indices())?,
            _ => placeholder.clone(),
        };
        let record = match opt.step(problem.objective.as_ref(), &batch) {
            Ok(record) => *record,
            Err(err @ (Error::NonFiniteLoss { .. } | Error::StepOutOfRange { .. })) => {
                failure = Some(err.to_string());
                break;
            }
            Err(err) => return Err(err),
        };
        let theta = opt.theta().as_slice();
        let loss = problem.loss(theta);
        if !loss.is_finite() || !opt.theta().is_finite() {
            failure = Some(Error::NonFiniteLoss { which: "monitor", value: loss }.to_string());
            break;
        }
        best_loss = best_loss.min(loss);
        if steps_to_threshold < 0 && loss < cfg.threshold {
            steps_to_threshold = record.step as i64;
        }
        rows.push(TraceRow {
            step: record.step,
            loss,
            g_scalar: record.g_scalar,
            alpha: record.alpha,
            beta1: record.beta1,
            beta2: record.beta2,
            theta: if traced { theta.to_vec() } else { Vec::new() },
        });
    }

    let final_theta = opt.theta().as_slice();
    let final_loss = if failure.is_some() { f64::NAN } else { rows.last().map_or(initial_loss, |r| r.loss) };
    Ok(RunResult {
        optimizer: kind,
        repeat,
        seed,
        init,
        steps: rows.len() as u64,
        rows,
        initial_loss,
        final_loss,
        best_loss,
        steps_to_threshold,
        state_bytes: opt.state_bytes(),
        held_out_accuracy: if failure.is_some() { None } else { problem.held_out_accuracy(final_theta) },
        failure,
    })
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::config("threads", "must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// All (optimizer, repeat) runs of a validated config, ordered by
/// optimizer then repeat regardless of scheduling.
pub fn execute(cfg: &ExperimentConfig) -> Result<Vec<RunResult>> {
    cfg.validate()?;
    let problem = Problem::build(cfg)?;
    let jobs: Vec<(OptimizerKind, usize)> = cfg
        .optimizers
        .iter()
        .flat_map(|&k| (0..cfg.repeats).map(move |r| (k, r)))
        .collect();
    jobs.par_iter().map(|&(kind, repeat)| execute_one(cfg, &problem, kind, repeat)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Metrics<'a> {
    pub objective: &'static str,
    pub threshold: f64,
    pub runs: &'a [RunResult],
}

/// Writes one trajectory CSV per run, `metrics.json`, and the resolved
/// config as `config.txt`.
pub fn write_artifacts(cfg: &ExperimentConfig, results: &[RunResult], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    for r in results {
        fs::write(dir.join(r.csv_name()), r.to_csv())?;
    }
    let metrics = Metrics {
        objective: cfg.objective.as_str(),
        threshold: cfg.threshold,
        runs: results,
    };
    let json = serde_json::to_string_pretty(&metrics).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(dir.join("metrics.json"), json + "\n")?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn sampled_init_lies_in_the_search_domain() {
        let c = cfg("objective = rosenbrock\noptimizers = mezo\neta = 1e-4\nt3 = 10");
        let p = Problem::build(&c).unwrap();
        for seed in 0..50 {
            let x = sample_init(&c, p.objective.as_ref(), seed);
            assert!(x.iter().all(|v| (-4.5..4.5).contains(v)));
        }
    }

    #[test]
    fn rows_match_steps_and_increase() {
        let c = cfg("objective = c\noptimizers = zo-adamu, mezo\neta = 1e-3\nt3 = 200\nrepeats = 2");
        let results = execute(&c).unwrap();
        assert_eq!(results.len(), 4);
        for r in &results {
            assert_eq!(r.rows.len() as u64, r.steps);
            assert_eq!(r.steps, 200);
            assert!(r.rows.windows(2).all(|w| w[0].step < w[1].step));
        }
        assert_eq!(results[0].init, results[2].init);
        assert_ne!(results[0].init, results[1].init);
    }

    #[test]
    fn csv_has_theta_columns_only_in_low_dimension() {
        let c = cfg("objective = a\noptimizers = mezo\neta = 1e-3\nt3 = 20");
        let csv = execute(&c).unwrap()[0].to_csv();
        assert!(csv.starts_with("step,loss,g_scalar,alpha,beta1,beta2,theta_0,theta_1\n"));
        assert_eq!(csv.lines().count(), 21);

        let c = cfg("objective = logistic\noptimizers = mezo\neta = 1e-3\nt3 = 20\nfeatures = 5\ntrain_size = 40\ntest_size = 40");
        let csv = execute(&c).unwrap()[0].to_csv();
        assert_eq!(csv.lines().next().unwrap(), "step,loss,g_scalar,alpha,beta1,beta2");
    }

    #[test]
    fn divergence_is_recorded() {
        let c = cfg("objective = rosenbrock\noptimizers = mezo\neta = 1e-3\nt3 = 200\ninit = 1e80, 1e80");
        let r = &execute(&c).unwrap()[0];
        assert!(r.failure.is_some());
        assert!(r.final_loss.is_nan());
        assert!(!r.succeeded(c.threshold));
        assert_eq!(r.steps, 0);
    }
}
