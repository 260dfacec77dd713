//! Comparison tables and the schedule grid search.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::runner::{execute_one, Problem, RunResult};
use crate::error::{Error, Result};
use crate::optimizers::OptimizerKind;
use crate::perturb::StateFootprint;

/// Median with `NaN` ordered above every number.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (false, false) => a.total_cmp(b),
    });
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else if v[n / 2].is_nan() {
        f64::NAN
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Summary of the repeats of one optimizer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub optimizer: OptimizerKind,
    pub repeats: usize,
    pub threshold: f64,
    /// Over all repeats; a failed repeat counts as `NaN`, above any loss.
    pub median_final_loss: f64,
    /// Fraction of repeats whose final loss is below the threshold.
    pub success_rate: f64,
    /// Over the repeats that reached the threshold, `-1` if none did.
    pub median_steps_to_threshold: f64,
    pub failures: usize,
    pub state_bytes: StateFootprint,
    /// Median held-out accuracy, for the dataset objectives.
    pub median_held_out_accuracy: Option<f64>,
}

impl ComparisonRow {
    pub fn from_runs(optimizer: OptimizerKind, threshold: f64, runs: &[&RunResult]) -> Self {
        let finals: Vec<f64> = runs.iter().map(|r| r.final_loss).collect();
        let reached: Vec<f64> = runs
            .iter()
            .filter(|r| r.steps_to_threshold >= 0)
            .map(|r| r.steps_to_threshold as f64)
            .collect();
        let successes = runs.iter().filter(|r| r.succeeded(threshold)).count();
        Self {
            optimizer,
            repeats: runs.len(),
            threshold,
            median_final_loss: median(&finals),
            success_rate: successes as f64 / runs.len().max(1) as f64,
            median_steps_to_threshold: if reached.is_empty() { -1.0 } else { median(&reached) },
            failures: runs.iter().filter(|r| r.failure.is_some()).count(),
            state_bytes: runs.first().map(|r| r.state_bytes).unwrap_or_default(),
            median_held_out_accuracy: runs
                .iter()
                .map(|r| r.held_out_accuracy)
                .collect::<Option<Vec<f64>>>()
                .map(|v| median(&v)),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub objective: &'static str,
    pub rows: Vec<ComparisonRow>,
    #[serde(skip)]
    pub runs: Vec<Vec<RunResult>>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("optimizer,repeats,threshold,median_final_loss,success_rate,median_steps_to_threshold,failures,state_array_reals,state_scalar_bytes\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                r.optimizer,
                r.repeats,
                r.threshold,
                r.median_final_loss,
                r.success_rate,
                r.median_steps_to_threshold,
                r.failures,
                r.state_bytes.array_reals,
                r.state_bytes.scalar_bytes
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("comparison.csv"), self.to_csv())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join("comparison.json"), json + "\n")?;
        Ok(())
    }
}

/// Describes how two configs differ in objective or starting points.
fn mismatch(a: &ExperimentConfig, b: &ExperimentConfig) -> Option<String> {
    if a.objective != b.objective {
        return Some(format!("objective {} vs {}", a.objective.as_str(), b.objective.as_str()));
    }
    if a.objective.uses_data() && a.data != b.data {
        return Some("dataset settings differ".to_string());
    }
    if a.init != b.init || a.init_scale != b.init_scale {
        return Some("init differs".to_string());
    }
    if a.seed != b.seed || a.repeats != b.repeats {
        return Some(format!("seeds differ ({}x{} vs {}x{})", a.seed, a.repeats, b.seed, b.repeats));
    }
    None
}

/// Runs every optimizer of every config and tabulates one row per
/// (config, optimizer) in input order. All configs must share the objective,
/// the dataset, the initial points and the repeat seeds.
pub fn compare(configs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = configs.first().ok_or_else(|| Error::config("config", "compare needs at least one config"))?;
    for cfg in configs {
        cfg.validate()?;
        if let Some(why) = mismatch(first, cfg) {
            return Err(Error::MismatchedObjective(why));
        }
    }
    let problem = Problem::build(first)?;
    let jobs: Vec<(usize, OptimizerKind, usize)> = configs
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| cfg.optimizers.iter().flat_map(move |&k| (0..cfg.repeats).map(move |r| (c, k, r))))
        .collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(c, kind, repeat)| execute_one(&configs[c], &problem, kind, repeat))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut rest = results.as_slice();
    for cfg in configs {
        for &kind in &cfg.optimizers {
            let (mine, tail) = rest.split_at(cfg.repeats);
            rest = tail;
            rows.push(ComparisonRow::from_runs(kind, cfg.threshold, &mine.iter().collect::<Vec<_>>()));
            runs.push(mine.to_vec());
        }
    }
    Ok(Comparison {
        objective: first.objective.as_str(),
        rows,
        runs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub t1: u64,
    pub t2: u64,
    pub t3: u64,
    /// `None` for points that ran; the validation error otherwise.
    pub excluded: Option<String>,
    pub summary: Option<ComparisonRow>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub optimizer: OptimizerKind,
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the point with the lowest median final loss.
    pub best: usize,
    /// One line per excluded point.
    pub log: Vec<String>,
}

impl GridReport {
    pub fn best_row(&self) -> &GridRow {
        &self.rows[self.best]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t1,t2,t3,status,median_final_loss,success_rate,median_steps_to_threshold,failures\n");
        for r in &self.rows {
            match (&r.excluded, &r.summary) {
                (None, Some(m)) => {
                    let _ = writeln!(
                        s,
                        "{},{},{},ok,{},{},{},{}",
                        r.t1, r.t2, r.t3, m.median_final_loss, m.success_rate, m.median_steps_to_threshold, m.failures
                    );
                }
                _ => {
                    let _ = writeln!(s, "{},{},{},excluded,,,,", r.t1, r.t2, r.t3);
                }
            }
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("grid.csv"), self.to_csv())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join("grid.json"), json + "\n")?;
        Ok(())
    }
}

/// Evaluates every `(t1, t2, t3)` of the config's grid with the config's
/// repeat seeds. Points failing schedule validation are excluded and logged.
pub fn grid_search(cfg: &ExperimentConfig) -> Result<GridReport> {
    let grid = cfg.grid.clone().ok_or(Error::EmptyGrid)?;
    let kind = *cfg.optimizers.first().ok_or_else(|| Error::config("optimizers", "empty list"))?;
    if cfg.optimizers.len() != 1 {
        return Err(Error::config("optimizers", "grid search takes a single optimizer"));
    }
    let problem = Problem::build(cfg)?;

    let points = grid.points();
    let mut log = Vec::new();
    let mut valid = Vec::new();
    for (i, &(t1, t2, t3)) in points.iter().enumerate() {
        let point = cfg.with_budgets(t1, t2, t3);
        match point.validate() {
            Ok(()) => valid.push((i, point)),
            Err(e) => log.push(format!("excluded t1={t1} t2={t2} t3={t3}: {e}")),
        }
    }
    if valid.is_empty() {
        return Err(Error::EmptyGrid);
    }

    let jobs: Vec<(usize, usize)> = (0..valid.len()).flat_map(|v| (0..cfg.repeats).map(move |r| (v, r))).collect();
    let results: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(v, repeat)| execute_one(&valid[v].1, &problem, kind, repeat))
        .collect::<Result<_>>()?;

    let mut rows: Vec<GridRow> = points
        .iter()
        .map(|&(t1, t2, t3)| GridRow {
            t1,
            t2,
            t3,
            excluded: None,
            summary: None,
        })
        .collect();
    let mut excluded_at: Vec<bool> = vec![true; points.len()];
    for (v, (i, point)) in valid.iter().enumerate() {
        let mine: Vec<&RunResult> = results[v * cfg.repeats..(v + 1) * cfg.repeats].iter().collect();
        rows[*i].summary = Some(ComparisonRow::from_runs(kind, point.threshold, &mine));
        excluded_at[*i] = false;
    }
    let mut messages = log.iter();
    for (row, excluded) in rows.iter_mut().zip(&excluded_at) {
        if *excluded {
            row.excluded = messages.next().cloned();
        }
    }

    let key = |row: &GridRow| row.summary.as_ref().map_or(f64::NAN, |s| s.median_final_loss);
    let mut best = valid[0].0;
    for &(i, _) in &valid {
        let (cand, cur) = (key(&rows[i]), key(&rows[best]));
        if !cand.is_nan() && (cur.is_nan() || cand < cur) {
            best = i;
        }
    }
    Ok(GridReport {
        optimizer: kind,
        rows,
        best,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_orders_nan_last() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[f64::NAN, 1.0, 2.0]), 2.0);
        assert!(median(&[f64::NAN, f64::NAN, 1.0]).is_nan());
        assert!(median(&[]).is_nan());
    }
}
