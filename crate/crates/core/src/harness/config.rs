//! Flat `key = value` experiment configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Lists are comma separated. Unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::objectives::TestFunction;
use crate::optimizers::{OptimizerConfig, OptimizerKind};
use crate::schedule::{AnnealConfig, AnnealPreset};

/// Which loss an experiment optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveSpec {
    Test(TestFunction),
    /// Logistic regression on a synthetic Gaussian mixture.
    Logistic,
    /// `1 - accuracy` of a linear classifier on a synthetic Gaussian mixture.
    Accuracy,
}

impl ObjectiveSpec {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveSpec::Test(f) => f.as_str(),
            ObjectiveSpec::Logistic => "logistic",
            ObjectiveSpec::Accuracy => "accuracy",
        }
    }

    pub fn uses_data(self) -> bool {
        !matches!(self, ObjectiveSpec::Test(_))
    }
}

impl FromStr for ObjectiveSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Ok(ObjectiveSpec::Logistic),
            "accuracy" => Ok(ObjectiveSpec::Accuracy),
            other => other
                .parse::<TestFunction>()
                .map(ObjectiveSpec::Test)
                .map_err(|_| Error::config("objective", format!("unknown objective `{other}`"))),
        }
    }
}

/// Synthetic dataset for the classification objectives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataSpec {
    pub features: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub separation: f64,
    pub seed: u64,
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            features: 10,
            train_size: 1000,
            test_size: 1000,
            separation: 4.0,
            seed: 0,
        }
    }
}

/// Starting point of every repeat.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// Drawn per repeat from the repeat seed: uniform over the search domain
    /// when the objective has one, `N(0, init_scale^2)` otherwise.
    Sample,
    Point(Vec<f64>),
}

/// Schedule budgets to sweep in a grid search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub t1: Vec<u64>,
    pub t2: Vec<u64>,
    pub t3: Vec<u64>,
}

impl GridSpec {
    pub fn len(&self) -> usize {
        self.t1.len() * self.t2.len() * self.t3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Points in `t1`-major order.
    pub fn points(&self) -> Vec<(u64, u64, u64)> {
        let mut out = Vec::with_capacity(self.len());
        for &t1 in &self.t1 {
            for &t2 in &self.t2 {
                for &t3 in &self.t3 {
                    out.push((t1, t2, t3));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub optimizers: Vec<OptimizerKind>,
    pub optimizer: OptimizerConfig,
    pub data: DataSpec,
    pub init: InitSpec,
    pub init_scale: f64,
    /// Repeat `k` runs with seed `seed + k`.
    pub seed: u64,
    pub repeats: usize,
    /// A run succeeds when its final loss is below this.
    pub threshold: f64,
    pub out: Option<PathBuf>,
    pub grid: Option<GridSpec>,
}

const KEYS: &[&str] = &[
    "objective",
    "optimizers",
    "eta",
    "eps",
    "sigma",
    "batch_size",
    "t1",
    "t2",
    "t3",
    "preset",
    "phi_alpha",
    "phi_beta1",
    "phi_beta2",
    "moment_beta1",
    "moment_beta2",
    "init",
    "init_scale",
    "seed",
    "repeats",
    "threshold",
    "out",
    "features",
    "train_size",
    "test_size",
    "separation",
    "data_seed",
    "grid_t1",
    "grid_t2",
    "grid_t3",
];

fn parse_value<T: FromStr>(field: &str, raw: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{}`", raw.trim())))
}

fn parse_list<T: FromStr>(field: &str, raw: &str) -> Result<Vec<T>> {
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::config(field, "empty list"));
    }
    items.into_iter().map(|s| parse_value(field, s)).collect()
}

struct Entries(BTreeMap<String, String>);

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        self.take(key).map(|raw| parse_value(key, &raw)).transpose()
    }

    fn get_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::config(key, "missing required key"))
    }
}

impl ExperimentConfig {
    /// Parses and validates a config text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                ));
            };
            let key = key.trim().to_ascii_lowercase();
            let key = if key == "optimizer" { "optimizers".to_string() } else { key };
            if !KEYS.contains(&key.as_str()) {
                return Err(Error::config(key, "unknown key"));
            }
            if map.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(Error::config(key, "given more than once"));
            }
        }
        let cfg = Self::from_entries(Entries(map))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn from_entries(mut e: Entries) -> Result<Self> {
        let objective: ObjectiveSpec = e.require("objective")?;
        let optimizers = match e.take("optimizers") {
            Some(raw) => parse_list::<OptimizerKind>("optimizers", &raw)?,
            None => return Err(Error::config("optimizers", "missing required key")),
        };
        let eta: f64 = e.require("eta")?;
        let t3: u64 = e.require("t3")?;
        let defaults = AnnealConfig::for_total_steps(t3);
        let mut anneal = AnnealConfig::new(e.get_or("t1", defaults.t1)?, e.get_or("t2", defaults.t2)?, t3)
            .with_preset(e.get_or("preset", AnnealPreset::default())?);
        anneal.phi_alpha = e.get_or("phi_alpha", anneal.phi_alpha)?;
        anneal.phi_beta1 = e.get_or("phi_beta1", anneal.phi_beta1)?;
        anneal.phi_beta2 = e.get_or("phi_beta2", anneal.phi_beta2)?;

        let mut optimizer = OptimizerConfig::new(eta, t3).with_anneal(anneal);
        optimizer.eps = e.get_or("eps", optimizer.eps)?;
        optimizer.sigma = e.get_or("sigma", optimizer.sigma)?;
        optimizer.batch_size = e.get_or("batch_size", optimizer.batch_size)?;
        optimizer.moment_beta1 = e.get_or("moment_beta1", optimizer.moment_beta1)?;
        optimizer.moment_beta2 = e.get_or("moment_beta2", optimizer.moment_beta2)?;

        let base = DataSpec::default();
        let data = DataSpec {
            features: e.get_or("features", base.features)?,
            train_size: e.get_or("train_size", base.train_size)?,
            test_size: e.get_or("test_size", base.test_size)?,
            separation: e.get_or("separation", base.separation)?,
            seed: e.get_or("data_seed", base.seed)?,
        };

        let init = match e.take("init") {
            None => InitSpec::Sample,
            Some(raw) if raw.trim().eq_ignore_ascii_case("sample") => InitSpec::Sample,
            Some(raw) => InitSpec::Point(parse_list("init", &raw)?),
        };

        let grid_keys = [e.take("grid_t1"), e.take("grid_t2"), e.take("grid_t3")];
        let grid = if grid_keys.iter().all(Option::is_none) {
            None
        } else {
            let list = |key: &str, raw: &Option<String>, fallback: u64| match raw {
                Some(raw) => parse_list::<u64>(key, raw),
                None => Ok(vec![fallback]),
            };
            Some(GridSpec {
                t1: list("grid_t1", &grid_keys[0], anneal.t1)?,
                t2: list("grid_t2", &grid_keys[1], anneal.t2)?,
                t3: list("grid_t3", &grid_keys[2], anneal.t3)?,
            })
        };

        Ok(Self {
            objective,
            optimizers,
            optimizer,
            data,
            init,
            init_scale: e.get_or("init_scale", 1.0)?,
            seed: e.get_or("seed", 0)?,
            repeats: e.get_or("repeats", 1)?,
            threshold: e.get_or("threshold", 1e-2)?,
            out: e.get::<PathBuf>("out")?,
            grid,
        })
    }

    /// Dimension of the parameter vector for this objective.
    pub fn dim(&self) -> usize {
        match self.objective {
            ObjectiveSpec::Test(_) => 2,
            ObjectiveSpec::Logistic | ObjectiveSpec::Accuracy => self.data.features + 1,
        }
    }

    /// Checks every field. Schedule problems in `t1`/`t2`/`t3` are reported
    /// against the offending key; a degenerate cosine denominator is
    /// reported as such.
    pub fn validate(&self) -> Result<()> {
        if self.optimizers.is_empty() {
            return Err(Error::config("optimizers", "empty list"));
        }
        if self.repeats == 0 {
            return Err(Error::config("repeats", "must be >= 1"));
        }
        if !self.threshold.is_finite() {
            return Err(Error::config("threshold", "must be finite"));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(Error::config("init_scale", "must be finite and > 0"));
        }
        let a = &self.optimizer.anneal;
        if a.t1 < 1 {
            return Err(Error::config("t1", "must be >= 1"));
        }
        if a.t2 <= a.t1 {
            return Err(Error::config("t2", format!("must be > t1 = {} (got {})", a.t1, a.t2)));
        }
        if a.t3 <= a.t2 {
            return Err(Error::config("t3", format!("must be > t2 = {} (got {})", a.t2, a.t3)));
        }
        self.optimizer.validate()?;
        if let InitSpec::Point(p) = &self.init {
            if p.len() != self.dim() {
                return Err(Error::config("init", format!("expected {} values, got {}", self.dim(), p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("init", "values must be finite"));
            }
        }
        if self.objective.uses_data() {
            let d = &self.data;
            if d.features == 0 {
                return Err(Error::config("features", "must be >= 1"));
            }
            if d.train_size < 2 || d.test_size < 2 {
                return Err(Error::config("train_size", "train_size and test_size must be >= 2"));
            }
            if self.optimizer.batch_size > d.train_size {
                return Err(Error::config("batch_size", format!("must be <= train_size = {}", d.train_size)));
            }
            if !(d.separation.is_finite() && d.separation >= 0.0) {
                return Err(Error::config("separation", "must be finite and >= 0"));
            }
        }
        if self.objective == ObjectiveSpec::Accuracy {
            if let Some(kind) = self.optimizers.iter().find(|k| !k.is_zeroth_order()) {
                return Err(Error::config("optimizers", format!("{kind} needs a gradient, which `accuracy` lacks")));
            }
        }
        if let Some(grid) = &self.grid {
            if self.optimizers.len() != 1 {
                return Err(Error::config("optimizers", "grid search takes a single optimizer"));
            }
            if grid.is_empty() {
                return Err(Error::EmptyGrid);
            }
        }
        Ok(())
    }

    /// Copy with the schedule budgets replaced.
    pub fn with_budgets(&self, t1: u64, t2: u64, t3: u64) -> Self {
        let mut cfg = self.clone();
        let anneal = AnnealConfig { t1, t2, t3, ..self.optimizer.anneal };
        cfg.optimizer = cfg.optimizer.with_anneal(anneal);
        cfg
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let o = &self.optimizer;
        let a = &o.anneal;
        let join = |v: &[u64]| v.iter().map(u64::to_string).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let names: Vec<&str> = self.optimizers.iter().map(|k| k.as_str()).collect();
        let _ = writeln!(s, "objective = {}", self.objective.as_str());
        let _ = writeln!(s, "optimizers = {}", names.join(", "));
        let _ = writeln!(s, "eta = {:?}", o.eta);
        let _ = writeln!(s, "eps = {:?}", o.eps);
        let _ = writeln!(s, "sigma = {:?}", o.sigma);
        let _ = writeln!(s, "batch_size = {}", o.batch_size);
        let _ = writeln!(s, "t1 = {}\nt2 = {}\nt3 = {}", a.t1, a.t2, a.t3);
        let _ = writeln!(s, "preset = {}", a.preset);
        let _ = writeln!(s, "phi_alpha = {:?}\nphi_beta1 = {:?}\nphi_beta2 = {:?}", a.phi_alpha, a.phi_beta1, a.phi_beta2);
        let _ = writeln!(s, "moment_beta1 = {:?}\nmoment_beta2 = {:?}", o.moment_beta1, o.moment_beta2);
        match &self.init {
            InitSpec::Sample => {
                let _ = writeln!(s, "init = sample");
            }
            InitSpec::Point(p) => {
                let vals: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
                let _ = writeln!(s, "init = {}", vals.join(", "));
            }
        }
        let _ = writeln!(s, "init_scale = {:?}", self.init_scale);
        let _ = writeln!(s, "seed = {}\nrepeats = {}", self.seed, self.repeats);
        let _ = writeln!(s, "threshold = {:?}", self.threshold);
        if let Some(out) = &self.out {
            let _ = writeln!(s, "out = {}", out.display());
        }
        if self.objective.uses_data() {
            let d = &self.data;
            let _ = writeln!(s, "features = {}\ntrain_size = {}\ntest_size = {}", d.features, d.train_size, d.test_size);
            let _ = writeln!(s, "separation = {:?}\ndata_seed = {}", d.separation, d.seed);
        }
        if let Some(g) = &self.grid {
            let _ = writeln!(s, "grid_t1 = {}\ngrid_t2 = {}\ngrid_t3 = {}", join(&g.t1), join(&g.t2), join(&g.t3));
        }
        s
    }
}
