//! Tree-structured Parzen estimator over independent 1-D dimensions.
//!
//! Completed trials are ranked by objective (higher is better); the top
//! `⌈γN⌉` form the good set and the rest the bad set. Each dimension gets a
//! truncated-Gaussian mixture per set, `l` and `g`. Candidates are drawn from
//! `l` and the one maximizing `Σ_d log l_d(x_d) − log g_d(x_d)` wins. Log-scale
//! dimensions are modelled in exponent space.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
}

impl Dimension {
    pub fn new(name: impl Into<String>, lower: f64, upper: f64, scale: Scale) -> Result<Self> {
        let d = Dimension {
            name: name.into(),
            lower,
            upper,
            scale,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lower < self.upper) || !self.lower.is_finite() || !self.upper.is_finite() {
            return Err(Error::config(format!(
                "dimension {}: need finite lower < upper, got [{}, {}]",
                self.name, self.lower, self.upper
            )));
        }
        if self.scale == Scale::Log && self.lower <= 0.0 {
            return Err(Error::config(format!(
                "dimension {}: log scale needs a positive lower bound",
                self.name
            )));
        }
        Ok(())
    }

    /// Bounds in the space the estimator works in.
    pub fn internal_bounds(&self) -> (f64, f64) {
        (self.to_internal(self.lower), self.to_internal(self.upper))
    }

    pub fn to_internal(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Linear => x,
            Scale::Log => x.ln(),
        }
    }

    pub fn from_internal(&self, z: f64) -> f64 {
        let x = match self.scale {
            Scale::Linear => z,
            Scale::Log => z.exp(),
        };
        x.clamp(self.lower, self.upper)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let s = SearchSpace { dims };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::config("search space has no dimensions"));
        }
        for (i, d) in self.dims.iter().enumerate() {
            d.validate()?;
            if self.dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::config(format!("dimension {} listed twice", d.name)));
            }
        }
        Ok(())
    }

    /// Learning rate, momentum, L2 and dropout over artifact-default ranges.
    pub fn hyperparams() -> Self {
        let dims = vec![
            Dimension::new("learning_rate", 1e-4, 1e-1, Scale::Log),
            Dimension::new("momentum", 0.5, 0.99, Scale::Linear),
            Dimension::new("l2", 1e-6, 1e-2, Scale::Log),
            Dimension::new("dropout", 0.0, 0.7, Scale::Linear),
        ];
        SearchSpace {
            dims: dims.into_iter().map(|d| d.expect("static bounds")).collect(),
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len() && self.dims.iter().zip(point).all(|(d, x)| d.contains(*x))
    }

    pub fn named(&self, point: &[f64]) -> BTreeMap<String, f64> {
        self.dims.iter().map(|d| d.name.clone()).zip(point.iter().copied()).collect()
    }

    pub fn from_named(&self, values: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.dims
            .iter()
            .map(|d| {
                values
                    .get(&d.name)
                    .copied()
                    .ok_or_else(|| Error::validation("trial", format!("missing value for {}", d.name)))
            })
            .collect()
    }

    fn sample_uniform<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        self.dims
            .iter()
            .map(|d| {
                let (lo, hi) = d.internal_bounds();
                d.from_internal(rng.gen_range(lo..=hi))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "message")]
pub enum TrialStatus {
    Complete,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub point: Vec<f64>,
    /// Higher is better; `None` for failed trials.
    pub objective: Option<f64>,
    pub status: TrialStatus,
}

impl Trial {
    pub fn complete(point: Vec<f64>, objective: f64) -> Self {
        Trial {
            point,
            objective: Some(objective),
            status: TrialStatus::Complete,
        }
    }

    pub fn failed(point: Vec<f64>, message: impl Into<String>) -> Self {
        Trial {
            point,
            objective: None,
            status: TrialStatus::Failed(message.into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TpeConfig {
    pub gamma: f64,
    pub startup_trials: usize,
    pub candidates: usize,
    /// Bandwidth floor as a fraction of the (internal) range.
    pub min_bandwidth: f64,
}

impl Default for TpeConfig {
    fn default() -> Self {
        TpeConfig {
            gamma: 0.25,
            startup_trials: 10,
            candidates: 24,
            min_bandwidth: 0.01,
        }
    }
}

impl TpeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(format!("γ = {} outside (0, 1)", self.gamma)));
        }
        if self.startup_trials < 2 {
            return Err(Error::config("at least 2 startup trials are needed"));
        }
        if self.candidates == 0 {
            return Err(Error::config("candidate count must be positive"));
        }
        if !(self.min_bandwidth > 0.0) {
            return Err(Error::config("bandwidth floor must be positive"));
        }
        Ok(())
    }
}

/// Equal-weight mixture of Gaussians truncated to `[lower, upper]`. With
/// no centers it is the uniform density.
#[derive(Clone, Debug)]
pub struct Parzen {
    pub lower: f64,
    pub upper: f64,
    pub centers: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Mass of each untruncated kernel inside the bounds.
    mass: Vec<f64>,
}

impl Parzen {
    /// Bandwidth of each center is the larger gap to its sorted neighbours,
    /// with the bounds acting as outer neighbours, floored at
    /// `min_fraction · (upper − lower)`.
    pub fn fit(points: &[f64], lower: f64, upper: f64, min_fraction: f64) -> Self {
        let mut centers = points.to_vec();
        centers.sort_by(f64::total_cmp);
        let floor = min_fraction * (upper - lower);
        let n = centers.len();
        let bandwidths: Vec<f64> = (0..n)
            .map(|i| {
                let left = if i == 0 { lower } else { centers[i - 1] };
                let right = if i + 1 == n { upper } else { centers[i + 1] };
                (centers[i] - left).max(right - centers[i]).max(floor)
            })
            .collect();
        let mass = centers
            .iter()
            .zip(&bandwidths)
            .map(|(&mu, &sigma)| {
                let k = std_normal();
                (k.cdf((upper - mu) / sigma) - k.cdf((lower - mu) / sigma)).max(f64::MIN_POSITIVE)
            })
            .collect();
        Parzen {
            lower,
            upper,
            centers,
            bandwidths,
            mass,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        if self.centers.is_empty() {
            return 1.0 / (self.upper - self.lower);
        }
        let k = std_normal();
        let total: f64 = self
            .centers
            .iter()
            .zip(&self.bandwidths)
            .zip(&self.mass)
            .map(|((&mu, &sigma), &m)| k.pdf((x - mu) / sigma) / (sigma * m))
            .sum();
        total / self.centers.len() as f64
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.centers.is_empty() {
            return rng.gen_range(self.lower..=self.upper);
        }
        let i = rng.gen_range(0..self.centers.len());
        let (mu, sigma) = (self.centers[i], self.bandwidths[i]);
        let k = std_normal();
        let a = k.cdf((self.lower - mu) / sigma);
        let b = k.cdf((self.upper - mu) / sigma);
        let u = a + (b - a) * rng.gen::<f64>();
        let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
        (mu + sigma * k.inverse_cdf(u)).clamp(self.lower, self.upper)
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Indices of completed trials split into (good, bad): good holds the
/// `⌈γN⌉` best objectives, ties broken by trial order.
pub fn split_good_bad(history: &[Trial], gamma: f64) -> (Vec<usize>, Vec<usize>) {
    // Rank by loss = −objective so both sets come out in ascending loss.
    let mut done: Vec<(f64, usize)> = history
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.objective.map(|o| (-o, i)))
        .collect();
    done.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n_good = (gamma * done.len() as f64).ceil() as usize;
    let good = done[..n_good].iter().map(|p| p.1).collect();
    let bad = done[n_good..].iter().map(|p| p.1).collect();
    (good, bad)
}

/// Next point to evaluate. Uniform while fewer than `startup_trials`
/// trials have completed.
pub fn suggest<R: Rng>(space: &SearchSpace, history: &[Trial], cfg: &TpeConfig, rng: &mut R) -> Result<Vec<f64>> {
    space.validate()?;
    cfg.validate()?;
    let completed = history.iter().filter(|t| t.objective.is_some()).count();
    if completed < cfg.startup_trials {
        return Ok(space.sample_uniform(rng));
    }
    let (good, bad) = split_good_bad(history, cfg.gamma);
    let estimators: Vec<(Parzen, Parzen)> = space
        .dims
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let (lo, hi) = d.internal_bounds();
            let pts = |idx: &[usize]| -> Vec<f64> {
                idx.iter().map(|&i| d.to_internal(history[i].point[k])).collect()
            };
            (
                Parzen::fit(&pts(&good), lo, hi, cfg.min_bandwidth),
                Parzen::fit(&pts(&bad), lo, hi, cfg.min_bandwidth),
            )
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.candidates {
        let z: Vec<f64> = estimators.iter().map(|(l, _)| l.sample(rng)).collect();
        let score: f64 = z
            .iter()
            .zip(&estimators)
            .map(|(&zi, (l, g))| l.pdf(zi).max(f64::MIN_POSITIVE).ln() - g.pdf(zi).max(f64::MIN_POSITIVE).ln())
            .sum();
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, z));
        }
    }
    let (_, z) = best.expect("at least one candidate");
    Ok(space.dims.iter().zip(z).map(|(d, zi)| d.from_internal(zi)).collect())
}

/// Ordered trial log.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub trials: Vec<Trial>,
}

impl History {
    pub fn observe(&mut self, space: &SearchSpace, trial: Trial) -> Result<()> {
        if !space.contains(&trial.point) {
            return Err(Error::Contract(format!(
                "trial point {:?} outside the search space",
                trial.point
            )));
        }
        self.trials.push(trial);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Best completed trial; earliest wins ties.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.objective.is_some())
            .fold(None, |acc: Option<&Trial>, t| match acc {
                Some(b) if b.objective >= t.objective => Some(b),
                _ => Some(t),
            })
    }
}

/// One line of a persisted history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub params: BTreeMap<String, f64>,
    pub objective: Option<f64>,
    #[serde(flatten)]
    pub status: TrialStatus,
}

pub fn write_trial(out: &mut impl Write, space: &SearchSpace, index: usize, trial: &Trial) -> Result<()> {
    let rec = TrialRecord {
        trial: index,
        params: space.named(&trial.point),
        objective: trial.objective,
        status: trial.status.clone(),
    };
    serde_json::to_writer(&mut *out, &rec)?;
    writeln!(out).map_err(|e| Error::io("<history>", e))
}

pub fn load_history(path: &Path, space: &SearchSpace) -> Result<History> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut history = History::default();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let rec: TrialRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let point = space.from_named(&rec.params).map_err(|e| parse_err(e.to_string()))?;
        let trial = Trial {
            point,
            objective: rec.objective,
            status: rec.status,
        };
        history.observe(space, trial).map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(history)
}

/// Per-trial generator: the same (seed, trial index) always yields the
/// same stream, so a resumed run continues where it left off.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampler {
    Tpe,
    Random,
}

/// Runs trials until `history` holds `budget` of them. A failing objective
/// is recorded as a failed trial and the loop continues. `on_trial` sees
/// each new trial (for persistence).
#[allow(clippy::too_many_arguments)]
pub fn tune_with<F, G>(
    space: &SearchSpace,
    mut objective: F,
    budget: usize,
    cfg: &TpeConfig,
    seed: u64,
    sampler: Sampler,
    mut history: History,
    mut on_trial: G,
) -> Result<History>
where
    F: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(usize, &Trial) -> Result<()>,
{
    if budget == 0 {
        return Err(Error::config("budget must be at least 1"));
    }
    space.validate()?;
    cfg.validate()?;
    while history.len() < budget {
        let index = history.len();
        let mut rng = trial_rng(seed, index);
        let point = match sampler {
            Sampler::Tpe => suggest(space, &history.trials, cfg, &mut rng)?,
            Sampler::Random => space.sample_uniform(&mut rng),
        };
        let trial = match objective(&point) {
            Ok(v) if v.is_finite() => Trial::complete(point, v),
            Ok(v) => Trial::failed(point, format!("non-finite objective {v}")),
            Err(e) => {
                log::warn!("trial {index} failed: {e}");
                Trial::failed(point, e.to_string())
            }
        };
        on_trial(index, &trial)?;
        history.observe(space, trial)?;
    }
    Ok(history)
}

pub fn tune<F>(space: &SearchSpace, objective: F, budget: usize, cfg: &TpeConfig, seed: u64) -> Result<History>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    tune_with(space, objective, budget, cfg, seed, Sampler::Tpe, History::default(), |_, _| Ok(()))
}

pub fn random_search<F>(space: &SearchSpace, objective: F, budget: usize, seed: u64) -> Result<History>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let cfg = TpeConfig::default();
    tune_with(space, objective, budget, &cfg, seed, Sampler::Random, History::default(), |_, _| Ok(()))
}

/// Opens a history file for appending, creating it if needed.
pub fn open_history_for_append(path: &Path) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))
}
