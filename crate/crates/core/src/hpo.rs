//! Hyperparameter search: a two-population (TPE-style) sampler, a median
//! pruner and a study runner persisted as JSON lines.

use crate::sac::SacConfig;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use thiserror::Error;

/// Trials sampled uniformly before the history is used.
pub const STARTUP_TRIALS: usize = 10;
/// Fraction of finished trials forming the good population.
pub const GOOD_QUANTILE: f64 = 0.25;
/// Comparable trials required before pruning.
pub const MIN_PRUNE_HISTORY: usize = 5;
const CANDIDATES: usize = 24;
pub const STUDY_FORMAT: &str = "pars-study";

#[derive(Debug, Error)]
pub enum HpoError {
    #[error("invalid search space: {0}")]
    Space(String),
    #[error("invalid study: {0}")]
    Study(String),
    #[error("study file {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HpoError>;

/// Search domain. Categorical lists must be non-empty; ranges are
/// `[low, high]` with `low <= high`, and strictly positive when sampled on a
/// log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub batch_size: Vec<usize>,
    pub buffer_size: Vec<usize>,
    #[serde(rename = "gamma", alias = "discount")]
    pub discount: Vec<f64>,
    /// Log-uniform.
    pub learning_rate: [f64; 2],
    pub learning_starts: Vec<usize>,
    /// Uniform.
    pub log_std_init: [f64; 2],
    pub net_arch: Vec<Vec<usize>>,
    /// Log-uniform.
    pub tau: [f64; 2],
    pub train_freq: Vec<usize>,
}

impl Default for SearchSpace {
    /// Brackets each default hyperparameter by ×/÷10 (log-scaled values) or
    /// a common option set (categoricals).
    fn default() -> Self {
        let d = SacConfig::default();
        Self {
            batch_size: vec![64, 128, 256],
            buffer_size: vec![10_000, 100_000],
            discount: vec![0.9, 0.95, 0.98, 0.99],
            learning_rate: [d.learning_rate / 10.0, d.learning_rate * 10.0],
            learning_starts: vec![1_000, 10_000],
            log_std_init: [-4.0, 0.0],
            net_arch: vec![vec![64, 64], vec![128, 128], vec![256, 256]],
            tau: [d.tau / 10.0, 0.8],
            train_freq: vec![1, 64, 512],
        }
    }
}

/// Values of the searched hyperparameters for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    pub batch_size: usize,
    pub buffer_size: usize,
    #[serde(rename = "gamma", alias = "discount")]
    pub discount: f64,
    pub learning_rate: f64,
    pub learning_starts: usize,
    pub log_std_init: f64,
    pub net_arch: Vec<usize>,
    pub tau: f64,
    pub train_freq: usize,
}

impl TrialParams {
    /// `base` with the searched fields replaced. Gradient steps follow the
    /// train frequency.
    pub fn apply(&self, base: &SacConfig) -> SacConfig {
        SacConfig {
            batch_size: self.batch_size,
            buffer_size: self.buffer_size,
            discount: self.discount,
            learning_rate: self.learning_rate,
            learning_starts: self.learning_starts,
            log_std_init: self.log_std_init,
            net_arch: self.net_arch.clone(),
            tau: self.tau,
            train_freq: self.train_freq,
            gradient_steps: self.train_freq,
            ..base.clone()
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HpoError::Space(m.to_string()));
        if self.batch_size.is_empty()
            || self.buffer_size.is_empty()
            || self.discount.is_empty()
            || self.learning_starts.is_empty()
            || self.net_arch.is_empty()
            || self.train_freq.is_empty()
        {
            return bad("categorical option lists must be non-empty");
        }
        for [lo, hi] in [self.learning_rate, self.tau] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad("log-uniform bounds must satisfy 0 < low <= high");
            }
        }
        let [lo, hi] = self.log_std_init;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return bad("log_std_init bounds must satisfy low <= high");
        }
        if self.batch_size.iter().max() > self.buffer_size.iter().min() {
            return bad("every batch_size option must fit in every buffer_size option");
        }
        if self.tau[1] > 1.0 {
            return bad("tau must not exceed 1");
        }
        if self.discount.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
            return bad("discount options must lie in (0, 1)");
        }
        if self.train_freq.contains(&0) || self.net_arch.iter().any(|a| a.is_empty() || a.contains(&0)) {
            return bad("train_freq and layer widths must be positive");
        }
        Ok(())
    }

    pub fn contains(&self, p: &TrialParams) -> bool {
        let within = |x: f64, [lo, hi]: [f64; 2]| x >= lo && x <= hi;
        self.batch_size.contains(&p.batch_size)
            && self.buffer_size.contains(&p.buffer_size)
            && self.discount.contains(&p.discount)
            && within(p.learning_rate, self.learning_rate)
            && self.learning_starts.contains(&p.learning_starts)
            && within(p.log_std_init, self.log_std_init)
            && self.net_arch.contains(&p.net_arch)
            && within(p.tau, self.tau)
            && self.train_freq.contains(&p.train_freq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Pruned,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: usize,
    pub params: TrialParams,
    pub config: SacConfig,
    /// Objective reported at each checkpoint.
    pub intermediate: Vec<f64>,
    /// Final objective; for pruned trials, the last intermediate value.
    pub value: Option<f64>,
    pub status: TrialStatus,
    pub error: Option<String>,
}

impl TrialRecord {
    /// Value used to rank the trial, if it has one.
    fn score(&self) -> Option<f64> {
        match self.status {
            TrialStatus::Complete | TrialStatus::Pruned => self.value.filter(|v| v.is_finite()),
            TrialStatus::Failed => None,
        }
    }
}

// Sampling: each parameter is drawn independently. Continuous parameters
// live in a unit interval (log-scaled where declared).

fn to_unit(x: f64, [lo, hi]: [f64; 2], log: bool) -> f64 {
    if hi == lo {
        return 0.5;
    }
    if log {
        (x.ln() - lo.ln()) / (hi.ln() - lo.ln())
    } else {
        (x - lo) / (hi - lo)
    }
}

fn from_unit(u: f64, [lo, hi]: [f64; 2], log: bool) -> f64 {
    let u = u.clamp(0.0, 1.0);
    let x = if log {
        (lo.ln() + u * (hi.ln() - lo.ln())).exp()
    } else {
        lo + u * (hi - lo)
    };
    x.clamp(lo, hi)
}

fn kde(x: f64, points: &[f64], bandwidth: f64) -> f64 {
    // Mixture of the points plus a uniform prior component.
    let gauss: f64 = points
        .iter()
        .map(|p| (-0.5 * ((x - p) / bandwidth).powi(2)).exp() / bandwidth)
        .sum();
    (gauss / (2.0 * std::f64::consts::PI).sqrt() + 1.0) / (points.len() as f64 + 1.0)
}

fn bandwidth(n: usize) -> f64 {
    (0.5 * (n.max(1) as f64).powf(-0.2)).max(0.05)
}

fn suggest_continuous(good: &[f64], bad: &[f64], rng: &mut impl Rng) -> f64 {
    let bw = bandwidth(good.len());
    let mut best = (f64::NEG_INFINITY, 0.5);
    for _ in 0..CANDIDATES {
        let x = match good.choose(rng) {
            Some(&center) if rng.random_bool(0.9) => {
                (center + Normal::new(0.0, bw).unwrap().sample(rng)).clamp(0.0, 1.0)
            }
            _ => rng.random::<f64>(),
        };
        let ratio = kde(x, good, bw).ln() - kde(x, bad, bandwidth(bad.len())).ln();
        if ratio > best.0 {
            best = (ratio, x);
        }
    }
    best.1
}

fn suggest_categorical<T: Clone + PartialEq>(options: &[T], good: &[T], bad: &[T], rng: &mut impl Rng) -> T {
    if options.len() == 1 {
        return options[0].clone();
    }
    let weight = |population: &[T], o: &T| {
        (population.iter().filter(|x| *x == o).count() as f64 + 1.0) / (population.len() + options.len()) as f64
    };
    let good_weights: Vec<f64> = options.iter().map(|o| weight(good, o)).collect();
    let dist = rand::distr::weighted::WeightedIndex::new(&good_weights).expect("positive weights");
    let mut best = (f64::NEG_INFINITY, 0usize);
    for _ in 0..CANDIDATES {
        let i = dist.sample(rng);
        let ratio = good_weights[i].ln() - weight(bad, &options[i]).ln();
        if ratio > best.0 {
            best = (ratio, i);
        }
    }
    options[best.1].clone()
}

fn uniform_params(space: &SearchSpace, rng: &mut impl Rng) -> TrialParams {
    TrialParams {
        batch_size: *space.batch_size.choose(rng).unwrap(),
        buffer_size: *space.buffer_size.choose(rng).unwrap(),
        discount: *space.discount.choose(rng).unwrap(),
        learning_rate: from_unit(rng.random(), space.learning_rate, true),
        learning_starts: *space.learning_starts.choose(rng).unwrap(),
        log_std_init: from_unit(rng.random(), space.log_std_init, false),
        net_arch: space.net_arch.choose(rng).unwrap().clone(),
        tau: from_unit(rng.random(), space.tau, true),
        train_freq: *space.train_freq.choose(rng).unwrap(),
    }
}

/// Splits scored trials into the top quantile and the rest.
fn populations(history: &[TrialRecord]) -> (Vec<&TrialParams>, Vec<&TrialParams>) {
    let mut scored: Vec<(f64, &TrialParams)> =
        history.iter().filter_map(|t| t.score().map(|s| (s, &t.params))).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let n_good = ((scored.len() as f64 * GOOD_QUANTILE).ceil() as usize).max(1).min(scored.len());
    let bad = scored.split_off(n_good);
    (
        scored.into_iter().map(|(_, p)| p).collect(),
        bad.into_iter().map(|(_, p)| p).collect(),
    )
}

/// Hyperparameters for the next trial: uniform for the first
/// [`STARTUP_TRIALS`] scored trials, then biased towards the values of the
/// best quantile relative to the rest.
pub fn suggest_params(history: &[TrialRecord], space: &SearchSpace, rng: &mut impl Rng) -> TrialParams {
    let scored = history.iter().filter(|t| t.score().is_some()).count();
    if scored < STARTUP_TRIALS {
        return uniform_params(space, rng);
    }
    let (good, bad) = populations(history);
    macro_rules! cat {
        ($field:ident) => {{
            let g: Vec<_> = good.iter().map(|p| p.$field.clone()).collect();
            let b: Vec<_> = bad.iter().map(|p| p.$field.clone()).collect();
            suggest_categorical(&space.$field, &g, &b, rng)
        }};
    }
    macro_rules! cont {
        ($field:ident, $log:expr) => {{
            let g: Vec<f64> = good.iter().map(|p| to_unit(p.$field, space.$field, $log)).collect();
            let b: Vec<f64> = bad.iter().map(|p| to_unit(p.$field, space.$field, $log)).collect();
            from_unit(suggest_continuous(&g, &b, rng), space.$field, $log)
        }};
    }
    TrialParams {
        batch_size: cat!(batch_size),
        buffer_size: cat!(buffer_size),
        discount: cat!(discount),
        learning_rate: cont!(learning_rate, true),
        learning_starts: cat!(learning_starts),
        log_std_init: cont!(log_std_init, false),
        net_arch: cat!(net_arch),
        tau: cont!(tau, true),
        train_freq: cat!(train_freq),
    }
}

/// [`suggest_params`] applied to `base`.
pub fn suggest(history: &[TrialRecord], space: &SearchSpace, base: &SacConfig, rng: &mut impl Rng) -> SacConfig {
    suggest_params(history, space, rng).apply(base)
}

/// Median rule: prune when `value` is below the median of the values other
/// trials reported at the same checkpoint. Only complete trials count, and
/// at least [`MIN_PRUNE_HISTORY`] of them must have reached the checkpoint.
pub fn should_prune(value: f64, history: &[TrialRecord], checkpoint: usize) -> bool {
    let mut values: Vec<f64> = history
        .iter()
        .filter(|t| t.status == TrialStatus::Complete)
        .filter_map(|t| t.intermediate.get(checkpoint).copied())
        .filter(|v| v.is_finite())
        .collect();
    if values.len() < MIN_PRUNE_HISTORY {
        return false;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    let median = if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    value < median
}

/// Handle given to the objective for reporting intermediate values.
pub struct TrialContext<'a> {
    pub id: usize,
    history: &'a Mutex<Vec<TrialRecord>>,
    intermediate: Vec<f64>,
    pruning: bool,
    pruned: bool,
}

impl TrialContext<'_> {
    /// Records the objective at the next checkpoint. Returns `false` when the
    /// trial should stop because it was pruned.
    pub fn report(&mut self, value: f64) -> bool {
        let checkpoint = self.intermediate.len();
        self.intermediate.push(value);
        if self.pruning {
            let history = self.history.lock().expect("history lock");
            if should_prune(value, &history, checkpoint) {
                self.pruned = true;
            }
        }
        !self.pruned
    }

    pub fn intermediate(&self) -> &[f64] {
        &self.intermediate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyHeader {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub space: SearchSpace,
    pub base: SacConfig,
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Trials to run in this invocation.
    pub n_trials: usize,
    pub workers: usize,
    pub seed: u64,
    pub space: SearchSpace,
    /// Settings not under search (budget, evaluation schedule).
    pub base: SacConfig,
    pub pruning: bool,
    /// JSON-lines file; appended to when it already exists.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub best: Option<TrialRecord>,
    pub history: Vec<TrialRecord>,
}

/// Reads a study file: header plus trial records.
pub fn load_study(path: &Path) -> Result<(StudyHeader, Vec<TrialRecord>)> {
    let fmt_err = |message: String| HpoError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines.next().ok_or_else(|| fmt_err("empty file".into()))??;
    let header: StudyHeader =
        serde_json::from_str(&header_line).map_err(|e| fmt_err(format!("bad header: {e}")))?;
    if header.format != STUDY_FORMAT || header.version != 1 {
        return Err(fmt_err(format!("unsupported format {} v{}", header.format, header.version)));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TrialRecord =
            serde_json::from_str(&line).map_err(|e| fmt_err(format!("line {}: {e}", i + 2)))?;
        records.push(record);
    }
    Ok((header, records))
}

/// Runs trials on up to `workers` threads. Each trial gets its own
/// suggestion RNG derived from the study seed and trial id, so serial runs
/// are reproducible. An objective error marks the trial failed and the
/// study goes on. Returns the best trial over the whole history.
pub fn run_study<F>(options: &StudyOptions, objective: F) -> Result<StudyResult>
where
    F: Fn(&SacConfig, &mut TrialContext) -> std::result::Result<f64, String> + Sync,
{
    options.space.validate()?;
    if options.workers == 0 {
        return Err(HpoError::Study("workers must be >= 1".into()));
    }
    let mut history = Vec::new();
    let mut file = None;
    if let Some(path) = &options.path {
        if path.exists() {
            let (header, records) = load_study(path)?;
            if header.seed != options.seed || header.space != options.space {
                return Err(HpoError::Study(format!(
                    "{} was created with a different seed or search space",
                    path.display()
                )));
            }
            history = records;
            file = Some(OpenOptions::new().append(true).open(path)?);
        } else {
            let mut f = File::create(path)?;
            let header = StudyHeader {
                format: STUDY_FORMAT.into(),
                version: 1,
                seed: options.seed,
                space: options.space.clone(),
                base: options.base.clone(),
            };
            writeln!(f, "{}", serde_json::to_string(&header)?)?;
            file = Some(f);
        }
    }
    let first_id = history.iter().map(|t| t.id + 1).max().unwrap_or(0);
    let history = Mutex::new(history);
    let file = Mutex::new(file);
    let next = Mutex::new(first_id);
    let end = first_id + options.n_trials;
    let io_error: Mutex<Option<std::io::Error>> = Mutex::new(None);

    let worker = || loop {
        let (id, config, params) = {
            let mut next = next.lock().expect("id lock");
            if *next >= end || io_error.lock().expect("error lock").is_some() {
                return;
            }
            let id = *next;
            *next += 1;
            let snapshot = history.lock().expect("history lock").clone();
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let params = suggest_params(&snapshot, &options.space, &mut rng);
            let mut config = params.apply(&options.base);
            config.seed = options.base.seed.wrapping_add(id as u64);
            (id, config, params)
        };
        let mut ctx = TrialContext {
            id,
            history: &history,
            intermediate: Vec::new(),
            pruning: options.pruning,
            pruned: false,
        };
        let result = objective(&config, &mut ctx);
        let (status, value, error) = match result {
            Ok(_) if ctx.pruned => (TrialStatus::Pruned, ctx.intermediate.last().copied(), None),
            Ok(v) if v.is_finite() => (TrialStatus::Complete, Some(v), None),
            Ok(v) => (TrialStatus::Failed, None, Some(format!("non-finite objective {v}"))),
            Err(e) => (TrialStatus::Failed, None, Some(e)),
        };
        let record = TrialRecord {
            id,
            params,
            config,
            intermediate: ctx.intermediate,
            value,
            status,
            error,
        };
        let line = serde_json::to_string(&record).expect("trial record serializes");
        let mut history = history.lock().expect("history lock");
        if let Some(f) = file.lock().expect("file lock").as_mut() {
            if let Err(e) = writeln!(f, "{line}").and_then(|_| f.flush()) {
                *io_error.lock().expect("error lock") = Some(e);
            }
        }
        history.push(record);
    };

    if options.workers == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..options.workers {
                s.spawn(worker);
            }
        });
    }
    if let Some(e) = io_error.into_inner().expect("error lock") {
        return Err(e.into());
    }
    let mut history = history.into_inner().expect("history lock");
    history.sort_by_key(|t| t.id);
    let best = history
        .iter()
        .filter(|t| t.status == TrialStatus::Complete)
        .filter(|t| t.value.is_some())
        .max_by(|a, b| a.value.unwrap().total_cmp(&b.value.unwrap()))
        .cloned();
    Ok(StudyResult { best, history })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(id: usize, lr: f64, value: f64, intermediate: Vec<f64>) -> TrialRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(id as u64);
        let mut params = uniform_params(&SearchSpace::default(), &mut rng);
        params.learning_rate = lr;
        TrialRecord {
            id,
            config: params.apply(&SacConfig::default()),
            params,
            intermediate,
            value: Some(value),
            status: TrialStatus::Complete,
            error: None,
        }
    }

    #[test]
    fn default_space_valid_and_contains_defaults() {
        let space = SearchSpace::default();
        space.validate().unwrap();
        let d = SacConfig::default();
        let p = TrialParams {
            batch_size: d.batch_size,
            buffer_size: d.buffer_size,
            discount: d.discount,
            learning_rate: d.learning_rate,
            learning_starts: d.learning_starts,
            log_std_init: d.log_std_init,
            net_arch: d.net_arch.clone(),
            tau: d.tau,
            train_freq: d.train_freq,
        };
        assert!(space.contains(&p));
    }

    #[test]
    fn single_option_always_chosen() {
        let space = SearchSpace {
            batch_size: vec![32],
            ..Default::default()
        };
        let history: Vec<_> = (0..20).map(|i| record(i, 1e-3, i as f64, vec![])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            assert_eq!(suggest_params(&history, &space, &mut rng).batch_size, 32);
            assert_eq!(suggest_params(&[], &space, &mut rng).batch_size, 32);
        }
    }

    #[test]
    fn prune_rule() {
        let history: Vec<_> = (0..5).map(|i| record(i, 1e-3, 0.0, vec![i as f64])).collect();
        assert!(should_prune(1.5, &history, 0));
        assert!(!should_prune(2.5, &history, 0));
        assert!(!should_prune(-100.0, &history[..4], 0));
        assert!(!should_prune(-100.0, &history, 1));
    }

    #[test]
    fn rejects_bad_space() {
        let space = SearchSpace {
            learning_rate: [0.0, 1.0],
            ..Default::default()
        };
        assert!(space.validate().is_err());
        let space = SearchSpace {
            net_arch: vec![],
            ..Default::default()
        };
        assert!(space.validate().is_err());
    }
}
