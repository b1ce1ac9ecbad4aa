//! Soft actor-critic.
//!
//! Squashed-Gaussian actor, twin Q critics with Polyak-averaged targets and
//! an automatically tuned entropy temperature. The actor and critic
//! networks are plain [`Mlp`]s; the tanh squashing, reparameterization and
//! log-probability are differentiated by hand on top of the network tapes.

use crate::env::{EnvError, Environment};
use crate::nn::{Adam, GradientTape, Gradients, Matrix, Mlp, NnError};
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub mod toy;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps log(1 − tanh²) finite at the saturation edges.
const SQUASH_EPS: f64 = 1e-6;
const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Error)]
pub enum SacError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite {what}: {detail}")]
    NonFinite { what: &'static str, detail: String },
    #[error("aborted after {0} consecutive non-finite updates")]
    Diverged(usize),
    #[error("environment: {0}")]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SacError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SacConfig {
    pub batch_size: usize,
    pub buffer_size: usize,
    /// Return discount, serialized under its hyperparameter-table name.
    #[serde(rename = "gamma", alias = "discount")]
    pub discount: f64,
    pub learning_rate: f64,
    pub learning_starts: usize,
    pub log_std_init: f64,
    pub net_arch: Vec<usize>,
    pub tau: f64,
    /// Environment steps between update bursts.
    pub train_freq: usize,
    /// Updates per burst.
    pub gradient_steps: usize,
    pub total_steps: usize,
    pub seed: u64,
    /// Defaults to −(action dimension).
    pub target_entropy: Option<f64>,
    pub initial_alpha: f64,
    /// Environment steps between evaluations; 0 disables them.
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            buffer_size: 10_000,
            discount: 0.9,
            learning_rate: 0.000483785052402479,
            learning_starts: 10_000,
            log_std_init: -2.193334342451813,
            net_arch: vec![64, 64],
            tau: 0.08,
            train_freq: 512,
            gradient_steps: 512,
            total_steps: 1_000_000,
            seed: 0,
            target_entropy: None,
            initial_alpha: 1.0,
            eval_interval: 10_000,
            eval_episodes: 5,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SacError::Config(m));
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return bad(format!("discount must lie in (0, 1), got {}", self.discount));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must lie in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_size {
            return bad(format!(
                "batch_size {} must be in 1..=buffer_size {}",
                self.batch_size, self.buffer_size
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if self.train_freq == 0 {
            return bad("train_freq must be >= 1".into());
        }
        if self.net_arch.is_empty() || self.net_arch.contains(&0) {
            return bad(format!("net_arch {:?} must be non-empty with positive widths", self.net_arch));
        }
        if !(self.log_std_init >= LOG_STD_MIN && self.log_std_init <= LOG_STD_MAX) {
            return bad(format!("log_std_init must lie in [{LOG_STD_MIN}, {LOG_STD_MAX}]"));
        }
        if !(self.initial_alpha > 0.0 && self.initial_alpha.is_finite()) {
            return bad("initial_alpha must be positive".into());
        }
        if self.eval_interval > 0 && self.eval_episodes == 0 {
            return bad("eval_episodes must be >= 1 when evaluating".into());
        }
        Ok(())
    }
}

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    /// True only for absorbing terminations; time-limit truncations and
    /// successful recoveries keep this false so their value is bootstrapped.
    pub done: bool,
}

/// Fixed-capacity FIFO of transitions stored as flat rows.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    observations: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_observations: Vec<f64>,
    dones: Vec<bool>,
    len: usize,
    head: usize,
}

/// Column-major-by-field batch drawn from the buffer.
#[derive(Debug, Clone)]
pub struct Batch {
    pub observations: Matrix<f64>,
    pub actions: Matrix<f64>,
    pub rewards: Vec<f64>,
    pub next_observations: Matrix<f64>,
    pub dones: Vec<bool>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            capacity,
            obs_dim,
            act_dim,
            observations: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            next_observations: vec![0.0; capacity * obs_dim],
            dones: vec![false; capacity],
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends a transition, evicting the oldest one when full.
    pub fn push(&mut self, t: &Transition) {
        assert_eq!(t.observation.len(), self.obs_dim);
        assert_eq!(t.next_observation.len(), self.obs_dim);
        assert_eq!(t.action.len(), self.act_dim);
        let i = self.head;
        self.observations[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(&t.observation);
        self.next_observations[i * self.obs_dim..(i + 1) * self.obs_dim]
            .copy_from_slice(&t.next_observation);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.dones[i] = t.done;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
    }

    /// Stored transition by age, 0 being the oldest.
    pub fn get(&self, age: usize) -> Option<Transition> {
        if age >= self.len {
            return None;
        }
        let start = if self.len < self.capacity { 0 } else { self.head };
        let i = (start + age) % self.capacity;
        Some(self.slot(i))
    }

    fn slot(&self, i: usize) -> Transition {
        Transition {
            observation: self.observations[i * self.obs_dim..(i + 1) * self.obs_dim].to_vec(),
            action: self.actions[i * self.act_dim..(i + 1) * self.act_dim].to_vec(),
            reward: self.rewards[i],
            next_observation: self.next_observations[i * self.obs_dim..(i + 1) * self.obs_dim]
                .to_vec(),
            done: self.dones[i],
        }
    }

    /// Uniform sample, without replacement within the batch.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Batch {
        assert!(batch_size <= self.len, "batch larger than buffer contents");
        let picks = index::sample(rng, self.len, batch_size);
        let mut observations = Vec::with_capacity(batch_size * self.obs_dim);
        let mut next_observations = Vec::with_capacity(batch_size * self.obs_dim);
        let mut actions = Vec::with_capacity(batch_size * self.act_dim);
        let mut rewards = Vec::with_capacity(batch_size);
        let mut dones = Vec::with_capacity(batch_size);
        for i in picks.iter() {
            observations.extend_from_slice(&self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]);
            next_observations
                .extend_from_slice(&self.next_observations[i * self.obs_dim..(i + 1) * self.obs_dim]);
            actions.extend_from_slice(&self.actions[i * self.act_dim..(i + 1) * self.act_dim]);
            rewards.push(self.rewards[i]);
            dones.push(self.dones[i]);
        }
        Batch {
            observations: Matrix {
                rows: batch_size,
                cols: self.obs_dim,
                data: observations,
            },
            actions: Matrix {
                rows: batch_size,
                cols: self.act_dim,
                data: actions,
            },
            rewards,
            next_observations: Matrix {
                rows: batch_size,
                cols: self.obs_dim,
                data: next_observations,
            },
            dones,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Stochastic,
    Deterministic,
}

/// Squashed-Gaussian policy. The network outputs the mean followed by the
/// log standard deviation for each action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub net: Mlp<f64>,
    pub action_dim: usize,
}

/// Intermediate values of a reparameterized batch sample.
struct SquashedSample {
    /// pre-squash u = μ + σ·ξ
    noise: Matrix<f64>,
    log_std: Matrix<f64>,
    clamped: Vec<bool>,
    actions: Matrix<f64>,
    log_probs: Vec<f64>,
}

impl Policy {
    pub fn new(obs_dim: usize, action_dim: usize, hidden: &[usize], log_std_init: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        let mut net = Mlp::new(&sizes, rng)?;
        let last = net.layers().len() - 1;
        let inputs = net.layers()[last].inputs;
        // Log-std rows start flat at the configured value.
        let weight = net.weight_mut(last);
        for row in action_dim..2 * action_dim {
            weight[row * inputs..(row + 1) * inputs].iter_mut().for_each(|w| *w = 0.0);
        }
        for b in &mut net.bias_mut(last)[action_dim..] {
            *b = log_std_init;
        }
        Ok(Self { net, action_dim })
    }

    pub fn observation_dim(&self) -> usize {
        self.net.input_size()
    }

    /// Mean and (clamped) log standard deviation for one observation.
    pub fn distribution(&self, obs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.net.forward_one(obs)?;
        check_finite("policy output", &out)?;
        let mean = out[..self.action_dim].to_vec();
        let log_std = out[self.action_dim..]
            .iter()
            .map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX))
            .collect();
        Ok((mean, log_std))
    }

    /// Stochastic: a = tanh(μ + σ·ξ) with its log-density including the
    /// tanh change of variables. Deterministic: a = tanh(μ), no density.
    pub fn sample_action(
        &self,
        obs: &[f64],
        mode: SampleMode,
        rng: &mut impl Rng,
    ) -> Result<(Vec<f64>, Option<f64>)> {
        let (mean, log_std) = self.distribution(obs)?;
        match mode {
            SampleMode::Deterministic => Ok((mean.iter().map(|m| m.tanh()).collect(), None)),
            SampleMode::Stochastic => {
                let mut action = Vec::with_capacity(self.action_dim);
                let mut log_prob = 0.0;
                for (m, ls) in mean.iter().zip(&log_std) {
                    let xi: f64 = rng.sample(StandardNormal);
                    let a = (m + ls.exp() * xi).tanh();
                    log_prob += -0.5 * xi * xi - ls - HALF_LOG_2PI - (1.0 - a * a + SQUASH_EPS).ln();
                    action.push(a);
                }
                Ok((action, Some(log_prob)))
            }
        }
    }

    /// Log-density of an already squashed action.
    pub fn log_prob(&self, obs: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, log_std) = self.distribution(obs)?;
        let mut lp = 0.0;
        for ((m, ls), a) in mean.iter().zip(&log_std).zip(action) {
            let a = a.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
            let u = a.atanh();
            let z = (u - m) / ls.exp();
            lp += -0.5 * z * z - ls - HALF_LOG_2PI - (1.0 - a * a + SQUASH_EPS).ln();
        }
        Ok(lp)
    }

    fn sample_batch(&self, out: &Matrix<f64>, rng: &mut impl Rng) -> SquashedSample {
        let n = out.rows;
        let d = self.action_dim;
        let mut noise = Matrix::zeros(n, d);
        let mut log_std = Matrix::zeros(n, d);
        let mut clamped = vec![false; n * d];
        let mut actions = Matrix::zeros(n, d);
        let mut log_probs = vec![0.0; n];
        for i in 0..n {
            let row = out.row(i);
            for j in 0..d {
                let raw = row[d + j];
                let ls = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[i * d + j] = raw != ls;
                let xi: f64 = rng.sample(StandardNormal);
                let a = (row[j] + ls.exp() * xi).tanh();
                noise.set(i, j, xi);
                log_std.set(i, j, ls);
                actions.set(i, j, a);
                log_probs[i] += -0.5 * xi * xi - ls - HALF_LOG_2PI - (1.0 - a * a + SQUASH_EPS).ln();
            }
        }
        SquashedSample {
            noise,
            log_std,
            clamped,
            actions,
            log_probs,
        }
    }
}

fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SacError::NonFinite {
            what,
            detail: format!("{values:?}"),
        })
    }
}

/// Losses from one update, plus the temperature used.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Losses {
    pub critic: f64,
    pub actor: f64,
    pub alpha: f64,
    pub alpha_value: f64,
    pub entropy: f64,
}

/// Learner state: networks, targets, optimizers and the temperature.
#[derive(Debug, Clone)]
pub struct Sac {
    pub config: SacConfig,
    pub policy: Policy,
    pub critics: [Mlp<f64>; 2],
    pub targets: [Mlp<f64>; 2],
    pub log_alpha: f64,
    pub target_entropy: f64,
    actor_opt: Adam<f64>,
    critic_opts: [Adam<f64>; 2],
    alpha_opt: Adam<f64>,
    pub updates: u64,
}

impl Sac {
    pub fn new(config: SacConfig, obs_dim: usize, action_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let policy = Policy::new(obs_dim, action_dim, &config.net_arch, config.log_std_init, rng)?;
        let mut critic_sizes = vec![obs_dim + action_dim];
        critic_sizes.extend_from_slice(&config.net_arch);
        critic_sizes.push(1);
        let critics = [Mlp::new(&critic_sizes, rng)?, Mlp::new(&critic_sizes, rng)?];
        let targets = critics.clone();
        let lr = config.learning_rate;
        Ok(Self {
            target_entropy: config.target_entropy.unwrap_or(-(action_dim as f64)),
            log_alpha: config.initial_alpha.ln(),
            actor_opt: Adam::new(policy.net.params().len(), lr),
            critic_opts: [
                Adam::new(critics[0].params().len(), lr),
                Adam::new(critics[1].params().len(), lr),
            ],
            alpha_opt: Adam::new(1, lr),
            policy,
            critics,
            targets,
            config,
            updates: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    /// y = r + (1 − done)·discount·(min(Q′₁, Q′₂)(s′, a′) − α·log π(a′|s′)),
    /// with a′ freshly drawn from the current policy.
    pub fn critic_target(&self, batch: &Batch, alpha: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let out = self.policy.net.forward(&batch.next_observations)?;
        let sample = self.policy.sample_batch(&out, rng);
        let input = batch.next_observations.hstack(&sample.actions)?;
        let q1 = self.targets[0].forward(&input)?;
        let q2 = self.targets[1].forward(&input)?;
        let discount = self.config.discount;
        Ok((0..batch.rewards.len())
            .map(|i| {
                if batch.dones[i] {
                    batch.rewards[i]
                } else {
                    let q = q1.data[i].min(q2.data[i]);
                    batch.rewards[i] + discount * (q - alpha * sample.log_probs[i])
                }
            })
            .collect())
    }

    /// One gradient step on critics, actor and temperature, followed by the
    /// soft target update. Nothing is modified when a loss or gradient turns
    /// out non-finite.
    pub fn update(&mut self, batch: &Batch, rng: &mut impl Rng) -> Result<Losses> {
        let n = batch.rewards.len();
        let inv_n = 1.0 / n as f64;
        let alpha = self.alpha();
        let targets = self.critic_target(batch, alpha, rng)?;

        // Critics: 0.5·Σ_k mean((Q_k − y)²)
        let critic_input = batch.observations.hstack(&batch.actions)?;
        let mut critic_loss = 0.0;
        let mut new_critics = self.critics.clone();
        let mut new_critic_opts = self.critic_opts.clone();
        for k in 0..2 {
            let mut tape = GradientTape::new();
            let q = self.critics[k].forward_recorded(&mut tape, &critic_input)?;
            let mut d: Matrix<f64> = Matrix::zeros(n, 1);
            for i in 0..n {
                let err = q.data[i] - targets[i];
                critic_loss += 0.5 * err * err * inv_n;
                d.data[i] = err * inv_n;
            }
            let mut grads = Gradients::for_net(&self.critics[k]);
            self.critics[k].backward(&tape, &d, &mut grads)?;
            if !grads.all_finite() {
                return Err(SacError::NonFinite {
                    what: "critic gradient",
                    detail: format!("critic {k}"),
                });
            }
            new_critic_opts[k].step(new_critics[k].params_mut(), &grads.values)?;
        }
        if !critic_loss.is_finite() {
            return Err(SacError::NonFinite {
                what: "critic loss",
                detail: critic_loss.to_string(),
            });
        }

        // Actor: mean(α·log π(a|s) − min_k Q_k(s, a)), a reparameterized.
        let d = self.policy.action_dim;
        let obs_dim = batch.observations.cols;
        let mut actor_tape = GradientTape::new();
        let out = self.policy.net.forward_recorded(&mut actor_tape, &batch.observations)?;
        let sample = self.policy.sample_batch(&out, rng);
        let q_input = batch.observations.hstack(&sample.actions)?;
        let mut q_tapes = [GradientTape::new(), GradientTape::new()];
        let q1 = new_critics[0].forward_recorded(&mut q_tapes[0], &q_input)?;
        let q2 = new_critics[1].forward_recorded(&mut q_tapes[1], &q_input)?;
        let mut actor_loss = 0.0;
        let mut dq: [Matrix<f64>; 2] = [Matrix::zeros(n, 1), Matrix::zeros(n, 1)];
        for i in 0..n {
            let (q, k) = if q1.data[i] <= q2.data[i] {
                (q1.data[i], 0)
            } else {
                (q2.data[i], 1)
            };
            actor_loss += (alpha * sample.log_probs[i] - q) * inv_n;
            dq[k].data[i] = -inv_n;
        }
        let mut d_action: Matrix<f64> = Matrix::zeros(n, d);
        for k in 0..2 {
            let mut scratch = Gradients::for_net(&new_critics[k]);
            let d_input = new_critics[k].backward(&q_tapes[k], &dq[k], &mut scratch)?;
            for i in 0..n {
                for j in 0..d {
                    let v = d_action.get(i, j) + d_input.get(i, obs_dim + j);
                    d_action.set(i, j, v);
                }
            }
        }
        let mut d_out: Matrix<f64> = Matrix::zeros(n, 2 * d);
        for i in 0..n {
            for j in 0..d {
                let a = sample.actions.get(i, j);
                let one_minus = 1.0 - a * a;
                // ∂/∂u of −log(1 − tanh²u + ε), scaled by α/n
                let d_squash = alpha * inv_n * 2.0 * a * one_minus / (one_minus + SQUASH_EPS);
                let d_u = d_squash + d_action.get(i, j) * one_minus;
                d_out.set(i, j, d_u);
                if !sample.clamped[i * d + j] {
                    let sigma_xi = sample.log_std.get(i, j).exp() * sample.noise.get(i, j);
                    d_out.set(i, d + j, -alpha * inv_n + d_u * sigma_xi);
                }
            }
        }
        let mut actor_grads = Gradients::for_net(&self.policy.net);
        self.policy.net.backward(&actor_tape, &d_out, &mut actor_grads)?;
        if !actor_loss.is_finite() || !actor_grads.all_finite() {
            return Err(SacError::NonFinite {
                what: "actor loss",
                detail: actor_loss.to_string(),
            });
        }

        // Temperature: −log α · mean(log π + target entropy)
        let mean_log_prob = sample.log_probs.iter().sum::<f64>() * inv_n;
        let alpha_grad = -(mean_log_prob + self.target_entropy);
        let alpha_loss = -self.log_alpha * (mean_log_prob + self.target_entropy);
        if !alpha_loss.is_finite() {
            return Err(SacError::NonFinite {
                what: "temperature loss",
                detail: alpha_loss.to_string(),
            });
        }

        // Commit.
        self.critics = new_critics;
        self.critic_opts = new_critic_opts;
        self.actor_opt.step(self.policy.net.params_mut(), &actor_grads.values)?;
        let mut log_alpha = [self.log_alpha];
        self.alpha_opt.step(&mut log_alpha, &[alpha_grad])?;
        self.log_alpha = log_alpha[0];
        let tau = self.config.tau;
        for k in 0..2 {
            self.critics[k].soft_update_into(&mut self.targets[k], tau)?;
        }
        self.updates += 1;
        Ok(Losses {
            critic: critic_loss,
            actor: actor_loss,
            alpha: alpha_loss,
            alpha_value: self.alpha(),
            entropy: -mean_log_prob,
        })
    }
}

/// One row of the learning curve, written at the end of every episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub episode_return: f64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: Policy,
    /// Policy with the best evaluation return, if any evaluation ran.
    pub best_policy: Option<(EvalPoint, Policy)>,
    pub curve: Vec<CurvePoint>,
    pub evals: Vec<EvalPoint>,
    pub updates: u64,
    pub skipped_updates: u64,
    pub buffer_len: usize,
    pub final_alpha: f64,
}

/// Episode seeds used by periodic evaluation.
pub fn eval_seeds(count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| 1_000_000_007 + i).collect()
}

/// Mean undiscounted return of deterministic episodes from the given seeds.
pub fn evaluate<E: Environment>(policy: &Policy, env: &mut E, seeds: &[u64]) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for &seed in seeds {
        let mut obs = env.reset(seed)?;
        loop {
            let (action, _) = policy.sample_action(&obs, SampleMode::Deterministic, &mut rng)?;
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
            obs = step.observation;
        }
    }
    Ok(total / seeds.len().max(1) as f64)
}

/// Mean return of uniformly random actions, as a reference level.
pub fn random_policy_return<E: Environment>(env: &mut E, seeds: &[u64], rng_seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let dim = env.action_size();
    let mut total = 0.0;
    for &seed in seeds {
        env.reset(seed)?;
        loop {
            let action: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let step = env.step(&action)?;
            total += step.reward;
            if step.done() {
                break;
            }
        }
    }
    Ok(total / seeds.len().max(1) as f64)
}

/// Progress callbacks; every method has a no-op default.
pub trait TrainObserver {
    fn on_episode(&mut self, _point: &CurvePoint) {}
    /// Return `false` to stop training early.
    fn on_eval(&mut self, _point: &EvalPoint, _policy: &Policy) -> bool {
        true
    }
}

impl TrainObserver for () {}

/// Runs `config.total_steps` environment interactions. Actions are uniform
/// random until `learning_starts`; afterwards every `train_freq` steps the
/// learner performs `gradient_steps` updates.
pub fn train<E: Environment>(
    mut make_env: impl FnMut() -> std::result::Result<E, EnvError>,
    config: &SacConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    let mut env = make_env()?;
    let mut eval_env = make_env()?;
    eval_env.set_evaluation_mode(true);
    let obs_dim = env.observation_size();
    let act_dim = env.action_size();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut agent = Sac::new(config.clone(), obs_dim, act_dim, &mut rng)?;
    let mut buffer = ReplayBuffer::new(config.buffer_size, obs_dim, act_dim);

    let mut curve = Vec::new();
    let mut evals = Vec::new();
    let mut best: Option<(EvalPoint, Policy)> = None;
    let mut last = Losses::default();
    let mut bad_streak = 0usize;
    let mut skipped = 0u64;
    let seeds = eval_seeds(config.eval_episodes);

    let mut obs = if config.total_steps > 0 {
        env.reset(episode_seeds.next_u64())?
    } else {
        Vec::new()
    };
    let mut episode_return = 0.0;
    for step in 0..config.total_steps {
        let action = if step < config.learning_starts {
            (0..act_dim).map(|_| rng.random_range(-1.0..=1.0)).collect()
        } else {
            agent.policy.sample_action(&obs, SampleMode::Stochastic, &mut rng)?.0
        };
        debug_assert!(action.iter().all(|a| (-1.0..=1.0).contains(a)));
        let out = env.step(&action)?;
        episode_return += out.reward;
        buffer.push(&Transition {
            observation: std::mem::take(&mut obs),
            action,
            reward: out.reward,
            next_observation: out.observation.clone(),
            done: !out.bootstrap,
        });
        if out.done() {
            let point = CurvePoint {
                step: step + 1,
                episode_return,
                critic_loss: last.critic,
                actor_loss: last.actor,
                alpha: agent.alpha(),
            };
            observer.on_episode(&point);
            curve.push(point);
            episode_return = 0.0;
            obs = env.reset(episode_seeds.next_u64())?;
        } else {
            obs = out.observation;
        }

        let done_steps = step + 1;
        if done_steps >= config.learning_starts
            && done_steps % config.train_freq == 0
            && buffer.len() >= config.batch_size
        {
            for _ in 0..config.gradient_steps {
                let batch = buffer.sample(config.batch_size, &mut rng);
                match agent.update(&batch, &mut rng) {
                    Ok(losses) => {
                        last = losses;
                        bad_streak = 0;
                    }
                    Err(SacError::NonFinite { .. }) => {
                        skipped += 1;
                        bad_streak += 1;
                        if bad_streak > 10 {
                            return Err(SacError::Diverged(bad_streak));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }

        if config.eval_interval > 0 && done_steps % config.eval_interval == 0 {
            let mean_return = evaluate(&agent.policy, &mut eval_env, &seeds)?;
            let point = EvalPoint {
                step: done_steps,
                mean_return,
            };
            evals.push(point);
            if best.as_ref().is_none_or(|(b, _)| mean_return > b.mean_return) {
                best = Some((point, agent.policy.clone()));
            }
            if !observer.on_eval(&point, &agent.policy) {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        final_alpha: agent.alpha(),
        updates: agent.updates,
        skipped_updates: skipped,
        buffer_len: buffer.len(),
        policy: agent.policy,
        best_policy: best,
        curve,
        evals,
    })
}

/// Writes the learning curve as CSV.
pub fn write_curve_csv(curve: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| SacError::Io(e.into()))?;
    let io = |e: csv::Error| SacError::Io(e.into());
    w.write_record(["step", "episode_return", "critic_loss", "actor_loss", "alpha"])
        .map_err(io)?;
    for p in curve {
        w.write_record([
            p.step.to_string(),
            p.episode_return.to_string(),
            p.critic_loss.to_string(),
            p.actor_loss.to_string(),
            p.alpha.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Metadata stored next to a policy checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub format: String,
    pub version: u32,
    pub action_dim: usize,
    pub config: SacConfig,
    pub steps: usize,
    pub evals: Vec<EvalPoint>,
}

pub const SIDECAR_FORMAT: &str = "pars-sac-policy";

impl Policy {
    /// Saves the network as `<path>` and metadata as `<path>.meta.json`.
    pub fn save(&self, path: impl AsRef<Path>, config: &SacConfig, steps: usize, evals: &[EvalPoint]) -> Result<()> {
        let path = path.as_ref();
        self.net.save_json(path)?;
        let sidecar = CheckpointSidecar {
            format: SIDECAR_FORMAT.into(),
            version: 1,
            action_dim: self.action_dim,
            config: config.clone(),
            steps,
            evals: evals.to_vec(),
        };
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| SacError::Checkpoint(e.to_string()))?;
        std::fs::write(sidecar_path(path), text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointSidecar)> {
        let path = path.as_ref();
        let net = Mlp::<f64>::load_json(path)?;
        let text = std::fs::read_to_string(sidecar_path(path))?;
        let sidecar: CheckpointSidecar =
            serde_json::from_str(&text).map_err(|e| SacError::Checkpoint(e.to_string()))?;
        if sidecar.format != SIDECAR_FORMAT || sidecar.version != 1 {
            return Err(SacError::Checkpoint(format!(
                "unsupported sidecar {} v{}",
                sidecar.format, sidecar.version
            )));
        }
        if net.output_size() != 2 * sidecar.action_dim {
            return Err(SacError::Checkpoint("network output does not match action_dim".into()));
        }
        Ok((
            Self {
                net,
                action_dim: sidecar.action_dim,
            },
            sidecar,
        ))
    }
}

pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    name.into()
}
