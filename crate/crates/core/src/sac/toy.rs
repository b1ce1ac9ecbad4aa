//! One-dimensional double integrator used to sanity-check the learner.
//!
//! x'' = a with a ∈ [−1, 1]. The episode starts 1 to 2 units away from the
//! origin at rest and lasts 200 steps of 0.1 s. Reward per step is
//! max(0, 1 − (x² + 0.1·v²)/4), so holding the origin earns 1.

use crate::env::{EnvError, EnvStep, Environment};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DT: f64 = 0.1;
pub const HORIZON: usize = 200;

#[derive(Debug, Clone, Default)]
pub struct DoubleIntegrator {
    x: f64,
    v: f64,
    steps: usize,
    active: bool,
}

impl DoubleIntegrator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn position(&self) -> f64 {
        self.x
    }

    pub fn velocity(&self) -> f64 {
        self.v
    }

    pub fn reward(x: f64, v: f64) -> f64 {
        (1.0 - (x * x + 0.1 * v * v) / 4.0).max(0.0)
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.x / 2.0, self.v / 2.0]
    }
}

impl Environment for DoubleIntegrator {
    fn observation_size(&self) -> usize {
        2
    }

    fn action_size(&self) -> usize {
        1
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        self.x = side * rng.random_range(1.0..2.0);
        self.v = 0.0;
        self.steps = 0;
        self.active = true;
        Ok(self.observe())
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        if !self.active {
            return Err(EnvError::NotReset);
        }
        if action.len() != 1 || !action[0].is_finite() {
            return Err(EnvError::BadAction {
                expected: 1,
                got: action.to_vec(),
            });
        }
        let a = action[0].clamp(-1.0, 1.0);
        self.x += self.v * DT + 0.5 * a * DT * DT;
        self.v += a * DT;
        self.steps += 1;
        let truncated = self.steps >= HORIZON;
        self.active = !truncated;
        Ok(EnvStep {
            observation: self.observe(),
            reward: Self::reward(self.x, self.v),
            terminated: false,
            truncated,
            bootstrap: true,
        })
    }
}
