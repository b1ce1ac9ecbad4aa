//! Named evaluation scenarios and recovery metrics.

use crate::env::{EnvError, EpisodeLog, InitialCondition, PilotRecoveryEnv, Termination};
use crate::flightdyn::AircraftState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Airspeed and altitude used for the first episode of a named case.
pub const CASE_AIRSPEED: f64 = 150.0;
pub const CASE_ALTITUDE: f64 = 4000.0;
/// Tolerance on |φ| and |γ| that counts as recovered, degrees.
pub const RECOVERY_TOLERANCE_DEG: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Scenario {
    /// φ = −100°, γ = 45°
    Case1,
    /// φ = −30°, γ = 60°
    Case2,
    /// Drawn from the environment's upset sampler.
    Sampled,
    Explicit { phi_deg: f64, gamma_deg: f64 },
}

impl Scenario {
    pub fn angles_deg(self) -> Option<(f64, f64)> {
        match self {
            Scenario::Case1 => Some((-100.0, 45.0)),
            Scenario::Case2 => Some((-30.0, 60.0)),
            Scenario::Explicit { phi_deg, gamma_deg } => Some((phi_deg, gamma_deg)),
            Scenario::Sampled => None,
        }
    }

    /// Resets `env` for episode `index`. Fixed-angle scenarios start at
    /// [`CASE_AIRSPEED`] and [`CASE_ALTITUDE`] for index 0; later indices
    /// draw airspeed and altitude from the sampler ranges using `seed`.
    pub fn reset(self, env: &mut PilotRecoveryEnv, seed: u64, index: usize) -> Result<Vec<f64>, EnvError> {
        let episode_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(index as u64);
        match self.angles_deg() {
            None => env.reset_sampled(episode_seed),
            Some((phi, gamma)) => {
                let (airspeed, altitude) = if index == 0 {
                    (CASE_AIRSPEED, CASE_ALTITUDE)
                } else {
                    let s = &env.config().sampler;
                    let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
                    (
                        rng.random_range(s.airspeed_range[0]..=s.airspeed_range[1]),
                        rng.random_range(s.altitude_range[0]..=s.altitude_range[1]),
                    )
                };
                env.reset_to(InitialCondition::from_degrees(phi, gamma, airspeed, altitude))
            }
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scenario::Case1 => f.write_str("case1"),
            Scenario::Case2 => f.write_str("case2"),
            Scenario::Sampled => f.write_str("sampled"),
            Scenario::Explicit { phi_deg, gamma_deg } => write!(f, "phi={phi_deg},gamma={gamma_deg}"),
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    /// Accepts `case1`, `case2`, `sampled` or `phi=<deg>,gamma=<deg>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "case1" => return Ok(Scenario::Case1),
            "case2" => return Ok(Scenario::Case2),
            "sampled" => return Ok(Scenario::Sampled),
            _ => {}
        }
        let mut phi = None;
        let mut gamma = None;
        for part in s.split(',') {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| format!("unknown scenario {s:?}"))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| format!("bad number in scenario {s:?}"))?;
            match key.trim() {
                "phi" => phi = Some(value),
                "gamma" => gamma = Some(value),
                other => return Err(format!("unknown scenario key {other:?}")),
            }
        }
        match (phi, gamma) {
            (Some(phi_deg), Some(gamma_deg)) if phi_deg.is_finite() && gamma_deg.is_finite() => {
                Ok(Scenario::Explicit { phi_deg, gamma_deg })
            }
            _ => Err(format!("scenario {s:?} needs both phi and gamma")),
        }
    }
}

/// Recovery metrics of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverySummary {
    pub initial_phi_deg: f64,
    pub initial_gamma_deg: f64,
    /// Time after which |φ| stays within the tolerance, s.
    pub phi_recovery_s: Option<f64>,
    pub gamma_recovery_s: Option<f64>,
    /// First time both |φ| and |γ| are within the tolerance, s.
    pub joint_recovery_s: Option<f64>,
    pub min_nz_g: f64,
    pub duration_s: f64,
    pub termination: Option<Termination>,
    /// Jointly recovered within `deadline_s` without a g violation.
    pub success: bool,
}

impl RecoverySummary {
    pub fn from_log(log: &EpisodeLog, g_floor: f64, deadline_s: f64) -> Self {
        let first = log.rows.first();
        let joint = log.first_joint_recovery(RECOVERY_TOLERANCE_DEG);
        let min_nz = log.min_load_factor();
        let g_violation = log.termination() == Some(Termination::GViolation) || min_nz < g_floor;
        Self {
            initial_phi_deg: first.map_or(f64::NAN, |r| r.phi_deg),
            initial_gamma_deg: first.map_or(f64::NAN, |r| r.gamma_deg),
            phi_recovery_s: log.settle_time(|r| r.phi_deg, RECOVERY_TOLERANCE_DEG),
            gamma_recovery_s: log.settle_time(|r| r.gamma_deg, RECOVERY_TOLERANCE_DEG),
            joint_recovery_s: joint,
            min_nz_g: min_nz,
            duration_s: log.rows.last().map_or(0.0, |r| r.t),
            termination: log.termination(),
            success: joint.is_some_and(|t| t <= deadline_s)
                && !g_violation
                && log.termination() != Some(Termination::EnvelopeViolation),
        }
    }
}

/// Runs one episode of `scenario` with `controller` and summarizes it.
pub fn run_scenario(
    env: &mut PilotRecoveryEnv,
    scenario: Scenario,
    seed: u64,
    index: usize,
    deadline_s: f64,
    controller: impl FnMut(&[f64], &AircraftState) -> Result<Vec<f64>, EnvError>,
) -> Result<(EpisodeLog, RecoverySummary), EnvError> {
    scenario.reset(env, seed, index)?;
    let log = crate::env::run_episode(env, controller)?;
    let g_floor = env.reward_spec().g_floor.unwrap_or(f64::NEG_INFINITY);
    let summary = RecoverySummary::from_log(&log, g_floor, deadline_s);
    Ok((log, summary))
}

/// Deterministic-policy controller for [`run_scenario`].
pub fn policy_controller(
    policy: &crate::sac::Policy,
) -> impl FnMut(&[f64], &AircraftState) -> Result<Vec<f64>, EnvError> + '_ {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    move |obs, _| {
        policy
            .sample_action(obs, crate::sac::SampleMode::Deterministic, &mut rng)
            .map(|(a, _)| a)
            .map_err(|e| EnvError::Controller(e.to_string()))
    }
}

/// Length of the episodes used to judge a recovery, s.
pub const RECOVERY_DEADLINE_S: f64 = 20.0;

/// Runs `episodes` episodes of each scenario without early success
/// termination and a [`RECOVERY_DEADLINE_S`] time limit.
pub fn recovery_trials(
    base: &crate::env::EnvConfig,
    spec: &crate::reward::RewardSpec,
    scenarios: &[Scenario],
    episodes: usize,
    seed: u64,
    mut controller: impl FnMut(&[f64], &AircraftState) -> Result<Vec<f64>, EnvError>,
) -> Result<Vec<(Scenario, Vec<RecoverySummary>)>, EnvError> {
    let config = crate::env::EnvConfig {
        terminate_on_success: false,
        timeout_s: RECOVERY_DEADLINE_S,
        ..base.clone()
    };
    let mut env = PilotRecoveryEnv::new(config, spec.clone())?;
    let mut out = Vec::new();
    for &scenario in scenarios {
        let mut summaries = Vec::new();
        for i in 0..episodes {
            let (_, s) = run_scenario(&mut env, scenario, seed, i, RECOVERY_DEADLINE_S, &mut controller)?;
            summaries.push(s);
        }
        out.push((scenario, summaries));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_scenarios() {
        assert_eq!("case1".parse::<Scenario>().unwrap(), Scenario::Case1);
        assert_eq!(
            "phi=-20,gamma=15".parse::<Scenario>().unwrap(),
            Scenario::Explicit {
                phi_deg: -20.0,
                gamma_deg: 15.0
            }
        );
        assert!("phi=3".parse::<Scenario>().is_err());
        assert!("case9".parse::<Scenario>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for s in [
            Scenario::Case1,
            Scenario::Case2,
            Scenario::Sampled,
            Scenario::Explicit {
                phi_deg: 10.5,
                gamma_deg: -30.0,
            },
        ] {
            assert_eq!(s.to_string().parse::<Scenario>().unwrap(), s);
        }
    }
}
