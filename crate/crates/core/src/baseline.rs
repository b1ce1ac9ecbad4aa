//! Classical cascaded-PID recovery controller used as the comparison
//! baseline.
//!
//! Roll: bank angle error → roll-rate command → aileron.
//! Pitch: flight-path error → pitch-rate command → elevator. The pitch-rate
//! command is scaled by max(cos φ, 0), so the controller rolls towards
//! wings-level before it pitches. Gains are fixed (no scheduling) and
//! there is no load-factor protection.

use crate::env::{EnvConfig, EnvError, EpisodeLog, PilotRecoveryEnv};
use crate::flightdyn::{flight_path_angle, wrap_angle, AircraftState, ControlCommand};
use crate::reward::RewardSpec;
use crate::scenario::{run_scenario, Scenario};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid gains: {0}")]
    Invalid(String),
    #[error("cannot read gains: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse gains: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot write gains: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
}

/// Gains and limits of one PID loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoopGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on the integral term's contribution to the output.
    pub integrator_limit: f64,
    /// Symmetric output clamp.
    pub output_limit: f64,
}

impl LoopGains {
    fn validate(&self, name: &str) -> Result<(), BaselineError> {
        let ok = [self.kp, self.ki, self.kd, self.integrator_limit, self.output_limit]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.output_limit > 0.0;
        if ok {
            Ok(())
        } else {
            Err(BaselineError::Invalid(format!(
                "{name}: gains and limits must be finite and non-negative, output_limit positive"
            )))
        }
    }
}

/// Gains of the four loops, rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    /// Bank error (rad) → roll-rate command (rad/s).
    pub roll_angle: LoopGains,
    /// Roll-rate error (rad/s) → aileron.
    pub roll_rate: LoopGains,
    /// Flight-path error (rad) → pitch-rate command (rad/s).
    pub gamma: LoopGains,
    /// Pitch-rate error (rad/s) → elevator.
    pub pitch_rate: LoopGains,
}

impl Default for PidGains {
    /// Frozen result of [`tune`] from the hand-set starting point
    /// [`PidGains::untuned`]; also committed as `configs/baseline_gains.toml`.
    fn default() -> Self {
        Self {
            roll_angle: LoopGains {
                kp: 3.6680161728186853,
                ..Self::untuned().roll_angle
            },
            roll_rate: LoopGains {
                kp: 1.414213562373095,
                ..Self::untuned().roll_rate
            },
            gamma: LoopGains {
                kp: 1.8340080864093422,
                ..Self::untuned().gamma
            },
            pitch_rate: LoopGains {
                kp: 1.414213562373095,
                ki: 6.727171322029717,
                ..Self::untuned().pitch_rate
            },
        }
    }
}

impl PidGains {
    /// Starting point of the tuning search.
    pub fn untuned() -> Self {
        Self {
            roll_angle: LoopGains {
                kp: 1.0,
                ki: 0.0,
                kd: 0.0,
                integrator_limit: 0.0,
                output_limit: 12f64.to_radians(),
            },
            // Proportional only: φ already integrates p, and an integrator
            // here winds up against the aileron rate limit into a roll
            // limit cycle of a few degrees.
            roll_rate: LoopGains {
                kp: 1.0,
                ki: 0.0,
                kd: 0.0,
                integrator_limit: 0.0,
                output_limit: 1.0,
            },
            gamma: LoopGains {
                kp: 1.0,
                ki: 0.0,
                kd: 0.0,
                integrator_limit: 0.0,
                output_limit: 10f64.to_radians(),
            },
            pitch_rate: LoopGains {
                kp: 2.0,
                ki: 2.0,
                kd: 0.0,
                integrator_limit: 0.5,
                output_limit: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        self.roll_angle.validate("roll_angle")?;
        self.roll_rate.validate("roll_rate")?;
        self.gamma.validate("gamma")?;
        self.pitch_rate.validate("pitch_rate")?;
        if self.roll_rate.output_limit > 1.0 || self.pitch_rate.output_limit > 1.0 {
            return Err(BaselineError::Invalid("surface loop output_limit must be <= 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, BaselineError> {
        let gains: Self = toml::from_str(text)?;
        gains.validate()?;
        Ok(gains)
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self, BaselineError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String, BaselineError> {
        Ok(toml::to_string(self)?)
    }
}

/// One PID loop with conditional-integration anti-windup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pid {
    pub gains: LoopGains,
    integral: f64,
    previous_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: LoopGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            previous_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.previous_error = None;
    }

    /// Integral term's current contribution to the output.
    pub fn integral_term(&self) -> f64 {
        self.gains.ki * self.integral
    }

    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let g = self.gains;
        let derivative = self.previous_error.map_or(0.0, |e| (error - e) / dt);
        self.previous_error = Some(error);
        let unclamped_integral = self.integral + error * dt;
        let candidate = if g.ki > 0.0 {
            let limit = g.integrator_limit / g.ki;
            unclamped_integral.clamp(-limit, limit)
        } else {
            0.0
        };
        let raw = g.kp * error + g.ki * candidate + g.kd * derivative;
        let out = raw.clamp(-g.output_limit, g.output_limit);
        // Hold the integrator while saturated in the direction of the error.
        let saturated = raw != out && raw.signum() == error.signum();
        if !saturated {
            self.integral = candidate;
        }
        let held = g.kp * error + g.ki * self.integral + g.kd * derivative;
        held.clamp(-g.output_limit, g.output_limit)
    }
}

/// Cascaded roll and pitch recovery controller.
#[derive(Debug, Clone, PartialEq)]
pub struct PidController {
    pub gains: PidGains,
    roll_angle: Pid,
    roll_rate: Pid,
    gamma: Pid,
    pitch_rate: Pid,
}

impl PidController {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            roll_angle: Pid::new(gains.roll_angle),
            roll_rate: Pid::new(gains.roll_rate),
            gamma: Pid::new(gains.gamma),
            pitch_rate: Pid::new(gains.pitch_rate),
        }
    }

    pub fn reset(&mut self) {
        self.roll_angle.reset();
        self.roll_rate.reset();
        self.gamma.reset();
        self.pitch_rate.reset();
    }

    /// Stick command driving φ and γ to zero.
    pub fn step(&mut self, state: &AircraftState, dt: f64) -> ControlCommand {
        assert!(dt > 0.0, "dt must be positive");
        let phi = wrap_angle(state.phi);
        let gamma = flight_path_angle(state).unwrap_or(0.0);
        let p_cmd = self.roll_angle.update(-phi, dt);
        let aileron = self.roll_rate.update(p_cmd - state.p, dt);
        let q_cmd = self.gamma.update(-gamma, dt) * phi.cos().max(0.0);
        let elevator = self.pitch_rate.update(q_cmd - state.q, dt);
        let cmd = ControlCommand::new(aileron, elevator);
        if cmd.aileron.is_finite() && cmd.elevator.is_finite() {
            cmd
        } else {
            ControlCommand::NEUTRAL
        }
    }

    /// Adapter for [`crate::env::run_episode`]: ignores the observation and
    /// steps on the true state at the environment's control rate.
    pub fn controller(
        &mut self,
        dt: f64,
    ) -> impl FnMut(&[f64], &AircraftState) -> Result<Vec<f64>, EnvError> + '_ {
        self.reset();
        move |_, state| {
            let c = self.step(state, dt);
            Ok(vec![c.aileron, c.elevator])
        }
    }
}

/// Seconds of cost per degree of RMS attitude error left in the last
/// [`RESIDUAL_WINDOW_S`] of a tuning episode.
pub const RESIDUAL_WEIGHT: f64 = 20.0;
pub const RESIDUAL_WINDOW_S: f64 = 10.0;

/// Actuator rate limit, as a fraction of nominal, of the degraded plant
/// that [`tuning_cost`] also flies.
pub const ROBUST_RATE_FRACTION: f64 = 0.35;

/// Cost of a gain set: mean over `(scenario, seed)` starts of the later of
/// the φ and γ settle times, with `horizon_s` charged for every channel
/// that never settles or an episode that leaves the envelope. Residual
/// motion at the end of the horizon is charged too, since a limit cycle
/// smaller than the settle tolerance would otherwise be free. Every start
/// is flown on the nominal plant and on one whose actuators slew at
/// [`ROBUST_RATE_FRACTION`] of the nominal rate, which keeps the search
/// away from gains on the edge of a rate-limited oscillation.
pub fn tuning_cost(
    gains: &PidGains,
    env_config: &EnvConfig,
    spec: &RewardSpec,
    starts: &[(Scenario, u64)],
    horizon_s: f64,
) -> Result<f64, BaselineError> {
    let nominal = EnvConfig {
        terminate_on_success: false,
        timeout_s: horizon_s,
        ..env_config.clone()
    };
    let degraded = EnvConfig {
        actuator_rate_limit: nominal.actuator_rate_limit * ROBUST_RATE_FRACTION,
        ..nominal.clone()
    };
    let mut total = 0.0;
    for config in [nominal, degraded] {
        let dt = config.control_dt();
        let mut env = PilotRecoveryEnv::new(config, spec.clone())?;
        let mut pid = PidController::new(*gains);
        for &(scenario, seed) in starts {
            let (log, s) = run_scenario(&mut env, scenario, seed, 0, horizon_s, pid.controller(dt))?;
            let failed = s.termination.is_some_and(|t| t.is_failure());
            let t = match (s.phi_recovery_s, s.gamma_recovery_s) {
                (Some(a), Some(b)) if !failed => a.max(b),
                _ => horizon_s,
            };
            total += t + RESIDUAL_WEIGHT * residual_rms_deg(&log, horizon_s - RESIDUAL_WINDOW_S);
        }
    }
    Ok(total / (2 * starts.len()).max(1) as f64)
}

/// RMS of the combined φ and γ error from `from_s` on, degrees.
pub fn residual_rms_deg(log: &EpisodeLog, from_s: f64) -> f64 {
    let tail: Vec<f64> = log
        .rows
        .iter()
        .filter(|r| r.t >= from_s)
        .map(|r| r.phi_deg * r.phi_deg + r.gamma_deg * r.gamma_deg)
        .collect();
    if tail.is_empty() {
        return 0.0;
    }
    (tail.iter().sum::<f64>() / tail.len() as f64).sqrt()
}

/// Multiplicative coordinate search over the outer P gains and the inner
/// P and pitch I gains. Each pass tries scaling every gain up and down by
/// `step`; the step halves (in log terms) whenever a full pass brings no
/// improvement.
pub fn tune(
    start: PidGains,
    env_config: &EnvConfig,
    spec: &RewardSpec,
    starts: &[(Scenario, u64)],
    horizon_s: f64,
    passes: usize,
    mut log: impl FnMut(usize, f64, &PidGains),
) -> Result<(PidGains, f64), BaselineError> {
    type Knob = fn(&mut PidGains) -> &mut f64;
    let knobs: [Knob; 5] = [
        |g| &mut g.roll_angle.kp,
        |g| &mut g.roll_rate.kp,
        |g| &mut g.gamma.kp,
        |g| &mut g.pitch_rate.kp,
        |g| &mut g.pitch_rate.ki,
    ];
    let mut best = start;
    let mut best_cost = tuning_cost(&best, env_config, spec, starts, horizon_s)?;
    log(0, best_cost, &best);
    let mut step = 2.0f64;
    for pass in 1..=passes {
        let mut improved = false;
        for knob in knobs {
            for factor in [step, 1.0 / step] {
                let mut candidate = best;
                *knob(&mut candidate) *= factor;
                if candidate.validate().is_err() {
                    continue;
                }
                let cost = tuning_cost(&candidate, env_config, spec, starts, horizon_s)?;
                if cost < best_cost - 1e-9 {
                    best = candidate;
                    best_cost = cost;
                    improved = true;
                }
            }
        }
        log(pass, best_cost, &best);
        if !improved {
            step = step.sqrt();
            if step < 1.05 {
                break;
            }
        }
    }
    Ok((best, best_cost))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn level() -> AircraftState {
        AircraftState {
            u: 150.0,
            h: 3000.0,
            ..Default::default()
        }
    }

    #[test]
    fn quiet_at_setpoint() {
        let mut pid = PidController::new(PidGains::default());
        let c = pid.step(&level(), 0.1);
        assert!(c.aileron.abs() < 0.02 && c.elevator.abs() < 0.02, "{c:?}");
    }

    #[test]
    fn rolls_right_from_left_bank() {
        let mut pid = PidController::new(PidGains::default());
        let s = AircraftState {
            phi: (-100f64).to_radians(),
            ..level()
        };
        assert!(pid.step(&s, 0.1).aileron > 0.0);
    }

    #[test]
    fn output_clamped_and_integrator_bounded() {
        let g = LoopGains {
            kp: 10.0,
            ki: 5.0,
            kd: 0.0,
            integrator_limit: 0.2,
            output_limit: 1.0,
        };
        let mut pid = Pid::new(g);
        for _ in 0..1000 {
            let out = pid.update(3.0, 0.1);
            assert!(out.abs() <= 1.0);
            assert!(pid.integral_term().abs() <= 0.2 + 1e-12);
        }
        // Saturated the whole time, so the integrator never charged.
        assert_eq!(pid.integral_term(), 0.0);
    }

    #[test]
    fn integrator_limit_respected_when_unsaturated() {
        let g = LoopGains {
            kp: 0.0,
            ki: 1.0,
            kd: 0.0,
            integrator_limit: 0.2,
            output_limit: 1.0,
        };
        let mut pid = Pid::new(g);
        for _ in 0..100 {
            pid.update(1.0, 0.1);
        }
        assert!((pid.integral_term() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn gains_round_trip_through_toml() {
        let g = PidGains::default();
        let text = g.to_toml_string().unwrap();
        assert_eq!(PidGains::from_toml_str(&text).unwrap(), g);
        assert!(PidGains::from_toml_str("roll_angle = 1").is_err());
    }

    #[test]
    fn committed_gains_match_default() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/baseline_gains.toml");
        assert_eq!(PidGains::from_toml_file(path).unwrap(), PidGains::default());
    }

    #[test]
    fn rejects_surface_limit_above_one() {
        let mut g = PidGains::default();
        g.pitch_rate.output_limit = 1.5;
        assert!(g.validate().is_err());
    }
}
