//! Episodic upset-recovery environment.
//!
//! Each control step holds the agent's stick command for five 50 Hz physics
//! substeps, passing it through the actuator model first. The load factor
//! is checked after every substep so a −g excursion ends the episode on the
//! step where it happens.

use crate::flightdyn::{
    flight_path_angle, load_factor, wrap_angle, Actuator, AeroModel, AircraftState, ControlCommand,
    FlightError, FlightModel,
};
use crate::reward::{RewardBreakdown, RewardError, RewardInputs, RewardSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("step called before reset")]
    NotReset,
    #[error("step called after the episode ended")]
    EpisodeOver,
    #[error("action must have {expected} finite entries, got {got:?}")]
    BadAction { expected: usize, got: Vec<f64> },
    #[error("initial condition rejected: {0}")]
    InitialCondition(String),
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("controller failed: {0}")]
    Controller(String),
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Minimal interface the learner needs from an episodic task.
pub trait Environment {
    fn observation_size(&self) -> usize;
    fn action_size(&self) -> usize;
    /// Starts a new episode whose randomness derives from `seed`.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError>;
    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError>;
    /// Switches between training and evaluation episodes. Tasks whose
    /// training episodes end early on success run them to the time limit
    /// in evaluation mode, so returns are comparable across policies.
    fn set_evaluation_mode(&mut self, _on: bool) {}
}

/// Generic step result.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    /// False only when the episode ended in an absorbing failure state, so
    /// the next state's value must not be bootstrapped.
    pub bootstrap: bool,
}

impl EnvStep {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

/// Why an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Success,
    GViolation,
    EnvelopeViolation,
    Timeout,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Success => "success",
            Termination::GViolation => "g_violation",
            Termination::EnvelopeViolation => "envelope_violation",
            Termination::Timeout => "timeout",
        }
    }

    pub fn is_failure(self) -> bool {
        matches!(self, Termination::GViolation | Termination::EnvelopeViolation)
    }
}

pub const OBSERVATION_SIZE: usize = 12;
pub const ACTION_SIZE: usize = 2;

/// Divisors applied to the raw observation entries, in order: φ, θ, γ
/// (rad), p, q, r (rad/s), α, β (rad), airspeed offset from nominal (m/s),
/// n_z (g), previous aileron and elevator (stick units).
pub const OBSERVATION_DIVISORS: [f64; OBSERVATION_SIZE] = [
    PI, FRAC_PI_2, FRAC_PI_2, PI, 1.0, 1.0, FRAC_PI_4, FRAC_PI_4, 100.0, 5.0, 1.0, 1.0,
];

pub const OBSERVATION_NAMES: [&str; OBSERVATION_SIZE] = [
    "phi", "theta", "gamma", "p", "q", "r", "alpha", "beta", "airspeed", "n_z", "prev_aileron",
    "prev_elevator",
];

/// How agent actions map to stick commands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ActionMode {
    /// The action is the stick position.
    Absolute,
    /// The action is a per-step stick increment, scaled by `max_step`.
    Incremental { max_step: f64 },
}

/// Level-flight hold required to declare a recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuccessCriterion {
    pub angle_tolerance_deg: f64,
    pub rate_tolerance_deg_s: f64,
    pub hold_s: f64,
}

impl Default for SuccessCriterion {
    fn default() -> Self {
        Self {
            angle_tolerance_deg: 2.0,
            rate_tolerance_deg_s: 3.0,
            hold_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub min_altitude: f64,
    pub max_alpha_deg: f64,
    pub min_airspeed: f64,
    pub max_airspeed: f64,
}

impl Default for Envelope {
    fn default() -> Self {
        Self {
            min_altitude: 0.0,
            max_alpha_deg: 45.0,
            min_airspeed: 40.0,
            max_airspeed: 350.0,
        }
    }
}

impl Envelope {
    pub fn contains(&self, state: &AircraftState) -> bool {
        let speed = state.airspeed();
        state.h > self.min_altitude
            && state.alpha().abs().to_degrees() <= self.max_alpha_deg
            && speed >= self.min_airspeed
            && speed <= self.max_airspeed
    }
}

/// One level-flight sample for the success check. Angles in radians,
/// rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSample {
    pub t: f64,
    pub phi: f64,
    pub gamma: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl LevelSample {
    fn within(&self, c: &SuccessCriterion) -> bool {
        let angle = c.angle_tolerance_deg.to_radians();
        let rate = c.rate_tolerance_deg_s.to_radians();
        wrap_angle(self.phi).abs() < angle
            && self.gamma.abs() < angle
            && self.p.abs() < rate
            && self.q.abs() < rate
            && self.r.abs() < rate
    }
}

/// True iff the window spans at least `hold_s` and every sample in it is
/// within the level-flight tolerances.
pub fn success_criterion(window: &[LevelSample], criterion: &SuccessCriterion) -> bool {
    let (Some(first), Some(last)) = (window.first(), window.last()) else {
        return false;
    };
    last.t - first.t >= criterion.hold_s - 1e-9 && window.iter().all(|s| s.within(criterion))
}

/// Upset-region sampler over a (φ, γ) grid.
///
/// A state is an upset when pitch attitude is above `pitch_up_deg`, below
/// −`pitch_down_deg`, or |bank| exceeds `bank_deg`. Grid cells that hold
/// at least one upset point are eligible; sampling picks an eligible cell
/// uniformly and then an upset point inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditionSampler {
    pub pitch_up_deg: f64,
    pub pitch_down_deg: f64,
    pub bank_deg: f64,
    pub phi_cells: usize,
    pub gamma_cells: usize,
    /// Flight-path angle range covered by the grid, degrees.
    pub gamma_range_deg: [f64; 2],
    /// Initial airspeed range, m/s.
    pub airspeed_range: [f64; 2],
    /// Initial altitude band, m.
    pub altitude_range: [f64; 2],
}

impl Default for InitialConditionSampler {
    fn default() -> Self {
        Self {
            pitch_up_deg: 25.0,
            pitch_down_deg: 10.0,
            bank_deg: 45.0,
            phi_cells: 12,
            gamma_cells: 6,
            gamma_range_deg: [-60.0, 70.0],
            airspeed_range: [130.0, 170.0],
            altitude_range: [2000.0, 6000.0],
        }
    }
}

/// Explicit starting point. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCondition {
    pub phi: f64,
    pub gamma: f64,
    pub airspeed: f64,
    pub altitude: f64,
}

impl InitialCondition {
    pub fn from_degrees(phi_deg: f64, gamma_deg: f64, airspeed: f64, altitude: f64) -> Self {
        Self {
            phi: phi_deg.to_radians(),
            gamma: gamma_deg.to_radians(),
            airspeed,
            altitude,
        }
    }
}

/// Pitch attitude that yields flight-path angle `gamma` at bank `phi` with
/// angle of attack `alpha` and no sideslip.
pub fn pitch_for_gamma(phi: f64, gamma: f64, alpha: f64) -> f64 {
    // sin γ = cos α sin θ − sin α cos φ cos θ = R sin(θ + ε)
    let a = alpha.cos();
    let b = -alpha.sin() * phi.cos();
    let radius = (a * a + b * b).sqrt();
    let eps = b.atan2(a);
    (gamma.sin() / radius).clamp(-1.0, 1.0).asin() - eps
}

impl InitialConditionSampler {
    pub fn is_upset(&self, phi: f64, theta: f64) -> bool {
        let theta_deg = theta.to_degrees();
        theta_deg > self.pitch_up_deg
            || theta_deg < -self.pitch_down_deg
            || wrap_angle(phi).abs().to_degrees() > self.bank_deg
    }

    fn cell_bounds(&self, cell: usize) -> ([f64; 2], [f64; 2]) {
        let i = cell / self.gamma_cells;
        let j = cell % self.gamma_cells;
        let phi_w = 360.0 / self.phi_cells as f64;
        let [g_lo, g_hi] = self.gamma_range_deg;
        let gamma_w = (g_hi - g_lo) / self.gamma_cells as f64;
        let phi = [-180.0 + i as f64 * phi_w, -180.0 + (i + 1) as f64 * phi_w];
        let gamma = [g_lo + j as f64 * gamma_w, g_lo + (j + 1) as f64 * gamma_w];
        (phi, gamma)
    }

    pub fn cell_count(&self) -> usize {
        self.phi_cells * self.gamma_cells
    }

    /// Grid cell holding (φ, γ) in degrees, if inside the grid.
    pub fn cell_of(&self, phi_deg: f64, gamma_deg: f64) -> Option<usize> {
        let phi_w = 360.0 / self.phi_cells as f64;
        let [g_lo, g_hi] = self.gamma_range_deg;
        if !(g_lo..=g_hi).contains(&gamma_deg) {
            return None;
        }
        let phi = wrap_angle(phi_deg.to_radians()).to_degrees();
        let i = (((phi + 180.0) / phi_w).floor() as usize).min(self.phi_cells - 1);
        let gamma_w = (g_hi - g_lo) / self.gamma_cells as f64;
        let j = (((gamma_deg - g_lo) / gamma_w).floor() as usize).min(self.gamma_cells - 1);
        Some(i * self.gamma_cells + j)
    }

    /// Cells containing at least one upset point, checked on a fine
    /// sub-grid at the nominal angle of attack.
    pub fn eligible_cells(&self, alpha: f64) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&cell| {
                let (phi, gamma) = self.cell_bounds(cell);
                (0..=8).any(|a| {
                    (0..=8).any(|b| {
                        let p = (phi[0] + (phi[1] - phi[0]) * a as f64 / 8.0).to_radians();
                        let g = (gamma[0] + (gamma[1] - gamma[0]) * b as f64 / 8.0).to_radians();
                        self.is_upset(p, pitch_for_gamma(p, g, alpha))
                    })
                })
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if self.phi_cells == 0 || self.gamma_cells == 0 {
            return bad("sampler grid needs at least one cell per axis");
        }
        let [g_lo, g_hi] = self.gamma_range_deg;
        if !(g_lo < g_hi && g_lo > -85.0 && g_hi < 85.0) {
            return bad("gamma range must be increasing and within (-85, 85) degrees");
        }
        for (name, [lo, hi]) in [("airspeed", self.airspeed_range), ("altitude", self.altitude_range)] {
            if !(lo <= hi && lo > 0.0) {
                return Err(EnvError::Config(format!("{name} range must be positive and ordered")));
            }
        }
        Ok(())
    }

    /// Draws an upset initial condition. `alpha_of` gives the trim angle of
    /// attack for an airspeed.
    pub fn sample(
        &self,
        rng: &mut impl Rng,
        alpha_of: impl Fn(f64) -> f64,
    ) -> Result<(InitialCondition, usize), EnvError> {
        let [v_lo, v_hi] = self.airspeed_range;
        let airspeed = if v_hi > v_lo { rng.random_range(v_lo..=v_hi) } else { v_lo };
        let [h_lo, h_hi] = self.altitude_range;
        let altitude = if h_hi > h_lo { rng.random_range(h_lo..=h_hi) } else { h_lo };
        let alpha = alpha_of(airspeed);
        let cells = self.eligible_cells(alpha);
        if cells.is_empty() {
            return Err(EnvError::Config("sampler grid has no upset cells".into()));
        }
        let cell = cells[rng.random_range(0..cells.len())];
        let (phi_b, gamma_b) = self.cell_bounds(cell);
        for _ in 0..10_000 {
            let phi = rng.random_range(phi_b[0]..phi_b[1]).to_radians();
            let gamma = rng.random_range(gamma_b[0]..gamma_b[1]).to_radians();
            if self.is_upset(phi, pitch_for_gamma(phi, gamma, alpha)) {
                let ic = InitialCondition {
                    phi: wrap_angle(phi),
                    gamma,
                    airspeed,
                    altitude,
                };
                return Ok((ic, cell));
            }
        }
        Err(EnvError::Config(format!("could not draw an upset point in cell {cell}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub aero: AeroModel,
    /// Airspeed the observation is centered on, m/s.
    pub nominal_airspeed: f64,
    pub physics_dt: f64,
    pub substeps: usize,
    pub actuator_time_constant: f64,
    pub actuator_rate_limit: f64,
    pub timeout_s: f64,
    pub success: SuccessCriterion,
    pub terminate_on_success: bool,
    pub envelope: Envelope,
    pub action_mode: ActionMode,
    pub sampler: InitialConditionSampler,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            aero: AeroModel::default(),
            nominal_airspeed: 150.0,
            physics_dt: 0.02,
            substeps: 5,
            actuator_time_constant: 0.05,
            actuator_rate_limit: 2.0,
            timeout_s: 60.0,
            success: SuccessCriterion::default(),
            terminate_on_success: true,
            envelope: Envelope::default(),
            action_mode: ActionMode::Absolute,
            sampler: InitialConditionSampler::default(),
        }
    }
}

impl EnvConfig {
    pub fn control_dt(&self) -> f64 {
        self.physics_dt * self.substeps as f64
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.aero.validate()?;
        self.sampler.validate()?;
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if !(self.physics_dt > 0.0 && self.physics_dt <= crate::flightdyn::MAX_DT) {
            return bad("physics_dt must lie in (0, 0.05]");
        }
        if self.substeps == 0 {
            return bad("substeps must be >= 1");
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout_s must be positive");
        }
        if !(self.actuator_time_constant > 0.0 && self.actuator_rate_limit > 0.0) {
            return bad("actuator constants must be positive");
        }
        if let ActionMode::Incremental { max_step } = self.action_mode {
            if !(max_step > 0.0 && max_step <= 2.0) {
                return bad("incremental max_step must lie in (0, 2]");
            }
        }
        Ok(())
    }
}

/// Everything recorded about one control step besides the reward.
#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub breakdown: RewardBreakdown,
    pub state: AircraftState,
    pub gamma: f64,
    pub load_factor: f64,
    /// Lowest load factor seen over the substeps of this control step.
    pub min_load_factor: f64,
    pub command: ControlCommand,
    pub surfaces: ControlCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
    pub termination: Option<Termination>,
    pub info: StepInfo,
}

/// The upset-recovery task.
#[derive(Debug, Clone)]
pub struct PilotRecoveryEnv {
    config: EnvConfig,
    spec: RewardSpec,
    model: FlightModel,
    state: AircraftState,
    actuator: Actuator,
    prev_command: ControlCommand,
    window: VecDeque<LevelSample>,
    started: bool,
    finished: bool,
    initial: Option<InitialCondition>,
    evaluation_mode: bool,
}

impl PilotRecoveryEnv {
    pub fn new(config: EnvConfig, spec: RewardSpec) -> Result<Self, EnvError> {
        config.validate()?;
        spec.validate()?;
        let model = FlightModel::new(config.aero.clone(), 0.0)?;
        let actuator = Actuator {
            time_constant: config.actuator_time_constant,
            rate_limit: config.actuator_rate_limit,
            position: ControlCommand::NEUTRAL,
        };
        Ok(Self {
            config,
            spec,
            model,
            state: AircraftState::default(),
            actuator,
            prev_command: ControlCommand::NEUTRAL,
            window: VecDeque::new(),
            started: false,
            finished: false,
            initial: None,
            evaluation_mode: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn reward_spec(&self) -> &RewardSpec {
        &self.spec
    }

    pub fn state(&self) -> &AircraftState {
        &self.state
    }

    pub fn surfaces(&self) -> ControlCommand {
        self.actuator.position
    }

    pub fn previous_command(&self) -> ControlCommand {
        self.prev_command
    }

    pub fn thrust(&self) -> f64 {
        self.model.thrust
    }

    pub fn initial_condition(&self) -> Option<InitialCondition> {
        self.initial
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn trim_alpha(&self, airspeed: f64) -> f64 {
        FlightModel::trim(&self.config.aero, airspeed, 4000.0)
            .map(|t| t.state.alpha())
            .unwrap_or(0.0)
    }

    /// Samples an upset condition from `seed` and resets to it.
    pub fn reset_sampled(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ic, _) = self.config.sampler.sample(&mut rng, |v| self.trim_alpha(v))?;
        self.reset_to(ic)
    }

    /// Places the aircraft at an explicit condition: wings at bank φ,
    /// flight path γ, trim angle of attack and thrust for the airspeed, no
    /// rotation.
    pub fn reset_to(&mut self, ic: InitialCondition) -> Result<Vec<f64>, EnvError> {
        let reject = |m: String| Err(EnvError::InitialCondition(m));
        if ![ic.phi, ic.gamma, ic.airspeed, ic.altitude].iter().all(|x| x.is_finite()) {
            return reject(format!("non-finite values in {ic:?}"));
        }
        if ic.gamma.abs() > 85f64.to_radians() {
            return reject(format!("|gamma| = {:.1} deg exceeds 85 deg", ic.gamma.to_degrees()));
        }
        if ic.altitude <= self.config.envelope.min_altitude {
            return reject(format!("altitude {} m below the envelope floor", ic.altitude));
        }
        let env = &self.config.envelope;
        if ic.airspeed < env.min_airspeed || ic.airspeed > env.max_airspeed {
            return reject(format!("airspeed {} m/s outside the envelope", ic.airspeed));
        }
        let trim = FlightModel::trim(&self.config.aero, ic.airspeed, ic.altitude)
            .map_err(|e| EnvError::InitialCondition(e.to_string()))?;
        let alpha = trim.state.alpha();
        let phi = wrap_angle(ic.phi);
        let theta = pitch_for_gamma(phi, ic.gamma, alpha);
        self.state = AircraftState {
            phi,
            theta,
            psi: 0.0,
            p: 0.0,
            q: 0.0,
            r: 0.0,
            u: ic.airspeed * alpha.cos(),
            v: 0.0,
            w: ic.airspeed * alpha.sin(),
            h: ic.altitude,
            t: 0.0,
        };
        self.model.thrust = trim.thrust;
        self.actuator.position = ControlCommand::NEUTRAL;
        self.prev_command = ControlCommand::NEUTRAL;
        self.window.clear();
        self.started = true;
        self.finished = false;
        self.initial = Some(ic);
        Ok(self.observe())
    }

    pub fn observe(&self) -> Vec<f64> {
        let s = &self.state;
        let gamma = flight_path_angle(s).unwrap_or(0.0);
        let nz = load_factor(&self.config.aero, s, self.actuator.position);
        let raw = [
            s.phi,
            s.theta,
            gamma,
            s.p,
            s.q,
            s.r,
            s.alpha(),
            s.beta(),
            s.airspeed() - self.config.nominal_airspeed,
            nz,
            self.prev_command.aileron,
            self.prev_command.elevator,
        ];
        raw.iter()
            .zip(OBSERVATION_DIVISORS.iter())
            .map(|(x, d)| x / d)
            .collect()
    }

    fn command_for(&self, action: &[f64]) -> Result<ControlCommand, EnvError> {
        if action.len() != ACTION_SIZE || !action.iter().all(|a| a.is_finite()) {
            return Err(EnvError::BadAction {
                expected: ACTION_SIZE,
                got: action.to_vec(),
            });
        }
        let raw = ControlCommand::new(action[0], action[1]);
        Ok(match self.config.action_mode {
            ActionMode::Absolute => raw,
            ActionMode::Incremental { max_step } => ControlCommand::new(
                self.prev_command.aileron + raw.aileron * max_step,
                self.prev_command.elevator + raw.elevator * max_step,
            ),
        })
    }

    /// Advances one control period.
    pub fn step_command(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.started {
            return Err(EnvError::NotReset);
        }
        if self.finished {
            return Err(EnvError::EpisodeOver);
        }
        let command = self.command_for(action)?;
        let g_floor = self.spec.g_floor;
        let mut min_nz = f64::INFINITY;
        let mut failure = None;
        for _ in 0..self.config.substeps {
            let surfaces = self.actuator.update(command, self.config.physics_dt);
            self.state = self.model.step(&self.state, surfaces, self.config.physics_dt)?;
            let nz = load_factor(&self.config.aero, &self.state, surfaces);
            min_nz = min_nz.min(nz);
            if g_floor.is_some_and(|floor| nz < floor) {
                failure = Some(Termination::GViolation);
                break;
            }
            if !self.config.envelope.contains(&self.state) {
                failure = Some(Termination::EnvelopeViolation);
                break;
            }
        }

        let gamma = flight_path_angle(&self.state)?;
        let breakdown = self.spec.evaluate(&RewardInputs {
            phi: self.state.phi,
            gamma,
            action: command,
            prev_action: self.prev_command,
            dt: self.config.control_dt(),
        });

        self.window.push_back(LevelSample {
            t: self.state.t,
            phi: self.state.phi,
            gamma,
            p: self.state.p,
            q: self.state.q,
            r: self.state.r,
        });
        let hold_steps = (self.config.success.hold_s / self.config.control_dt()).round() as usize + 1;
        while self.window.len() > hold_steps {
            self.window.pop_front();
        }
        self.prev_command = command;

        let termination = if failure.is_some() {
            failure
        } else if self.config.terminate_on_success && !self.evaluation_mode
            && success_criterion(self.window.make_contiguous(), &self.config.success)
        {
            Some(Termination::Success)
        } else if self.state.t >= self.config.timeout_s - 1e-9 {
            Some(Termination::Timeout)
        } else {
            None
        };
        let reward = match termination {
            Some(t) if t.is_failure() => 0.0,
            _ => breakdown.total,
        };
        let terminated = termination.is_some_and(|t| t != Termination::Timeout);
        let truncated = termination == Some(Termination::Timeout);
        self.finished = terminated || truncated;
        let surfaces = self.actuator.position;
        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            terminated,
            truncated,
            termination,
            info: StepInfo {
                breakdown,
                state: self.state,
                gamma,
                load_factor: load_factor(&self.config.aero, &self.state, surfaces),
                min_load_factor: min_nz,
                command,
                surfaces,
            },
        })
    }
}

impl Environment for PilotRecoveryEnv {
    fn observation_size(&self) -> usize {
        OBSERVATION_SIZE
    }

    fn action_size(&self) -> usize {
        ACTION_SIZE
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>, EnvError> {
        self.reset_sampled(seed)
    }

    fn set_evaluation_mode(&mut self, on: bool) {
        self.evaluation_mode = on;
    }

    fn step(&mut self, action: &[f64]) -> Result<EnvStep, EnvError> {
        let out = self.step_command(action)?;
        Ok(EnvStep {
            bootstrap: !out.termination.is_some_and(Termination::is_failure),
            observation: out.observation,
            reward: out.reward,
            terminated: out.terminated,
            truncated: out.truncated,
        })
    }
}

/// One row of an episode log. Angles in degrees, body rates in deg/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub phi_deg: f64,
    pub gamma_deg: f64,
    pub theta_deg: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub alpha_deg: f64,
    pub nz_g: f64,
    pub aileron: f64,
    pub elevator: f64,
    pub reward: f64,
    /// Contribution of each reward component, in spec order.
    pub components: Vec<f64>,
    pub termination: Option<Termination>,
}

impl LogRow {
    fn from_parts(
        state: &AircraftState,
        gamma: f64,
        nz: f64,
        command: ControlCommand,
        reward: f64,
        components: Vec<f64>,
        termination: Option<Termination>,
    ) -> Self {
        Self {
            t: state.t,
            phi_deg: state.phi.to_degrees(),
            gamma_deg: gamma.to_degrees(),
            theta_deg: state.theta.to_degrees(),
            p: state.p.to_degrees(),
            q: state.q.to_degrees(),
            r: state.r.to_degrees(),
            alpha_deg: state.alpha().to_degrees(),
            nz_g: nz,
            aileron: command.aileron,
            elevator: command.elevator,
            reward,
            components,
            termination,
        }
    }
}

pub const EPISODE_CSV_COLUMNS: [&str; 12] = [
    "t", "phi_deg", "gamma_deg", "theta_deg", "p", "q", "r", "alpha_deg", "nz_g", "aileron",
    "elevator", "reward",
];

/// Timestamped trajectory of one episode.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeLog {
    /// Reward component names, matching `LogRow::components`.
    pub component_names: Vec<String>,
    pub rows: Vec<LogRow>,
}

impl EpisodeLog {
    /// Starts a log at the environment's current (just reset) state.
    pub fn start(env: &PilotRecoveryEnv) -> Self {
        let names = env
            .reward_spec()
            .components
            .iter()
            .map(|c| c.source.name().to_string())
            .collect::<Vec<_>>();
        let state = env.state();
        let gamma = flight_path_angle(state).unwrap_or(0.0);
        let nz = load_factor(&env.config().aero, state, env.surfaces());
        let row = LogRow::from_parts(
            state,
            gamma,
            nz,
            env.previous_command(),
            0.0,
            vec![0.0; names.len()],
            None,
        );
        Self {
            component_names: names,
            rows: vec![row],
        }
    }

    pub fn record(&mut self, outcome: &StepOutcome) {
        let info = &outcome.info;
        self.rows.push(LogRow::from_parts(
            &info.state,
            info.gamma,
            info.load_factor.min(info.min_load_factor),
            info.command,
            outcome.reward,
            info.breakdown.terms.iter().map(|t| t.contribution).collect(),
            outcome.termination,
        ));
    }

    pub fn header(&self) -> Vec<String> {
        let mut header: Vec<String> = EPISODE_CSV_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.component_names.iter().map(|n| format!("r_{n}")));
        header.push("termination".into());
        header
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EnvError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.header())?;
        for row in &self.rows {
            let mut record: Vec<String> = [
                row.t,
                row.phi_deg,
                row.gamma_deg,
                row.theta_deg,
                row.p,
                row.q,
                row.r,
                row.alpha_deg,
                row.nz_g,
                row.aileron,
                row.elevator,
                row.reward,
            ]
            .iter()
            .map(|v| format_float(*v))
            .collect();
            record.extend(row.components.iter().map(|v| format_float(*v)));
            record.push(row.termination.map(|t| t.as_str().to_string()).unwrap_or_default());
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), EnvError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn termination(&self) -> Option<Termination> {
        self.rows.last().and_then(|r| r.termination)
    }

    pub fn min_load_factor(&self) -> f64 {
        self.rows.iter().map(|r| r.nz_g).fold(f64::INFINITY, f64::min)
    }

    /// First time from which |channel| stays within `tolerance_deg` for the
    /// rest of the log.
    pub fn settle_time(&self, channel: impl Fn(&LogRow) -> f64, tolerance_deg: f64) -> Option<f64> {
        let mut settled: Option<f64> = None;
        for row in &self.rows {
            if channel(row).abs() <= tolerance_deg {
                settled.get_or_insert(row.t);
            } else {
                settled = None;
            }
        }
        settled
    }

    /// First time at which both |φ| and |γ| are within `tolerance_deg`.
    pub fn first_joint_recovery(&self, tolerance_deg: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.phi_deg.abs() <= tolerance_deg && r.gamma_deg.abs() <= tolerance_deg)
            .map(|r| r.t)
    }
}

/// Shortest representation that round-trips.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v}")
}

/// Runs one episode from the environment's current reset state with a
/// controller that sees the observation and the true aircraft state.
pub fn run_episode(
    env: &mut PilotRecoveryEnv,
    mut controller: impl FnMut(&[f64], &AircraftState) -> Result<Vec<f64>, EnvError>,
) -> Result<EpisodeLog, EnvError> {
    let mut log = EpisodeLog::start(env);
    let mut obs = env.observe();
    loop {
        let action = controller(&obs, env.state())?;
        let out = env.step_command(&action)?;
        log.record(&out);
        if out.terminated || out.truncated {
            return Ok(log);
        }
        obs = out.observation;
    }
}
