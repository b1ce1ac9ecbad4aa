//! Desk-scale fixed-wing rigid-body flight dynamics.
//!
//! Body axes follow the usual aeronautical convention: x forward, y right
//! wing, z down. Attitude is exposed as 3-2-1 Euler angles on
//! [`AircraftState`] but integrated internally as a quaternion, so the
//! propagation stays well defined through steep attitudes.
//!
//! Aerodynamics are linear in the small-angle regime with a sigmoid blend
//! toward flat-plate lift beyond the stall angle. Air density is a single
//! constant layer; altitude only enters through potential energy.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;
use thiserror::Error;

/// Standard gravity, m/s².
pub const G0: f64 = 9.80665;

/// Largest admissible integration step, seconds.
pub const MAX_DT: f64 = 0.05;

/// Pitch angle is kept strictly inside ±(π/2 − this margin).
pub const PITCH_GUARD: f64 = 1e-4;

const MIN_AIRSPEED: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlightError {
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("time step {0} outside (0, {MAX_DT}]")]
    InvalidTimestep(f64),
    #[error("airspeed is zero; flight-path angle undefined")]
    ZeroAirspeed,
    #[error("trim infeasible at {airspeed} m/s: {reason}")]
    InfeasibleTrim { airspeed: f64, reason: String },
    #[error("invalid aero model: {0}")]
    InvalidModel(String),
    #[error("failed to read aero profile {path}: {reason}")]
    Profile { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, FlightError>;

/// Full rigid-body state. Angles in radians, rates in rad/s, velocities in
/// m/s, altitude in m, time in s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AircraftState {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub h: f64,
    pub t: f64,
}

impl AircraftState {
    pub fn airspeed(&self) -> f64 {
        (self.u * self.u + self.v * self.v + self.w * self.w).sqrt()
    }

    /// Angle of attack, radians.
    pub fn alpha(&self) -> f64 {
        self.w.atan2(self.u)
    }

    /// Sideslip angle, radians.
    pub fn beta(&self) -> f64 {
        let speed = self.airspeed();
        if speed < MIN_AIRSPEED {
            0.0
        } else {
            (self.v / speed).clamp(-1.0, 1.0).asin()
        }
    }

    /// Earth-frame vertical velocity, positive up.
    pub fn climb_rate(&self) -> f64 {
        let (sphi, cphi) = self.phi.sin_cos();
        let (sth, cth) = self.theta.sin_cos();
        self.u * sth - self.v * sphi * cth - self.w * cphi * cth
    }

    pub fn is_finite(&self) -> bool {
        [
            self.phi, self.theta, self.psi, self.p, self.q, self.r, self.u, self.v, self.w, self.h,
            self.t,
        ]
        .iter()
        .all(|x| x.is_finite())
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(FlightError::NonFinite(format!("state {self:?}")))
        }
    }
}

/// Normalized stick positions. Both axes are clamped to [−1, 1] on
/// construction; positive aileron rolls right, positive elevator (stick
/// back) pitches nose up.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub aileron: f64,
    pub elevator: f64,
}

impl ControlCommand {
    pub const NEUTRAL: ControlCommand = ControlCommand {
        aileron: 0.0,
        elevator: 0.0,
    };

    /// Builds a clamped command. NaN components are kept so callers can
    /// reject them explicitly.
    pub fn new(aileron: f64, elevator: f64) -> Self {
        Self {
            aileron: clamp_unit(aileron),
            elevator: clamp_unit(elevator),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.aileron.is_finite() && self.elevator.is_finite()
    }

    fn check_finite(&self) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(FlightError::NonFinite(format!("command {self:?}")))
        }
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        x
    } else {
        x.clamp(-1.0, 1.0)
    }
}

/// Airframe and aerodynamic coefficients.
///
/// Coefficient naming: `lift_*` is CL, `drag_*` is CD, `side_*` is CY,
/// `roll_*`/`pitch_*`/`yaw_*` are the moment coefficients Cl, Cm, Cn.
/// Angle derivatives are per radian, rate derivatives use the usual
/// nondimensional rates (p·b/2V, q·c/2V, r·b/2V). Control derivatives are
/// per radian of surface deflection; `max_aileron`/`max_elevator` map one
/// unit of stick to radians of deflection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AeroModel {
    /// kg
    pub mass: f64,
    /// m²
    pub wing_area: f64,
    /// m
    pub span: f64,
    /// m
    pub chord: f64,
    /// kg·m²
    pub ixx: f64,
    pub iyy: f64,
    pub izz: f64,
    /// kg/m³, constant layer. Zero gives a vacuum (no aerodynamic forces).
    pub air_density: f64,
    pub lift_0: f64,
    pub lift_alpha: f64,
    pub lift_elevator: f64,
    pub drag_0: f64,
    pub drag_induced: f64,
    pub side_beta: f64,
    pub pitch_0: f64,
    pub pitch_alpha: f64,
    pub pitch_rate: f64,
    pub pitch_elevator: f64,
    pub roll_beta: f64,
    pub roll_rate: f64,
    pub roll_aileron: f64,
    pub yaw_beta: f64,
    pub yaw_rate: f64,
    /// rad
    pub alpha_stall: f64,
    /// 1/rad, steepness of the linear-to-flat-plate blend
    pub stall_sharpness: f64,
    /// rad per unit stick
    pub max_aileron: f64,
    /// rad per unit stick
    pub max_elevator: f64,
}

impl Default for AeroModel {
    fn default() -> Self {
        Self::jet_trainer()
    }
}

impl AeroModel {
    /// Generic light jet trainer profile.
    pub fn jet_trainer() -> Self {
        Self {
            mass: 4500.0,
            wing_area: 22.0,
            span: 10.0,
            chord: 2.2,
            ixx: 8000.0,
            iyy: 30000.0,
            izz: 36000.0,
            air_density: 1.0,
            lift_0: 0.25,
            lift_alpha: 5.5,
            lift_elevator: 0.3,
            drag_0: 0.02,
            drag_induced: 0.08,
            side_beta: -0.6,
            pitch_0: 0.0,
            pitch_alpha: -1.0,
            pitch_rate: -20.0,
            pitch_elevator: -1.2,
            roll_beta: -0.05,
            roll_rate: -0.4,
            roll_aileron: 0.12,
            yaw_beta: 0.12,
            yaw_rate: -0.2,
            alpha_stall: 0.3,
            stall_sharpness: 40.0,
            max_aileron: 0.35,
            max_elevator: 0.436,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mass", self.mass),
            ("wing_area", self.wing_area),
            ("span", self.span),
            ("chord", self.chord),
            ("ixx", self.ixx),
            ("iyy", self.iyy),
            ("izz", self.izz),
            ("stall_sharpness", self.stall_sharpness),
            ("max_aileron", self.max_aileron),
            ("max_elevator", self.max_elevator),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(FlightError::InvalidModel(format!("{name} must be > 0, got {value}")));
            }
        }
        if !(self.air_density.is_finite() && self.air_density >= 0.0) {
            return Err(FlightError::InvalidModel("air_density must be >= 0".into()));
        }
        if !(self.alpha_stall > 0.0 && self.alpha_stall < PI / 4.0) {
            return Err(FlightError::InvalidModel(format!(
                "alpha_stall must lie in (0, pi/4), got {}",
                self.alpha_stall
            )));
        }
        if self.stall_sharpness > 100.0 {
            return Err(FlightError::InvalidModel("stall_sharpness must be <= 100".into()));
        }
        let coefficients = [
            self.lift_0,
            self.lift_alpha,
            self.lift_elevator,
            self.drag_0,
            self.drag_induced,
            self.side_beta,
            self.pitch_0,
            self.pitch_alpha,
            self.pitch_rate,
            self.pitch_elevator,
            self.roll_beta,
            self.roll_rate,
            self.roll_aileron,
            self.yaw_beta,
            self.yaw_rate,
        ];
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(FlightError::InvalidModel("non-finite coefficient".into()));
        }
        Ok(())
    }

    /// Reads a TOML profile. Every field is required; units as documented
    /// on the struct.
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| FlightError::Profile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text).map_err(|e| FlightError::Profile {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: AeroModel =
            toml::from_str(text).map_err(|e| FlightError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    /// Blend weight toward flat-plate behavior: ≈0 below stall, ≈1 above.
    fn stall_blend(&self, alpha: f64) -> f64 {
        let m = self.stall_sharpness;
        let a0 = self.alpha_stall;
        let e_minus = (-m * (alpha - a0)).exp();
        let e_plus = (m * (alpha + a0)).exp();
        (1.0 + e_minus + e_plus) / ((1.0 + e_minus) * (1.0 + e_plus))
    }

    /// Lift coefficient, including the stall blend and elevator term.
    pub fn lift_coefficient(&self, alpha: f64, elevator_rad: f64) -> f64 {
        let sigma = self.stall_blend(alpha);
        let linear = self.lift_0 + self.lift_alpha * alpha;
        let (sa, ca) = alpha.sin_cos();
        let flat_plate = 2.0 * alpha.signum() * sa * sa * ca;
        (1.0 - sigma) * linear + sigma * flat_plate + self.lift_elevator * elevator_rad
    }

    fn drag_coefficient(&self, alpha: f64, lift: f64) -> f64 {
        let sigma = self.stall_blend(alpha);
        let sa = alpha.sin();
        self.drag_0 + self.drag_induced * lift * lift + sigma * 2.0 * sa * sa
    }

    /// Body-axis aerodynamic forces (N) and moments (N·m) for a surface
    /// command already converted to stick units.
    pub fn forces_and_moments(&self, state: &AircraftState, cmd: ControlCommand) -> AeroLoads {
        let speed = state.airspeed();
        if speed < MIN_AIRSPEED || self.air_density == 0.0 {
            return AeroLoads::default();
        }
        let alpha = state.alpha();
        let beta = state.beta();
        let qbar_s = 0.5 * self.air_density * speed * speed * self.wing_area;
        let aileron = cmd.aileron * self.max_aileron;
        // Stick back deflects the trailing edge up (negative deflection).
        let elevator = -cmd.elevator * self.max_elevator;

        let lift = self.lift_coefficient(alpha, elevator);
        let drag = self.drag_coefficient(alpha, lift);
        let (sa, ca) = alpha.sin_cos();
        let fx = qbar_s * (-drag * ca + lift * sa);
        let fz = qbar_s * (-drag * sa - lift * ca);
        let fy = qbar_s * self.side_beta * beta;

        let p_hat = state.p * self.span / (2.0 * speed);
        let q_hat = state.q * self.chord / (2.0 * speed);
        let r_hat = state.r * self.span / (2.0 * speed);
        let roll = qbar_s
            * self.span
            * (self.roll_beta * beta + self.roll_rate * p_hat + self.roll_aileron * aileron);
        let pitch = qbar_s
            * self.chord
            * (self.pitch_0
                + self.pitch_alpha * alpha
                + self.pitch_rate * q_hat
                + self.pitch_elevator * elevator);
        let yaw = qbar_s * self.span * (self.yaw_beta * beta + self.yaw_rate * r_hat);

        AeroLoads {
            force: [fx, fy, fz],
            moment: [roll, pitch, yaw],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AeroLoads {
    pub force: [f64; 3],
    pub moment: [f64; 3],
}

/// Time derivatives of the body velocities and rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BodyAccelerations {
    pub u_dot: f64,
    pub v_dot: f64,
    pub w_dot: f64,
    pub p_dot: f64,
    pub q_dot: f64,
    pub r_dot: f64,
}

impl BodyAccelerations {
    pub fn max_abs(&self) -> f64 {
        [self.u_dot, self.v_dot, self.w_dot, self.p_dot, self.q_dot, self.r_dot]
            .iter()
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// An airframe flying at a fixed thrust setting.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightModel {
    pub aero: AeroModel,
    /// N, along the body x axis.
    pub thrust: f64,
}

// Integration vector layout: quaternion (4), p q r, u v w, h.
type Vector = [f64; 11];

impl FlightModel {
    pub fn new(aero: AeroModel, thrust: f64) -> Result<Self> {
        aero.validate()?;
        if !thrust.is_finite() {
            return Err(FlightError::NonFinite("thrust".into()));
        }
        Ok(Self { aero, thrust })
    }

    pub fn accelerations(&self, state: &AircraftState, cmd: ControlCommand) -> BodyAccelerations {
        let y = pack(state);
        let d = self.derivative(&y, cmd);
        BodyAccelerations {
            p_dot: d[4],
            q_dot: d[5],
            r_dot: d[6],
            u_dot: d[7],
            v_dot: d[8],
            w_dot: d[9],
        }
    }

    fn derivative(&self, y: &Vector, cmd: ControlCommand) -> Vector {
        let [q0, q1, q2, q3, p, q, r, u, v, w, _h] = *y;
        let a = &self.aero;
        let state = AircraftState {
            p,
            q,
            r,
            u,
            v,
            w,
            ..Default::default()
        };
        let loads = a.forces_and_moments(&state, cmd);
        let [fx, fy, fz] = loads.force;
        let [l, m, n] = loads.moment;

        // Gravity direction in body axes (third column of the body-to-NED
        // rotation, transposed).
        let gx = 2.0 * (q1 * q3 - q0 * q2);
        let gy = 2.0 * (q2 * q3 + q0 * q1);
        let gz = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3;

        let mass = a.mass;
        let u_dot = r * v - q * w + (fx + self.thrust) / mass + G0 * gx;
        let v_dot = p * w - r * u + fy / mass + G0 * gy;
        let w_dot = q * u - p * v + fz / mass + G0 * gz;

        let p_dot = (l + (a.iyy - a.izz) * q * r) / a.ixx;
        let q_dot = (m + (a.izz - a.ixx) * p * r) / a.iyy;
        let r_dot = (n + (a.ixx - a.iyy) * p * q) / a.izz;

        let q0_dot = 0.5 * (-p * q1 - q * q2 - r * q3);
        let q1_dot = 0.5 * (p * q0 + r * q2 - q * q3);
        let q2_dot = 0.5 * (q * q0 - r * q1 + p * q3);
        let q3_dot = 0.5 * (r * q0 + q * q1 - p * q2);

        let h_dot = -(gx * u + gy * v + gz * w);

        [
            q0_dot, q1_dot, q2_dot, q3_dot, p_dot, q_dot, r_dot, u_dot, v_dot, w_dot, h_dot,
        ]
    }

    /// Advances the state by `dt` seconds with one classical RK4 step, the
    /// surfaces held at `cmd` throughout.
    pub fn step(&self, state: &AircraftState, cmd: ControlCommand, dt: f64) -> Result<AircraftState> {
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(FlightError::InvalidTimestep(dt));
        }
        state.check_finite()?;
        cmd.check_finite()?;
        let cmd = ControlCommand::new(cmd.aileron, cmd.elevator);

        let y0 = pack(state);
        let k1 = self.derivative(&y0, cmd);
        let k2 = self.derivative(&axpy(&y0, 0.5 * dt, &k1), cmd);
        let k3 = self.derivative(&axpy(&y0, 0.5 * dt, &k2), cmd);
        let k4 = self.derivative(&axpy(&y0, dt, &k3), cmd);
        let mut y = y0;
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let next = unpack(&y, state.t + dt);
        if !next.is_finite() {
            return Err(FlightError::NonFinite(format!(
                "propagation from {state:?} with {cmd:?} diverged"
            )));
        }
        Ok(next)
    }

    /// Trims for wings-level, unaccelerated flight at `airspeed` and
    /// `altitude` with a damped Newton iteration on angle of attack,
    /// elevator stick and thrust.
    pub fn trim(aero: &AeroModel, airspeed: f64, altitude: f64) -> Result<Trim> {
        aero.validate()?;
        if !(airspeed.is_finite() && airspeed > 0.0 && altitude.is_finite()) {
            return Err(FlightError::InfeasibleTrim {
                airspeed,
                reason: "airspeed must be positive and finite".into(),
            });
        }
        let infeasible = |reason: String| FlightError::InfeasibleTrim { airspeed, reason };
        if aero.air_density == 0.0 {
            return Err(infeasible("no air".into()));
        }

        let make = |x: &[f64; 3]| {
            let (alpha, elevator, thrust) = (x[0], x[1], x[2]);
            let state = AircraftState {
                theta: alpha,
                u: airspeed * alpha.cos(),
                w: airspeed * alpha.sin(),
                h: altitude,
                ..Default::default()
            };
            let model = FlightModel {
                aero: aero.clone(),
                thrust,
            };
            (state, ControlCommand { aileron: 0.0, elevator }, model)
        };
        let residual = |x: &[f64; 3]| -> [f64; 3] {
            let (state, cmd, model) = make(x);
            let acc = model.accelerations(&state, cmd);
            [acc.u_dot, acc.w_dot, acc.q_dot]
        };
        let norm = |r: &[f64; 3]| r.iter().map(|v| v * v).sum::<f64>().sqrt();

        let qbar_s = 0.5 * aero.air_density * airspeed * airspeed * aero.wing_area;
        let cl_needed = aero.mass * G0 / qbar_s;
        let alpha0 = ((cl_needed - aero.lift_0) / aero.lift_alpha).clamp(-aero.alpha_stall, aero.alpha_stall);
        let mut x = [alpha0, 0.0, qbar_s * aero.drag_0];
        let mut res = residual(&x);

        const MAX_ITER: usize = 100;
        const TOL: f64 = 1e-9;
        let mut converged = false;
        for _ in 0..MAX_ITER {
            if norm(&res) < TOL {
                converged = true;
                break;
            }
            let steps = [1e-7, 1e-7, 1e-3];
            let mut jac = [[0.0; 3]; 3];
            for j in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[j] += steps[j];
                xm[j] -= steps[j];
                let (rp, rm) = (residual(&xp), residual(&xm));
                for i in 0..3 {
                    jac[i][j] = (rp[i] - rm[i]) / (2.0 * steps[j]);
                }
            }
            let Some(delta) = solve3(jac, [-res[0], -res[1], -res[2]]) else {
                return Err(infeasible("singular trim Jacobian".into()));
            };
            // Backtracking keeps the iteration from jumping across the
            // stall region.
            let mut lambda = 1.0;
            let current = norm(&res);
            loop {
                let candidate = [
                    x[0] + lambda * delta[0],
                    x[1] + lambda * delta[1],
                    x[2] + lambda * delta[2],
                ];
                let r = residual(&candidate);
                if norm(&r) < current || lambda < 1e-4 {
                    x = candidate;
                    res = r;
                    break;
                }
                lambda *= 0.5;
            }
            if !x.iter().all(|v| v.is_finite()) {
                return Err(infeasible("iteration diverged".into()));
            }
        }
        if !converged && norm(&res) >= TOL {
            return Err(infeasible(format!(
                "no convergence within {MAX_ITER} iterations (residual {:.3e})",
                norm(&res)
            )));
        }
        let (alpha, elevator, thrust) = (x[0], x[1], x[2]);
        if alpha.abs() > aero.alpha_stall {
            return Err(infeasible(format!(
                "trim angle of attack {alpha:.4} rad beyond stall"
            )));
        }
        if elevator.abs() > 1.0 {
            return Err(infeasible(format!("elevator saturated ({elevator:.3})")));
        }
        if thrust < 0.0 {
            return Err(infeasible("negative thrust required".into()));
        }
        let (state, command, model) = make(&x);
        Ok(Trim {
            state,
            command,
            thrust: model.thrust,
        })
    }
}

/// Equilibrium state/command pair and the thrust that holds it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trim {
    pub state: AircraftState,
    pub command: ControlCommand,
    pub thrust: f64,
}

impl Trim {
    pub fn model(&self, aero: &AeroModel) -> FlightModel {
        FlightModel {
            aero: aero.clone(),
            thrust: self.thrust,
        }
    }
}

/// γ = asin(climb rate / V).
pub fn flight_path_angle(state: &AircraftState) -> Result<f64> {
    let speed = state.airspeed();
    if !(speed > 0.0) {
        return Err(FlightError::ZeroAirspeed);
    }
    Ok((state.climb_rate() / speed).clamp(-1.0, 1.0).asin())
}

/// Normal load factor in g: minus the body-z specific aerodynamic force.
/// Positive when lift presses the pilot into the seat.
pub fn load_factor(aero: &AeroModel, state: &AircraftState, cmd: ControlCommand) -> f64 {
    let loads = aero.forces_and_moments(state, cmd);
    -loads.force[2] / (aero.mass * G0)
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// First-order lag with a rate limit, applied per axis to stick commands
/// before they reach the surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuator {
    /// s
    pub time_constant: f64,
    /// stick units per second
    pub rate_limit: f64,
    pub position: ControlCommand,
}

impl Default for Actuator {
    fn default() -> Self {
        Self {
            time_constant: 0.05,
            rate_limit: 2.0,
            position: ControlCommand::NEUTRAL,
        }
    }
}

impl Actuator {
    pub fn with_position(mut self, position: ControlCommand) -> Self {
        self.position = position;
        self
    }

    /// Moves the surfaces toward `cmd` over `dt` and returns the new
    /// position.
    pub fn update(&mut self, cmd: ControlCommand, dt: f64) -> ControlCommand {
        let gain = 1.0 - (-dt / self.time_constant).exp();
        let max_move = self.rate_limit * dt;
        let mv = |from: f64, to: f64| from + (gain * (clamp_unit(to) - from)).clamp(-max_move, max_move);
        self.position = ControlCommand::new(
            mv(self.position.aileron, cmd.aileron),
            mv(self.position.elevator, cmd.elevator),
        );
        self.position
    }
}

fn axpy(y: &Vector, a: f64, k: &Vector) -> Vector {
    let mut out = *y;
    for i in 0..out.len() {
        out[i] += a * k[i];
    }
    out
}

fn pack(s: &AircraftState) -> Vector {
    let (sr, cr) = (0.5 * s.phi).sin_cos();
    let (sp, cp) = (0.5 * s.theta).sin_cos();
    let (sy, cy) = (0.5 * s.psi).sin_cos();
    [
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
        s.p,
        s.q,
        s.r,
        s.u,
        s.v,
        s.w,
        s.h,
    ]
}

fn unpack(y: &Vector, t: f64) -> AircraftState {
    let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]).sqrt();
    let (q0, q1, q2, q3) = (y[0] / n, y[1] / n, y[2] / n, y[3] / n);
    let phi = (2.0 * (q0 * q1 + q2 * q3)).atan2(1.0 - 2.0 * (q1 * q1 + q2 * q2));
    let theta = (2.0 * (q0 * q2 - q3 * q1)).clamp(-1.0, 1.0).asin();
    let psi = (2.0 * (q0 * q3 + q1 * q2)).atan2(1.0 - 2.0 * (q2 * q2 + q3 * q3));
    let limit = FRAC_PI_2 - PITCH_GUARD;
    AircraftState {
        phi: wrap_angle(phi),
        theta: theta.clamp(-limit, limit),
        psi: wrap_angle(psi),
        p: y[4],
        q: y[5],
        r: y[6],
        u: y[7],
        v: y[8],
        w: y[9],
        h: y[10],
        t,
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: &[[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(&a);
    if d.abs() < 1e-300 || !d.is_finite() {
        return None;
    }
    let mut out = [0.0; 3];
    for (col, slot) in out.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *slot = det(&m) / d;
    }
    Some(out)
}
