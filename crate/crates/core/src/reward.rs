//! Composable reward engine.
//!
//! A [`RewardSpec`] is a list of components. Each component turns one
//! observed quantity into a normalized error in [0, 1] with either the
//! asymptotic scheme (`e/scale / (1 + e/scale)`) or the linear scheme
//! (`min(e / max_err, 1)`). Positive-weight components contribute
//! `weight · (1 − error)`, optionally multiplied by the reward of the
//! component they depend on; negative-weight components contribute
//! `weight · error`. The total is the signed sum.

use crate::flightdyn::{wrap_angle, ControlCommand};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Control period the command-rate scales assume, seconds.
pub const DEFAULT_CONTROL_DT: f64 = 0.1;

/// The stick moves over [−1, 1], so the largest command change per
/// control period is 2 units.
pub const MAX_COMMAND_DELTA: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("component {0}: scale must be positive and finite")]
    BadScale(Source),
    #[error("component {0}: weight must be finite and non-zero")]
    BadWeight(Source),
    #[error("duplicate component for source {0}")]
    Duplicate(Source),
    #[error("component {0} depends on {1}, which is not in the spec")]
    MissingDependency(Source, Source),
    #[error("component {0} depends on itself")]
    SelfDependency(Source),
    #[error("component {0} depends on {1}, which has its own dependency (max depth 1)")]
    DependencyDepth(Source, Source),
    #[error("component {0} has a dependency but a negative weight")]
    DependentPunishment(Source),
    #[error("positive weights sum to {0}, expected 1")]
    WeightSum(f64),
    #[error("g floor must be finite")]
    BadGFloor,
    #[error("unknown preset {0}; expected 1..=4")]
    UnknownPreset(u8),
    #[error("control period must be positive, got {0}")]
    BadDt(f64),
    #[error("reward spec file {path}: {reason}")]
    File { path: String, reason: String },
}

/// Observed quantity a component scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Phi,
    Gamma,
    AileronRate,
    ElevatorRate,
}

impl Source {
    pub fn is_angular(self) -> bool {
        matches!(self, Source::Phi | Source::Gamma)
    }

    pub fn name(self) -> &'static str {
        match self {
            Source::Phi => "phi",
            Source::Gamma => "gamma",
            Source::AileronRate => "aileron_rate",
            Source::ElevatorRate => "elevator_rate",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phi" => Ok(Source::Phi),
            "gamma" => Ok(Source::Gamma),
            "aileron_rate" => Ok(Source::AileronRate),
            "elevator_rate" => Ok(Source::ElevatorRate),
            other => Err(format!("unknown reward source '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Asymptotic,
    Linear,
}

/// Unit in which an angular error is measured before scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleUnit {
    #[default]
    Radians,
    Degrees,
}

/// How command-rate sources measure change between control steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// |aₜ − aₜ₋₁| / dt, stick units per second.
    #[default]
    PerSecond,
    /// |aₜ − aₜ₋₁|, stick units per control step.
    PerStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardComponent {
    pub source: Source,
    #[serde(default)]
    pub target: f64,
    pub scheme: Scheme,
    /// Asymptotic: scale divisor. Linear: maximum attainable error.
    pub scale: f64,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depends_on: Option<Source>,
    #[serde(default)]
    pub unit: AngleUnit,
}

impl RewardComponent {
    pub fn asymptotic(source: Source, scale: f64, weight: f64) -> Self {
        Self {
            source,
            target: 0.0,
            scheme: Scheme::Asymptotic,
            scale,
            weight,
            depends_on: None,
            unit: AngleUnit::Radians,
        }
    }

    pub fn linear(source: Source, max_err: f64, weight: f64) -> Self {
        Self {
            source,
            target: 0.0,
            scheme: Scheme::Linear,
            scale: max_err,
            weight,
            depends_on: None,
            unit: AngleUnit::Radians,
        }
    }

    pub fn depending_on(mut self, other: Source) -> Self {
        self.depends_on = Some(other);
        self
    }

    pub fn in_degrees(mut self) -> Self {
        self.unit = AngleUnit::Degrees;
        self
    }

    /// Normalized error in [0, 1] for an absolute error.
    pub fn normalized_error(&self, e_abs: f64) -> f64 {
        match self.scheme {
            Scheme::Asymptotic => asymptotic_error(e_abs, self.scale),
            Scheme::Linear => linear_error(e_abs, self.scale),
        }
    }
}

/// |target − x|; for angular quantities the shortest arc, at most π.
pub fn absolute_error(x: f64, target: f64, angular: bool) -> f64 {
    if angular {
        wrap_angle(target - x).abs()
    } else {
        (target - x).abs()
    }
}

pub fn asymptotic_error(e_abs: f64, scale: f64) -> f64 {
    let scaled = e_abs / scale;
    scaled / (1.0 + scaled)
}

pub fn linear_error(e_abs: f64, max_err: f64) -> f64 {
    (e_abs / max_err).min(1.0)
}

pub fn sequential_modulate(base_reward: f64, dependent_reward: f64, weight: f64) -> f64 {
    weight * base_reward * dependent_reward
}

/// Which angle must be recovered first in the sequential preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryOrder {
    /// γ is scored first; φ only pays once γ is recovered.
    #[default]
    GammaFirst,
    /// φ is scored first; γ only pays once φ is recovered.
    PhiFirst,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub components: Vec<RewardComponent>,
    /// Load factor (g) below which an episode terminates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_floor: Option<f64>,
    #[serde(default)]
    pub rate_mode: RateMode,
}

/// Per-component diagnostics for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentTerm {
    pub source: Source,
    pub error: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub terms: Vec<ComponentTerm>,
    pub total: f64,
}

impl RewardBreakdown {
    pub fn term(&self, source: Source) -> Option<&ComponentTerm> {
        self.terms.iter().find(|t| t.source == source)
    }
}

/// Quantities a spec is evaluated against. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub phi: f64,
    pub gamma: f64,
    pub action: ControlCommand,
    pub prev_action: ControlCommand,
    pub dt: f64,
}

impl RewardSpec {
    pub fn validate(&self) -> Result<(), RewardError> {
        let mut seen = BTreeMap::new();
        for c in &self.components {
            if !(c.scale.is_finite() && c.scale > 0.0) {
                return Err(RewardError::BadScale(c.source));
            }
            if !(c.weight.is_finite() && c.weight != 0.0) {
                return Err(RewardError::BadWeight(c.source));
            }
            if seen.insert(c.source, c).is_some() {
                return Err(RewardError::Duplicate(c.source));
            }
        }
        for c in &self.components {
            if let Some(dep) = c.depends_on {
                if dep == c.source {
                    return Err(RewardError::SelfDependency(c.source));
                }
                let Some(other) = seen.get(&dep) else {
                    return Err(RewardError::MissingDependency(c.source, dep));
                };
                if other.depends_on.is_some() {
                    return Err(RewardError::DependencyDepth(c.source, dep));
                }
                if c.weight < 0.0 {
                    return Err(RewardError::DependentPunishment(c.source));
                }
            }
        }
        let positive: f64 = self
            .components
            .iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| c.weight)
            .sum();
        if (positive - 1.0).abs() > 1e-9 {
            return Err(RewardError::WeightSum(positive));
        }
        if let Some(g) = self.g_floor {
            if !g.is_finite() {
                return Err(RewardError::BadGFloor);
            }
        }
        Ok(())
    }

    fn absolute(&self, c: &RewardComponent, inputs: &RewardInputs) -> f64 {
        let rate = |now: f64, before: f64| {
            let delta = (now - before).abs();
            match self.rate_mode {
                RateMode::PerSecond => delta / inputs.dt,
                RateMode::PerStep => delta,
            }
        };
        let e = match c.source {
            Source::Phi => absolute_error(inputs.phi, c.target, true),
            Source::Gamma => absolute_error(inputs.gamma, c.target, true),
            Source::AileronRate => {
                absolute_error(rate(inputs.action.aileron, inputs.prev_action.aileron), c.target, false)
            }
            Source::ElevatorRate => absolute_error(
                rate(inputs.action.elevator, inputs.prev_action.elevator),
                c.target,
                false,
            ),
        };
        if c.source.is_angular() && c.unit == AngleUnit::Degrees {
            e.to_degrees()
        } else {
            e
        }
    }

    /// Scores one control step. The spec is assumed validated.
    pub fn evaluate(&self, inputs: &RewardInputs) -> RewardBreakdown {
        let errors: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.normalized_error(self.absolute(c, inputs)))
            .collect();
        let reward_of = |source: Source| {
            self.components
                .iter()
                .zip(&errors)
                .find(|(c, _)| c.source == source)
                .map(|(_, e)| 1.0 - e)
                .unwrap_or(1.0)
        };
        let terms: Vec<ComponentTerm> = self
            .components
            .iter()
            .zip(&errors)
            .map(|(c, &error)| {
                let contribution = if c.weight < 0.0 {
                    c.weight * error
                } else if let Some(dep) = c.depends_on {
                    sequential_modulate(1.0 - error, reward_of(dep), c.weight)
                } else {
                    c.weight * (1.0 - error)
                };
                ComponentTerm {
                    source: c.source,
                    error,
                    contribution,
                }
            })
            .collect();
        let total = terms.iter().map(|t| t.contribution).sum();
        RewardBreakdown { terms, total }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, RewardError> {
        let path = path.as_ref();
        let err = |reason: String| RewardError::File {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let spec: RewardSpec = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Convenience wrapper matching the step-level signature used by the
/// environment.
pub fn total_reward(
    spec: &RewardSpec,
    phi: f64,
    gamma: f64,
    action: ControlCommand,
    prev_action: ControlCommand,
    dt: f64,
) -> RewardBreakdown {
    spec.evaluate(&RewardInputs {
        phi,
        gamma,
        action,
        prev_action,
        dt,
    })
}

/// Scale factors and weights of the final design.
pub mod table {
    pub const PHI_SCALE: f64 = 0.157;
    pub const PHI_WEIGHT: f64 = 0.25;
    pub const GAMMA_SCALE: f64 = 4.5;
    pub const GAMMA_WEIGHT: f64 = 0.75;
    pub const AILERON_RATE_WEIGHT: f64 = -0.1;
    pub const ELEVATOR_RATE_WEIGHT: f64 = -0.1;
    pub const G_FLOOR: f64 = -2.0;
}

/// Options for building the iterative design presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetOptions {
    /// Control period used to size the command-rate normalization.
    pub control_dt: f64,
    pub rate_mode: RateMode,
    /// Dependency direction for preset 3.
    pub order: RecoveryOrder,
    pub angle_unit: AngleUnit,
}

impl Default for PresetOptions {
    fn default() -> Self {
        Self {
            control_dt: DEFAULT_CONTROL_DT,
            rate_mode: RateMode::PerSecond,
            order: RecoveryOrder::GammaFirst,
            angle_unit: AngleUnit::Radians,
        }
    }
}

/// Reward design iterations:
/// 1. φ and γ asymptotic errors, equal weights.
/// 2. (1) plus linear command-rate punishments.
/// 3. (2) with a sequential dependency between φ and γ.
/// 4. Final weights and scales, φ depending on γ, −2 g termination floor.
pub fn preset(iteration: u8) -> Result<RewardSpec, RewardError> {
    preset_with(iteration, PresetOptions::default())
}

pub fn preset_with(iteration: u8, opts: PresetOptions) -> Result<RewardSpec, RewardError> {
    use table::*;
    if !(opts.control_dt.is_finite() && opts.control_dt > 0.0) {
        return Err(RewardError::BadDt(opts.control_dt));
    }
    let max_rate = match opts.rate_mode {
        RateMode::PerSecond => MAX_COMMAND_DELTA / opts.control_dt,
        RateMode::PerStep => MAX_COMMAND_DELTA,
    };
    let angle = |source, scale, weight| {
        let c = RewardComponent::asymptotic(source, scale, weight);
        match opts.angle_unit {
            AngleUnit::Radians => c,
            AngleUnit::Degrees => c.in_degrees(),
        }
    };
    let punishments = [
        RewardComponent::linear(Source::AileronRate, max_rate, AILERON_RATE_WEIGHT),
        RewardComponent::linear(Source::ElevatorRate, max_rate, ELEVATOR_RATE_WEIGHT),
    ];
    let components = match iteration {
        1 => vec![
            angle(Source::Phi, PHI_SCALE, 0.5),
            angle(Source::Gamma, GAMMA_SCALE, 0.5),
        ],
        2 => {
            let mut c = vec![
                angle(Source::Phi, PHI_SCALE, 0.5),
                angle(Source::Gamma, GAMMA_SCALE, 0.5),
            ];
            c.extend(punishments);
            c
        }
        3 => {
            let (phi, gamma) = match opts.order {
                RecoveryOrder::GammaFirst => (
                    angle(Source::Phi, PHI_SCALE, 0.5).depending_on(Source::Gamma),
                    angle(Source::Gamma, GAMMA_SCALE, 0.5),
                ),
                RecoveryOrder::PhiFirst => (
                    angle(Source::Phi, PHI_SCALE, 0.5),
                    angle(Source::Gamma, GAMMA_SCALE, 0.5).depending_on(Source::Phi),
                ),
            };
            let mut c = vec![phi, gamma];
            c.extend(punishments);
            c
        }
        4 => {
            let mut c = vec![
                angle(Source::Phi, PHI_SCALE, PHI_WEIGHT).depending_on(Source::Gamma),
                angle(Source::Gamma, GAMMA_SCALE, GAMMA_WEIGHT),
            ];
            c.extend(punishments);
            c
        }
        other => return Err(RewardError::UnknownPreset(other)),
    };
    let spec = RewardSpec {
        components,
        g_floor: (iteration == 4).then_some(G_FLOOR),
        rate_mode: opts.rate_mode,
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn at_target(spec: &RewardSpec, action: ControlCommand, prev: ControlCommand) -> RewardBreakdown {
        total_reward(spec, 0.0, 0.0, action, prev, DEFAULT_CONTROL_DT)
    }

    #[test]
    fn absolute_error_cases() {
        assert_eq!(absolute_error(0.3, 0.3, true), 0.0);
        let e = absolute_error(170f64.to_radians(), (-170f64).to_radians(), true);
        assert!((e - 20f64.to_radians()).abs() < 1e-12);
        assert!((absolute_error(45f64.to_radians(), 0.0, true) - 0.7854).abs() < 1e-4);
        assert_eq!(absolute_error(5.0, -1.0, false), 6.0);
    }

    #[test]
    fn asymptotic_error_cases() {
        assert_eq!(asymptotic_error(0.0, 0.157), 0.0);
        assert_eq!(asymptotic_error(0.157, 0.157), 0.5);
        // π / 0.157 = 20.0101..., e / (1 + e) = 0.952403...
        assert!((asymptotic_error(PI, 0.157) - 0.952403).abs() < 1e-6);
    }

    #[test]
    fn linear_error_cases() {
        assert_eq!(linear_error(0.0, 4.0), 0.0);
        assert_eq!(linear_error(4.0, 4.0), 1.0);
        assert_eq!(linear_error(2.0, 4.0), 0.5);
        assert_eq!(linear_error(9.0, 4.0), 1.0);
    }

    #[test]
    fn sequential_cases() {
        assert_eq!(sequential_modulate(0.7, 0.0, 0.25), 0.0);
        assert_eq!(sequential_modulate(0.7, 1.0, 0.25), 0.25 * 0.7);
        assert!((sequential_modulate(0.8, 0.5, 0.25) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn final_design_at_targets() {
        let spec = preset(4).unwrap();
        let n = ControlCommand::NEUTRAL;
        assert_eq!(at_target(&spec, n, n).total, 1.0);
        let full = at_target(&spec, ControlCommand::new(1.0, 1.0), ControlCommand::new(-1.0, -1.0));
        assert!((full.total - 0.8).abs() < 1e-12, "{}", full.total);
    }

    #[test]
    fn base_design_at_targets() {
        let spec = preset(1).unwrap();
        let n = ControlCommand::NEUTRAL;
        assert_eq!(at_target(&spec, n, n).total, 1.0);
    }

    #[test]
    fn preset_shapes() {
        let p1 = preset(1).unwrap();
        assert_eq!(p1.components.len(), 2);
        assert!(p1.components.iter().all(|c| c.scheme == Scheme::Asymptotic));
        assert_eq!(p1.g_floor, None);

        let p2 = preset(2).unwrap();
        assert_eq!(p2.components.len(), 4);
        assert_eq!(
            p2.components.iter().filter(|c| c.scheme == Scheme::Linear).count(),
            2
        );

        let p3 = preset(3).unwrap();
        let phi = p3.components.iter().find(|c| c.source == Source::Phi).unwrap();
        assert_eq!(phi.depends_on, Some(Source::Gamma));
        let p3b = preset_with(
            3,
            PresetOptions {
                order: RecoveryOrder::PhiFirst,
                ..Default::default()
            },
        )
        .unwrap();
        let gamma = p3b.components.iter().find(|c| c.source == Source::Gamma).unwrap();
        assert_eq!(gamma.depends_on, Some(Source::Phi));

        let p4 = preset(4).unwrap();
        assert_eq!(p4.g_floor, Some(-2.0));
        let phi = p4.components.iter().find(|c| c.source == Source::Phi).unwrap();
        assert_eq!((phi.scale, phi.weight, phi.depends_on), (0.157, 0.25, Some(Source::Gamma)));
        let gamma = p4.components.iter().find(|c| c.source == Source::Gamma).unwrap();
        assert_eq!((gamma.scale, gamma.weight), (4.5, 0.75));

        assert_eq!(preset(5), Err(RewardError::UnknownPreset(5)));
    }

    #[test]
    fn validation_errors() {
        let mut spec = preset(2).unwrap();
        spec.components[0].scale = 0.0;
        assert_eq!(spec.validate(), Err(RewardError::BadScale(Source::Phi)));

        let mut spec = preset(2).unwrap();
        spec.components[0].weight = 0.4;
        assert!(matches!(spec.validate(), Err(RewardError::WeightSum(_))));

        let mut spec = preset(2).unwrap();
        spec.components[1].depends_on = Some(Source::Gamma);
        assert_eq!(spec.validate(), Err(RewardError::SelfDependency(Source::Gamma)));

        let mut spec = preset(4).unwrap();
        spec.components[1].depends_on = Some(Source::Phi);
        assert!(matches!(spec.validate(), Err(RewardError::DependencyDepth(..))));

        let mut spec = preset(1).unwrap();
        spec.components[0].depends_on = Some(Source::AileronRate);
        assert!(matches!(spec.validate(), Err(RewardError::MissingDependency(..))));

        let mut spec = preset(1).unwrap();
        spec.components.push(spec.components[0].clone());
        assert_eq!(spec.validate(), Err(RewardError::Duplicate(Source::Phi)));
    }

    #[test]
    fn unknown_source_rejected_on_parse() {
        let text = r#"{"components":[{"source":"rudder","scheme":"linear","scale":1,"weight":1}]}"#;
        assert!(serde_json::from_str::<RewardSpec>(text).is_err());
        assert!("rudder".parse::<Source>().is_err());
    }

    #[test]
    fn degrees_unit_changes_error() {
        let rad = RewardComponent::asymptotic(Source::Gamma, 4.5, 1.0);
        let deg = rad.clone().in_degrees();
        let spec = |c: RewardComponent| RewardSpec {
            components: vec![c],
            g_floor: None,
            rate_mode: RateMode::PerSecond,
        };
        let n = ControlCommand::NEUTRAL;
        let g = 45f64.to_radians();
        let r_rad = total_reward(&spec(rad), 0.0, g, n, n, 0.1).total;
        let r_deg = total_reward(&spec(deg), 0.0, g, n, n, 0.1).total;
        assert!((r_rad - (1.0 - asymptotic_error(g, 4.5))).abs() < 1e-15);
        assert!((r_deg - (1.0 - asymptotic_error(45.0, 4.5))).abs() < 1e-12);
    }

    #[test]
    fn per_step_rate_mode() {
        let opts = PresetOptions {
            rate_mode: RateMode::PerStep,
            ..Default::default()
        };
        let spec = preset_with(2, opts).unwrap();
        let b = total_reward(
            &spec,
            0.0,
            0.0,
            ControlCommand::new(0.5, 0.0),
            ControlCommand::NEUTRAL,
            0.1,
        );
        let ail = b.term(Source::AileronRate).unwrap();
        assert!((ail.error - 0.25).abs() < 1e-15);
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = preset(4).unwrap();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: RewardSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
