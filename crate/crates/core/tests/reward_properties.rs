use pars::flightdyn::ControlCommand;
use pars::reward::{
    asymptotic_error, preset, sequential_modulate, total_reward, RewardComponent, RewardSpec, Source,
    DEFAULT_CONTROL_DT,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn command() -> impl Strategy<Value = ControlCommand> {
    (-1.0..=1.0f64, -1.0..=1.0f64).prop_map(|(a, e)| ControlCommand::new(a, e))
}

fn angle() -> impl Strategy<Value = f64> {
    -4.0 * PI..4.0 * PI
}

/// Non-negative specs: angle components only, random weights and scales,
/// optionally one depending on the other.
fn positive_spec() -> impl Strategy<Value = RewardSpec> {
    (0.01..0.99f64, 0.01..10.0f64, 0.01..10.0f64, 0..3u8).prop_map(|(w, s_phi, s_gamma, dep)| {
        let mut phi = RewardComponent::asymptotic(Source::Phi, s_phi, w);
        let mut gamma = RewardComponent::asymptotic(Source::Gamma, s_gamma, 1.0 - w);
        match dep {
            1 => phi = phi.depending_on(Source::Gamma),
            2 => gamma = gamma.depending_on(Source::Phi),
            _ => {}
        }
        RewardSpec {
            components: vec![phi, gamma],
            g_floor: None,
            rate_mode: Default::default(),
        }
    })
}

proptest! {
    #[test]
    fn non_negative_specs_stay_in_unit_interval(
        spec in positive_spec(), phi in angle(), gamma in angle(), a in command(), b in command()
    ) {
        spec.validate().unwrap();
        let r = total_reward(&spec, phi, gamma, a, b, DEFAULT_CONTROL_DT).total;
        prop_assert!((0.0..=1.0).contains(&r), "{r}");
    }

    #[test]
    fn asymptotic_error_monotone(e in 1e-6..10.0f64, de in 1e-6..1.0f64, s in 1e-3..10.0f64, ds in 1e-6..1.0f64) {
        prop_assert!(asymptotic_error(e + de, s) > asymptotic_error(e, s));
        prop_assert!(asymptotic_error(e, s + ds) < asymptotic_error(e, s));
        let v = asymptotic_error(e, s);
        prop_assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn component_order_is_irrelevant(
        preset_id in 1..=4u8, phi in angle(), gamma in angle(), a in command(), b in command(), rot in 0..4usize
    ) {
        let spec = preset(preset_id).unwrap();
        let mut shuffled = spec.clone();
        let n = shuffled.components.len();
        shuffled.components.rotate_left(rot % n);
        shuffled.components.reverse();
        let r1 = total_reward(&spec, phi, gamma, a, b, DEFAULT_CONTROL_DT).total;
        let r2 = total_reward(&shuffled, phi, gamma, a, b, DEFAULT_CONTROL_DT).total;
        prop_assert!((r1 - r2).abs() < 1e-12);
    }

    #[test]
    fn sequential_modulation_never_increases(w in 0.0..1.0f64, base in 0.0..=1.0f64, dep in 0.0..=1.0f64) {
        prop_assert!(sequential_modulate(base, dep, w) <= w * base + 1e-15);
    }

    #[test]
    fn rate_punishment_zero_iff_unchanged(preset_id in 2..=4u8, a in command(), b in command()) {
        let spec = preset(preset_id).unwrap();
        let r = total_reward(&spec, 0.3, -0.2, a, b, DEFAULT_CONTROL_DT);
        for source in [Source::AileronRate, Source::ElevatorRate] {
            let term = r.term(source).unwrap();
            let changed = match source {
                Source::AileronRate => a.aileron != b.aileron,
                _ => a.elevator != b.elevator,
            };
            prop_assert_eq!(term.contribution != 0.0, changed);
        }
        let still = total_reward(&spec, 0.3, -0.2, a, a, DEFAULT_CONTROL_DT);
        prop_assert!(still.term(Source::AileronRate).unwrap().contribution == 0.0);
        prop_assert!(still.term(Source::ElevatorRate).unwrap().contribution == 0.0);
    }
}

#[test]
fn level_flight_rewards() {
    let level = ControlCommand::NEUTRAL;
    for id in 1..=4 {
        let spec = preset(id).unwrap();
        assert_eq!(total_reward(&spec, 0.0, 0.0, level, level, DEFAULT_CONTROL_DT).total, 1.0);
    }
    let spec = preset(4).unwrap();
    let r = total_reward(
        &spec,
        0.0,
        0.0,
        ControlCommand::new(1.0, 1.0),
        ControlCommand::new(-1.0, -1.0),
        DEFAULT_CONTROL_DT,
    );
    assert!((r.total - 0.8).abs() < 1e-12);
}
