//! Tunes the cascaded-PID baseline by coordinate search over 20 sampled
//! upsets plus 30 small perturbations from level flight, and writes the
//! frozen gains as TOML.
//!
//! cargo run --release --example tune_baseline -- [out.toml]

use pars::baseline::{tune, PidController, PidGains};
use pars::env::EnvConfig;
use pars::reward::preset;
use pars::scenario::{recovery_trials, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tuning_starts() -> Vec<(Scenario, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let sampled = (0..20).map(|seed| (Scenario::Sampled, seed));
    // Small starts excite the limit cycles that large upsets settle past.
    let small: Vec<_> = (0..30)
        .map(|_| {
            let phi_deg = rng.random_range(-10.0..10.0);
            let gamma_deg = rng.random_range(-10.0..10.0);
            (Scenario::Explicit { phi_deg, gamma_deg }, 0)
        })
        .collect();
    sampled.chain(small).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "configs/baseline_gains.toml".into());
    let config = EnvConfig::default();
    // No g floor: the baseline is judged on attitude recovery alone.
    let spec = preset(1)?;
    let starts = tuning_starts();
    let (gains, cost) = tune(PidGains::untuned(), &config, &spec, &starts, 30.0, 12, |pass, cost, _| {
        println!("pass {pass:>2}: mean cost {cost:.2} s");
    })?;
    println!("final cost {cost:.2} s");
    std::fs::write(&out, gains.to_toml_string()?)?;
    println!("wrote {out}");

    let mut pid = PidController::new(gains);
    let dt = config.control_dt();
    for (scenario, runs) in recovery_trials(&config, &spec, &[Scenario::Case1, Scenario::Case2], 1, 0, pid.controller(dt))? {
        let s = &runs[0];
        println!(
            "{scenario}: phi settles {:?} s, gamma settles {:?} s, min n_z {:.2} g",
            s.phi_recovery_s, s.gamma_recovery_s, s.min_nz_g
        );
    }
    Ok(())
}
