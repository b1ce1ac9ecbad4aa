//! Flies uniformly random stick inputs from sampled upsets and tallies how
//! episodes end. The first episode is written as CSV.
//!
//! cargo run --release --example env_rollout -- [episodes] [log.csv]

use pars::env::{run_episode, EnvConfig, PilotRecoveryEnv};
use pars::reward::preset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let episodes: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(50);
    let log_path = args.next().unwrap_or_else(|| "random_episode.csv".into());
    let mut env = PilotRecoveryEnv::new(EnvConfig::default(), preset(4)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut endings: BTreeMap<&str, usize> = BTreeMap::new();
    let mut steps = 0;
    for seed in 0..episodes {
        env.reset_sampled(seed)?;
        let log = run_episode(&mut env, |_, _| Ok(vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))?;
        steps += log.rows.len();
        let ending = log.termination().map_or("none", |t| t.as_str());
        *endings.entry(ending).or_default() += 1;
        if seed == 0 {
            log.save_csv(&log_path)?;
        }
    }
    println!("{episodes} episodes, {steps} steps");
    for (ending, n) in endings {
        println!("  {ending:<12} {n}");
    }
    println!("episode 0 written to {log_path}");
    Ok(())
}
