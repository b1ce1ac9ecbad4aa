//! Trains the soft actor-critic learner on a 1-D double integrator and
//! compares it with uniformly random actions.
//!
//! cargo run --release --example toy_sac -- [total_steps] [seed]

use pars::sac::toy::DoubleIntegrator;
use pars::sac::{eval_seeds, evaluate, random_policy_return, train, SacConfig};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let total_steps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30_000);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let config = SacConfig {
        total_steps,
        seed,
        eval_interval: 5_000,
        ..SacConfig::default()
    };

    let seeds = eval_seeds(20);
    let mut env = DoubleIntegrator::new();
    let random = random_policy_return(&mut env, &seeds, 1)?;
    println!("random policy mean return: {random:.1}");

    let start = Instant::now();
    let outcome = train(|| Ok(DoubleIntegrator::new()), &config, &mut ())?;
    let elapsed = start.elapsed().as_secs_f64();
    for e in &outcome.evals {
        println!("step {:>7}  eval return {:.1}", e.step, e.mean_return);
    }
    let learned = evaluate(&outcome.policy, &mut env, &seeds)?;
    println!(
        "trained policy mean return: {learned:.1} ({:.1}x random), {} updates in {elapsed:.1}s, alpha {:.4}",
        learned / random,
        outcome.updates,
        outcome.final_alpha
    );
    Ok(())
}
