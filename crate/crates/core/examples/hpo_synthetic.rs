//! Runs the hyperparameter study on a synthetic objective that peaks at a
//! learning rate of 1e-3, with pruning, and prints the trial history.
//!
//! cargo run --release --example hpo_synthetic -- [n_trials] [study.jsonl]

use pars::hpo::{run_study, SearchSpace, StudyOptions};
use pars::sac::SacConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n_trials = args.next().map(|s| s.parse()).transpose()?.unwrap_or(30);
    let options = StudyOptions {
        n_trials,
        workers: 1,
        seed: 0,
        space: SearchSpace::default(),
        base: SacConfig::default(),
        pruning: true,
        path: args.next().map(Into::into),
    };
    let result = run_study(&options, |config, ctx| {
        let value = -(config.learning_rate.log10() + 3.0).powi(2);
        // Early checkpoints look worse, as a learning curve would.
        for k in 1..=3 {
            if !ctx.report(value - (3 - k) as f64) {
                break;
            }
        }
        Ok(value)
    })?;
    for t in &result.history {
        println!(
            "trial {:>2}  lr {:.2e}  {:?}  value {}",
            t.id,
            t.config.learning_rate,
            t.status,
            t.value.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    if let Some(best) = result.best {
        println!("best: trial {} with lr {:.3e}", best.id, best.config.learning_rate);
    }
    Ok(())
}
