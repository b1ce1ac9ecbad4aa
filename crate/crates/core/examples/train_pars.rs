//! Trains a recovery policy with the default hyperparameters and reward
//! preset 4, checking both named upset cases at every evaluation.
//!
//! cargo run --release --example train_pars -- [total_steps] [seed] [out_dir]

use pars::env::{EnvConfig, PilotRecoveryEnv};
use pars::reward::preset;
use pars::sac::{train, write_curve_csv, CurvePoint, EvalPoint, Policy, SacConfig, TrainObserver};
use pars::scenario::{policy_controller, recovery_trials, Scenario};
use std::path::PathBuf;
use std::time::Instant;

struct Progress {
    start: Instant,
    episodes: usize,
    recent: Vec<f64>,
    passed_at: Option<usize>,
}

impl TrainObserver for Progress {
    fn on_episode(&mut self, point: &CurvePoint) {
        self.episodes += 1;
        self.recent.push(point.episode_return);
    }

    fn on_eval(&mut self, point: &EvalPoint, policy: &Policy) -> bool {
        let mean = self.recent.iter().sum::<f64>() / self.recent.len().max(1) as f64;
        self.recent.clear();
        let trials = recovery_trials(
            &EnvConfig::default(),
            &preset(4).unwrap(),
            &[Scenario::Case1, Scenario::Case2],
            5,
            0,
            policy_controller(policy),
        )
        .expect("evaluation episodes");
        let mut line = String::new();
        let mut all = true;
        for (scenario, runs) in &trials {
            let ok = runs.iter().filter(|s| s.success).count();
            all &= ok >= 4;
            let min_nz = runs.iter().map(|s| s.min_nz_g).fold(f64::INFINITY, f64::min);
            let t = runs[0].joint_recovery_s.map_or("-".into(), |t| format!("{t:.1}"));
            line += &format!("  {scenario}: {ok}/5 t0={t} nz_min={min_nz:.2}");
        }
        println!(
            "{:>8} steps {:>6.0}s  train {:>7.2}  eval {:>7.2}{line}",
            point.step,
            self.start.elapsed().as_secs_f64(),
            mean,
            point.mean_return
        );
        if all && self.passed_at.is_none() {
            self.passed_at = Some(point.step);
        }
        true
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let total_steps = args.next().map(|s| s.parse()).transpose()?.unwrap_or(300_000);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "runs/train_pars".into()));
    std::fs::create_dir_all(&out_dir)?;

    let config = SacConfig {
        total_steps,
        seed,
        ..SacConfig::default()
    };
    let spec = preset(4)?;
    let mut progress = Progress {
        start: Instant::now(),
        episodes: 0,
        recent: Vec::new(),
        passed_at: None,
    };
    let outcome = train(
        || PilotRecoveryEnv::new(EnvConfig::default(), spec.clone()),
        &config,
        &mut progress,
    )?;
    write_curve_csv(&outcome.curve, out_dir.join("curve.csv"))?;
    outcome
        .policy
        .save(out_dir.join("policy.json"), &config, total_steps, &outcome.evals)?;
    println!(
        "{} episodes, {} updates, alpha {:.4}, both cases passed first at {:?}",
        progress.episodes, outcome.updates, outcome.final_alpha, progress.passed_at
    );
    Ok(())
}
