//! Acceptance criteria AC-1 to AC-10. Runs without the libtest harness so
//! each criterion prints one PASS/FAIL line even when everything passes.

mod common;

use pars::cli::{cmd_compare, cmd_train, CompareArgs, TrainConfig};
use pars::env::{EnvConfig, PilotRecoveryEnv};
use pars::flightdyn::{flight_path_angle, ControlCommand, FlightModel};
use pars::hpo::{should_prune, TrialStatus, MIN_PRUNE_HISTORY};
use pars::reward::{asymptotic_error, preset, total_reward, DEFAULT_CONTROL_DT};
use pars::sac::toy::DoubleIntegrator;
use pars::sac::{eval_seeds, evaluate, random_policy_return, train, EvalPoint, Policy, SacConfig, TrainObserver};
use pars::scenario::{policy_controller, recovery_trials, RecoverySummary, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ac1() -> Outcome {
    let spec = preset(4).map_err(|e| e.to_string())?;
    let level = ControlCommand::NEUTRAL;
    let rest = total_reward(&spec, 0.0, 0.0, level, level, DEFAULT_CONTROL_DT).total;
    let full = total_reward(
        &spec,
        0.0,
        0.0,
        ControlCommand::new(1.0, 1.0),
        ControlCommand::new(-1.0, -1.0),
        DEFAULT_CONTROL_DT,
    )
    .total;
    check(
        (rest - 1.0).abs() <= 1e-12 && (full - 0.8).abs() <= 1e-12,
        format!("level {rest}, full-rate reversal {full}"),
    )
}

fn ac2() -> Outcome {
    let e = asymptotic_error(std::f64::consts::PI, 0.157);
    // Second route: 1 − s/(s + e) is the same function written differently.
    let oracle = |err: f64, s: f64| 1.0 - s / (s + err);
    let n = 100;
    let errs: Vec<f64> = (0..n).map(|i| std::f64::consts::PI * i as f64 / (n - 1) as f64).collect();
    let scales: Vec<f64> = (0..n).map(|j| 0.05 * (100f64).powf(j as f64 / (n - 1) as f64)).collect();
    let mut worst_oracle: f64 = 0.0;
    let mut monotone = true;
    for (j, &s) in scales.iter().enumerate() {
        for (i, &err) in errs.iter().enumerate() {
            let v = asymptotic_error(err, s);
            worst_oracle = worst_oracle.max((v - oracle(err, s)).abs());
            if i > 0 && v <= asymptotic_error(errs[i - 1], s) {
                monotone = false;
            }
            if j > 0 && err > 0.0 && v >= asymptotic_error(err, scales[j - 1]) {
                monotone = false;
            }
        }
    }
    check(
        (e - 0.95241).abs() <= 1e-4 && monotone && worst_oracle < 1e-12,
        format!("error(pi, 0.157) = {e:.6}, 10^4-point grid monotone {monotone}, oracle gap {worst_oracle:.1e}"),
    )
}

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let shapes = common::gradient_check_shapes();
    let worst = shapes
        .iter()
        .map(|s| common::gradient_check(s, 4, &mut rng))
        .fold(0.0, f64::max);
    let has_table_shape = shapes.iter().any(|s| s[..3] == [12, 64, 64]);
    check(
        shapes.len() >= 20 && has_table_shape && worst < 1e-4,
        format!("{} nets, worst relative error {worst:.2e}", shapes.len()),
    )
}

fn ac4() -> Outcome {
    let seeds = eval_seeds(20);
    let mut env = DoubleIntegrator::new();
    let random = random_policy_return(&mut env, &seeds, 1).map_err(|e| e.to_string())?;
    let mut returns = Vec::new();
    for seed in 0..3 {
        let config = SacConfig {
            total_steps: 50_000,
            seed,
            eval_interval: 0,
            ..SacConfig::default()
        };
        let outcome = train(|| Ok(DoubleIntegrator::new()), &config, &mut ()).map_err(|e| e.to_string())?;
        let learned = evaluate(&outcome.policy, &mut env, &seeds).map_err(|e| e.to_string())?;
        returns.push(learned);
    }
    let good = returns.iter().filter(|r| **r >= 2.0 * random).count();
    check(
        good >= 2,
        format!("random {random:.2}; trained per seed {returns:.2?}; {good}/3 at >= 2x"),
    )
}

/// Stops training at the first evaluation where both reference cases pass.
struct Gate {
    found: Option<(usize, Policy, String)>,
}

fn case_results(policy: &Policy) -> Vec<(Scenario, Vec<RecoverySummary>)> {
    recovery_trials(
        &EnvConfig::default(),
        &preset(4).unwrap(),
        &[Scenario::Case1, Scenario::Case2],
        5,
        0,
        policy_controller(policy),
    )
    .expect("evaluation episodes")
}

fn describe(results: &[(Scenario, Vec<RecoverySummary>)]) -> (bool, String) {
    let mut all = true;
    let mut text = Vec::new();
    for (scenario, runs) in results {
        // Recovered jointly within 20 s and never below −2 g.
        let ok = runs
            .iter()
            .filter(|s| s.joint_recovery_s.is_some_and(|t| t <= 20.0) && s.min_nz_g >= -2.0)
            .count();
        let min_nz = runs.iter().map(|s| s.min_nz_g).fold(f64::INFINITY, f64::min);
        all &= ok >= 4;
        text.push(format!("{scenario} {ok}/5 (min n_z {min_nz:.2} g)"));
    }
    (all, text.join(", "))
}

impl TrainObserver for Gate {
    fn on_eval(&mut self, point: &EvalPoint, policy: &Policy) -> bool {
        let (ok, text) = describe(&case_results(policy));
        if ok {
            self.found = Some((point.step, policy.clone(), text));
        }
        !ok
    }
}

fn ac5(found: &mut Option<Policy>) -> Outcome {
    let spec = preset(4).map_err(|e| e.to_string())?;
    let mut log = Vec::new();
    for seed in 0..3 {
        let config = SacConfig {
            total_steps: 1_000_000,
            seed,
            ..SacConfig::default()
        };
        let start = Instant::now();
        let mut gate = Gate { found: None };
        let outcome = train(|| PilotRecoveryEnv::new(EnvConfig::default(), spec.clone()), &config, &mut gate)
            .map_err(|e| e.to_string())?;
        match gate.found {
            Some((step, policy, text)) => {
                log.push(format!("seed {seed}: passed at {step} steps in {:.0} s: {text}", start.elapsed().as_secs_f64()));
                *found = Some(policy);
                return Ok(log.join("; "));
            }
            None => {
                let (_, text) = describe(&case_results(&outcome.policy));
                log.push(format!("seed {seed}: not passed after 1M steps: {text}"));
                *found = Some(outcome.policy);
            }
        }
    }
    Err(log.join("; "))
}

fn ac6() -> Outcome {
    let s = common::random_rollout(100_000, 6);
    check(
        s.steps == 100_000 && s.terminated_on_violation == s.violations && s.post_violation_steps == 0 && s.non_finite == 0,
        format!(
            "{} steps, {} episodes, {} violations, {} terminated on the violating step, {} post-violation steps",
            s.steps, s.episodes, s.violations, s.terminated_on_violation, s.post_violation_steps
        ),
    )
}

fn ac7() -> Outcome {
    let config = EnvConfig::default();
    let sampler = config.sampler.clone();
    let mut env = PilotRecoveryEnv::new(config.clone(), preset(4).unwrap()).map_err(|e| e.to_string())?;
    let mut non_upset = 0;
    for seed in 0..1000 {
        env.reset_sampled(seed).map_err(|e| e.to_string())?;
        let s = env.state();
        let theta = s.theta.to_degrees();
        let bank = s.phi.to_degrees().abs();
        if !(theta > 25.0 || theta < -10.0 || bank > 45.0) {
            non_upset += 1;
        }
    }
    // Cells that hold upset points at every airspeed the sampler draws.
    let alpha = |v: f64| FlightModel::trim(&config.aero, v, 4000.0).map(|t| t.state.alpha());
    let [v_lo, v_hi] = sampler.airspeed_range;
    let lo = sampler.eligible_cells(alpha(v_lo).map_err(|e| e.to_string())?);
    let hi = sampler.eligible_cells(alpha(v_hi).map_err(|e| e.to_string())?);
    let required: Vec<usize> = lo.into_iter().filter(|c| hi.contains(c)).collect();
    let budget = 10 * sampler.cell_count();
    let mut hit = vec![false; sampler.cell_count()];
    for seed in 0..budget as u64 {
        env.reset_sampled(10_000 + seed).map_err(|e| e.to_string())?;
        let s = env.state();
        let gamma = flight_path_angle(s).map_err(|e| e.to_string())?;
        if let Some(c) = sampler.cell_of(s.phi.to_degrees(), gamma.to_degrees()) {
            hit[c] = true;
        }
    }
    let missed: Vec<usize> = required.iter().copied().filter(|&c| !hit[c]).collect();
    check(
        non_upset == 0 && missed.is_empty() && !required.is_empty(),
        format!(
            "{non_upset}/1000 samples outside the upset thresholds; {}/{} upset cells hit within {budget} samples (missed {missed:?})",
            required.len() - missed.len(),
            required.len()
        ),
    )
}

fn ac8(policy: Option<&Policy>) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fallback;
    let policy = match policy {
        Some(p) => p,
        None => {
            fallback = Policy::new(12, 2, &[64, 64], -2.0, &mut ChaCha8Rng::seed_from_u64(0)).map_err(|e| e.to_string())?;
            &fallback
        }
    };
    let ckpt = dir.path().join("policy.json");
    policy.save(&ckpt, &SacConfig::default(), 0, &[]).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for scenario in [Scenario::Case1, Scenario::Case2] {
        let out = dir.path().join(scenario.to_string());
        let report = cmd_compare(&CompareArgs {
            checkpoint: ckpt.clone(),
            scenario,
            gains: None,
            seed: 0,
            preset: 4,
            duration: 30.0,
            out: out.clone(),
        })
        .map_err(|e| e.to_string())?;
        let svg = std::fs::read_to_string(&report.svg).map_err(|e| e.to_string())?;
        let series = pars::plot::count_series(&svg);
        let mut reader = csv::Reader::from_path(&report.csv).map_err(|e| e.to_string())?;
        let width = reader.headers().map_err(|e| e.to_string())?.len();
        let rows: Vec<_> = reader.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        let aligned = !rows.is_empty() && rows.iter().all(|r| r.len() == width);
        let table = out.join("recovery_times.csv").exists() && !report.table.is_empty();
        let pid_finite = report.pid.phi_recovery_s.is_some_and(f64::is_finite)
            && report.pid.gamma_recovery_s.is_some_and(f64::is_finite);
        ok &= series == 6 && aligned && table && pid_finite;
        let t = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.1}"));
        lines.push(format!(
            "{scenario}: {series} series, {} aligned rows, PID phi/gamma {}/{} s, RL phi/gamma {}/{} s, min n_z PID {:.2} RL {:.2}",
            rows.len(),
            t(report.pid.phi_recovery_s),
            t(report.pid.gamma_recovery_s),
            t(report.rl.phi_recovery_s),
            t(report.rl.gamma_recovery_s),
            report.pid.min_nz_g,
            report.rl.min_nz_g
        ));
    }
    check(ok, lines.join("; "))
}

fn ac9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = TrainConfig {
        sac: SacConfig {
            total_steps: 3_000,
            learning_starts: 1_000,
            train_freq: 64,
            gradient_steps: 64,
            net_arch: vec![32, 32],
            eval_interval: 1_500,
            eval_episodes: 2,
            seed: 9,
            ..SacConfig::default()
        },
        ..TrainConfig::default()
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    cmd_train(&config, &a).map_err(|e| e.to_string())?;
    cmd_train(&config, &b).map_err(|e| e.to_string())?;
    let read = |p: std::path::PathBuf| std::fs::read(p).map_err(|e| e.to_string());
    let curve_a = read(a.join("curve.csv"))?;
    let same_curve = curve_a == read(b.join("curve.csv"))?;
    let same_policy = read(a.join("policy.json"))? == read(b.join("policy.json"))?;
    let rows = curve_a.iter().filter(|&&c| c == b'\n').count().saturating_sub(1);
    check(
        same_curve && same_policy && rows > 0,
        format!("{rows} curve rows; curves identical {same_curve}, checkpoints identical {same_policy}"),
    )
}

fn ac10() -> Outcome {
    let result = common::synthetic_study(&common::synthetic_options(30, 0, None)).map_err(|e| e.to_string())?;
    let best = result.best.ok_or("no complete trial")?;
    let lr = best.config.learning_rate;
    let ratio = (lr / common::SYNTHETIC_OPTIMUM_LR).max(common::SYNTHETIC_OPTIMUM_LR / lr);
    // Pruning needs MIN_PRUNE_HISTORY complete trials before the pruned one.
    let mut early_prune = false;
    for t in result.history.iter().filter(|t| t.status == TrialStatus::Pruned) {
        let before = result.history.iter().filter(|o| o.id < t.id && o.status == TrialStatus::Complete).count();
        early_prune |= before < MIN_PRUNE_HISTORY;
    }
    let few: Vec<_> = result.history[..MIN_PRUNE_HISTORY - 1].to_vec();
    let guard = !should_prune(f64::NEG_INFINITY, &few, 0);
    let pruned = result.history.iter().filter(|t| t.status == TrialStatus::Pruned).count();
    check(
        ratio <= 3.0 && !early_prune && guard,
        format!("best lr {lr:.3e} ({ratio:.2}x from optimum), {pruned} pruned, none before {MIN_PRUNE_HISTORY} complete trials {}", !early_prune),
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match &result {
        Ok(detail) => println!("{name} PASS ({secs:.1} s): {detail}"),
        Err(detail) => println!("{name} FAIL ({secs:.1} s): {detail}"),
    }
    result.is_ok()
}

fn main() {
    // Policy from AC-5, reused by the comparison in AC-8.
    let mut policy: Option<Policy> = None;
    let results = [
        run("AC-1", ac1),
        run("AC-2", ac2),
        run("AC-3", ac3),
        run("AC-4", ac4),
        run("AC-5", || ac5(&mut policy)),
        run("AC-6", ac6),
        run("AC-7", ac7),
        run("AC-8", || ac8(policy.as_ref())),
        run("AC-9", ac9),
        run("AC-10", ac10),
    ];
    let passed = results.iter().filter(|r| **r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
