//! Command-line front end: train, eval, compare, sweep and plot-reward.
//!
//! Every subcommand writes only under its output directory and leaves a
//! `manifest.json` there with the resolved configuration and seed.
//!
//! Exit status: 0 success, 2 configuration error, 3 I/O error,
//! 4 numerical failure (non-finite state, diverged training).

use crate::baseline::{BaselineError, PidController, PidGains};
use crate::env::{EnvConfig, EnvError, EpisodeLog, PilotRecoveryEnv};
use crate::flightdyn::FlightError;
use crate::hpo::{self, HpoError, SearchSpace, StudyOptions, TrialStatus};
use crate::plot::{self, Panel, Series};
use crate::reward::{asymptotic_error, preset, RewardError, RewardSpec};
use crate::sac::{self, Policy, SacConfig, SacError, TrainObserver};
use crate::scenario::{policy_controller, run_scenario, RecoverySummary, Scenario, RECOVERY_DEADLINE_S};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_IO,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<FlightError> for CliError {
    fn from(e: FlightError) -> Self {
        match e {
            FlightError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Flight(f) => f.into(),
            EnvError::Reward(r) => r.into(),
            EnvError::Io(io) => io.into(),
            EnvError::Csv(c) => CliError::Io(c.to_string()),
            EnvError::Controller(m) => CliError::Numerical(m),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SacError> for CliError {
    fn from(e: SacError) -> Self {
        match e {
            SacError::Config(m) => CliError::Config(m),
            SacError::NonFinite { .. } | SacError::Diverged(_) => CliError::Numerical(e.to_string()),
            SacError::Env(env) => env.into(),
            SacError::Io(io) => io.into(),
            SacError::Nn(_) | SacError::Checkpoint(_) => CliError::Io(e.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Io(io) => io.into(),
            BaselineError::Env(env) => env.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<HpoError> for CliError {
    fn from(e: HpoError) -> Self {
        match e {
            HpoError::Io(io) => io.into(),
            HpoError::Json(j) => j.into(),
            HpoError::Format { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "pars", version, about = "Upset recovery with soft actor-critic on a desk-scale flight model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a recovery policy.
    Train(TrainArgs),
    /// Run deterministic episodes of a trained policy.
    Eval(EvalArgs),
    /// Fly a trained policy and the PID baseline from the same upset.
    Compare(CompareArgs),
    /// Hyperparameter search.
    Sweep(SweepArgs),
    /// Plot the asymptotic reward against bank error for several scales.
    PlotReward(PlotRewardArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "runs/train")]
    pub out: PathBuf,
    /// Overrides `sac.total_steps`.
    #[arg(long)]
    pub total_steps: Option<usize>,
    /// Overrides `sac.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// case1, case2, sampled, or phi=<deg>,gamma=<deg>
    #[arg(long, default_value = "case1")]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 5)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Reward preset used for episode rewards and the g floor.
    #[arg(long, default_value_t = 4)]
    pub preset: u8,
    /// Episode length, s.
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
    #[arg(long, default_value = "runs/eval")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "case1")]
    pub scenario: Scenario,
    /// Baseline gains TOML; the built-in tuned gains when omitted.
    #[arg(long)]
    pub gains: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub preset: u8,
    #[arg(long, default_value_t = 30.0)]
    pub duration: f64,
    #[arg(long, default_value = "runs/compare")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML study configuration; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "runs/sweep")]
    pub out: PathBuf,
    /// Overrides `n_trials`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Append to an existing study file instead of refusing to overwrite.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct PlotRewardArgs {
    /// Comma-separated asymptotic scales, rad.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.157, 0.5, 1.0, 2.0, 4.5])]
    pub scales: Vec<f64>,
    #[arg(long, default_value = "runs/plot_reward")]
    pub out: PathBuf,
}

/// Training run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Reward preset (1 to 4); ignored when `reward_file` is set.
    pub preset: u8,
    /// JSON reward specification.
    pub reward_file: Option<PathBuf>,
    pub sac: SacConfig,
    pub env: EnvConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            preset: 4,
            reward_file: None,
            sac: SacConfig::default(),
            env: EnvConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn reward_spec(&self) -> Result<RewardSpec> {
        match &self.reward_file {
            Some(path) => Ok(RewardSpec::from_json_file(path)?),
            None => Ok(preset(self.preset)?),
        }
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config: &'a T,
}

fn write_manifest<T: Serialize>(out: &Path, command: &str, seed: u64, config: &T) -> Result<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed,
        config,
    };
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn prepare_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Io(format!("cannot create output directory {}: {e}", out.display())))
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: PathBuf,
    pub curve: PathBuf,
    pub episodes: usize,
    pub updates: u64,
}

struct Progress;

impl TrainObserver for Progress {
    fn on_eval(&mut self, point: &sac::EvalPoint, _: &Policy) -> bool {
        eprintln!("step {:>8}  eval return {:.2}", point.step, point.mean_return);
        true
    }
}

/// Trains a policy; writes `policy.json` (+ sidecar), `best_policy.json`
/// when evaluations ran, `curve.csv` and `manifest.json`.
pub fn cmd_train(config: &TrainConfig, out: &Path) -> Result<TrainReport> {
    config.sac.validate()?;
    config.env.validate()?;
    let spec = config.reward_spec()?;
    spec.validate()?;
    prepare_out(out)?;
    write_manifest(out, "train", config.sac.seed, config)?;
    let env_config = config.env.clone();
    let outcome = sac::train(
        || PilotRecoveryEnv::new(env_config.clone(), spec.clone()),
        &config.sac,
        &mut Progress,
    )?;
    let curve = out.join("curve.csv");
    sac::write_curve_csv(&outcome.curve, &curve)?;
    let checkpoint = out.join("policy.json");
    outcome
        .policy
        .save(&checkpoint, &config.sac, config.sac.total_steps, &outcome.evals)?;
    if let Some((point, best)) = &outcome.best_policy {
        best.save(out.join("best_policy.json"), &config.sac, point.step, &outcome.evals)?;
    }
    Ok(TrainReport {
        checkpoint,
        curve,
        episodes: outcome.curve.len(),
        updates: outcome.updates,
    })
}

fn load_policy(path: &Path) -> Result<Policy> {
    let (policy, _) = Policy::load(path).map_err(|e| match e {
        SacError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Io(format!("{}: {other}", path.display())),
    })?;
    if policy.observation_dim() != crate::env::OBSERVATION_SIZE || policy.action_dim != crate::env::ACTION_SIZE {
        return Err(CliError::Config(format!(
            "{} does not fit the recovery task's observation/action sizes",
            path.display()
        )));
    }
    Ok(policy)
}

fn episode_env(preset_id: u8, duration: f64, keep_g_floor: bool) -> Result<PilotRecoveryEnv> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(CliError::Config("duration must be positive".into()));
    }
    let mut spec = preset(preset_id)?;
    if !keep_g_floor {
        spec.g_floor = None;
    }
    let config = EnvConfig {
        terminate_on_success: false,
        timeout_s: duration,
        ..EnvConfig::default()
    };
    Ok(PilotRecoveryEnv::new(config, spec)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenario: String,
    pub seed: u64,
    pub episodes: Vec<RecoverySummary>,
    pub successes: usize,
}

/// Deterministic episodes of a checkpoint; one CSV per episode plus
/// `summary.json`.
pub fn cmd_eval(args: &EvalArgs) -> Result<EvalSummary> {
    let policy = load_policy(&args.checkpoint)?;
    let mut env = episode_env(args.preset, args.duration, true)?;
    prepare_out(&args.out)?;
    write_manifest(
        &args.out,
        "eval",
        args.seed,
        &serde_json::json!({
            "checkpoint": args.checkpoint,
            "scenario": args.scenario.to_string(),
            "episodes": args.episodes,
            "preset": args.preset,
            "duration_s": args.duration,
            "env": env.config(),
        }),
    )?;
    let mut episodes = Vec::new();
    for i in 0..args.episodes {
        let (log, summary) = run_scenario(
            &mut env,
            args.scenario,
            args.seed,
            i,
            RECOVERY_DEADLINE_S,
            policy_controller(&policy),
        )?;
        log.save_csv(args.out.join(format!("episode_{i:03}.csv")))?;
        episodes.push(summary);
    }
    let summary = EvalSummary {
        scenario: args.scenario.to_string(),
        seed: args.seed,
        successes: episodes.iter().filter(|s| s.success).count(),
        episodes,
    };
    std::fs::write(args.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub channel: String,
    pub controller: String,
    pub recovery_s: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rl: RecoverySummary,
    pub pid: RecoverySummary,
    pub table: Vec<RecoveryRow>,
    pub csv: PathBuf,
    pub svg: PathBuf,
}

pub fn format_recovery_table(rows: &[RecoveryRow]) -> String {
    let mut s = format!("{:<8}{:<12}{}\n", "channel", "controller", "recovery");
    for r in rows {
        let value = r.recovery_s.map_or("not recovered".into(), |t| format!("{t:.1} s"));
        s += &format!("{:<8}{:<12}{}\n", r.channel, r.controller, value);
    }
    s
}

/// Writes the two trajectories side by side on a shared time column.
pub fn write_aligned_csv(path: &Path, rl: &EpisodeLog, pid: &EpisodeLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(e.to_string()))?;
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record([
        "t",
        "rl_phi_deg",
        "rl_gamma_deg",
        "rl_nz_g",
        "rl_aileron",
        "rl_elevator",
        "pid_phi_deg",
        "pid_gamma_deg",
        "pid_nz_g",
        "pid_aileron",
        "pid_elevator",
    ])
    .map_err(io)?;
    let n = rl.rows.len().max(pid.rows.len());
    let cells = |log: &EpisodeLog, i: usize| -> Vec<String> {
        match log.rows.get(i) {
            Some(r) => [r.phi_deg, r.gamma_deg, r.nz_g, r.aileron, r.elevator]
                .iter()
                .map(|v| v.to_string())
                .collect(),
            None => vec![String::new(); 5],
        }
    };
    for i in 0..n {
        let t = rl.rows.get(i).or(pid.rows.get(i)).map(|r| r.t).unwrap_or_default();
        let mut record = vec![t.to_string()];
        record.extend(cells(rl, i));
        record.extend(cells(pid, i));
        w.write_record(&record).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Three stacked panels (φ, γ, n_z), each with the policy and the baseline.
pub fn comparison_panels(rl: &EpisodeLog, pid: &EpisodeLog) -> Vec<Panel> {
    let channel = |log: &EpisodeLog, f: fn(&crate::env::LogRow) -> f64| -> Vec<(f64, f64)> {
        log.rows.iter().map(|r| (r.t, f(r))).collect()
    };
    let panel = |title: &str, unit: &str, f: fn(&crate::env::LogRow) -> f64| {
        Panel::new(title, "time (s)", unit)
            .with(Series::new("SAC policy", channel(rl, f)))
            .with(Series::new("PID baseline", channel(pid, f)).dashed())
    };
    vec![
        panel("bank angle", "phi (deg)", |r| r.phi_deg),
        panel("flight path angle", "gamma (deg)", |r| r.gamma_deg),
        panel("load factor", "n_z (g)", |r| r.nz_g),
    ]
}

/// Policy and PID baseline from the same initial state. Both fly without
/// the g-floor cutoff so the complete trajectories can be compared; the
/// policy's minimum load factor is reported against the floor instead.
pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport> {
    let policy = load_policy(&args.checkpoint)?;
    let gains = match &args.gains {
        Some(path) => PidGains::from_toml_file(path)?,
        None => PidGains::default(),
    };
    let mut env = episode_env(args.preset, args.duration, false)?;
    let g_floor = preset(args.preset)?.g_floor.unwrap_or(f64::NEG_INFINITY);
    prepare_out(&args.out)?;
    write_manifest(
        &args.out,
        "compare",
        args.seed,
        &serde_json::json!({
            "checkpoint": args.checkpoint,
            "scenario": args.scenario.to_string(),
            "preset": args.preset,
            "duration_s": args.duration,
            "gains": gains,
            "env": env.config(),
        }),
    )?;
    let dt = env.config().control_dt();
    let (rl_log, _) = run_scenario(&mut env, args.scenario, args.seed, 0, RECOVERY_DEADLINE_S, policy_controller(&policy))?;
    let mut pid = PidController::new(gains);
    let (pid_log, _) = run_scenario(&mut env, args.scenario, args.seed, 0, RECOVERY_DEADLINE_S, pid.controller(dt))?;
    let rl = RecoverySummary::from_log(&rl_log, g_floor, RECOVERY_DEADLINE_S);
    let pid_summary = RecoverySummary::from_log(&pid_log, g_floor, RECOVERY_DEADLINE_S);

    let csv = args.out.join("comparison.csv");
    write_aligned_csv(&csv, &rl_log, &pid_log)?;
    rl_log.save_csv(args.out.join("episode_rl.csv"))?;
    pid_log.save_csv(args.out.join("episode_pid.csv"))?;
    let svg = args.out.join("comparison.svg");
    plot::save(&svg, &format!("Recovery comparison, {}", args.scenario), &comparison_panels(&rl_log, &pid_log))?;

    let mut table = Vec::new();
    for (channel, pick) in [
        ("phi", (|s: &RecoverySummary| s.phi_recovery_s) as fn(&RecoverySummary) -> Option<f64>),
        ("gamma", |s: &RecoverySummary| s.gamma_recovery_s),
    ] {
        for (controller, s) in [("rl", &rl), ("pid", &pid_summary)] {
            table.push(RecoveryRow {
                channel: channel.into(),
                controller: controller.into(),
                recovery_s: pick(s),
            });
        }
    }
    let mut w = csv::Writer::from_path(args.out.join("recovery_times.csv")).map_err(|e| CliError::Io(e.to_string()))?;
    w.write_record(["channel", "controller", "recovery_s"]).map_err(|e| CliError::Io(e.to_string()))?;
    for r in &table {
        w.write_record([
            r.channel.clone(),
            r.controller.clone(),
            r.recovery_s.map_or("not recovered".into(), |t| t.to_string()),
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    std::fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "rl": rl, "pid": pid_summary }))?,
    )?;
    Ok(CompareReport {
        rl,
        pid: pid_summary,
        table,
        csv,
        svg,
    })
}

/// Study configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_trials: usize,
    pub workers: usize,
    pub seed: u64,
    pub pruning: bool,
    pub preset: u8,
    pub space: SearchSpace,
    /// Budget and evaluation schedule shared by all trials.
    pub base: SacConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_trials: 20,
            workers: 1,
            seed: 0,
            pruning: true,
            preset: 4,
            space: SearchSpace::default(),
            base: SacConfig {
                total_steps: 100_000,
                ..SacConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub study: PathBuf,
    pub report: PathBuf,
    pub best: Option<hpo::TrialRecord>,
    pub trials_run: usize,
    pub failed: usize,
}

/// Hyperparameter search over recovery-task training runs. Each trial's
/// objective is the mean deterministic evaluation return at its last
/// checkpoint.
pub fn cmd_sweep(config: &SweepConfig, out: &Path, resume: bool) -> Result<SweepReport> {
    config.space.validate()?;
    if config.n_trials == 0 {
        return Err(CliError::Config("n_trials must be >= 1".into()));
    }
    let spec = preset(config.preset)?;
    prepare_out(out)?;
    let study = out.join("study.jsonl");
    if study.exists() && !resume {
        return Err(CliError::Config(format!(
            "{} exists; pass --resume to append to it",
            study.display()
        )));
    }
    write_manifest(out, "sweep", config.seed, config)?;
    let options = StudyOptions {
        n_trials: config.n_trials,
        workers: config.workers.max(1),
        seed: config.seed,
        space: config.space.clone(),
        base: config.base.clone(),
        pruning: config.pruning,
        path: Some(study.clone()),
    };
    let before = if study.exists() { hpo::load_study(&study)?.1.len() } else { 0 };
    let result = hpo::run_study(&options, |sac_config, ctx| {
        struct Reporter<'a, 'b> {
            ctx: &'a mut hpo::TrialContext<'b>,
        }
        impl TrainObserver for Reporter<'_, '_> {
            fn on_eval(&mut self, point: &sac::EvalPoint, _: &Policy) -> bool {
                self.ctx.report(point.mean_return)
            }
        }
        let outcome = sac::train(
            || PilotRecoveryEnv::new(EnvConfig::default(), spec.clone()),
            sac_config,
            &mut Reporter { ctx },
        )
        .map_err(|e| e.to_string())?;
        match outcome.evals.last() {
            Some(e) => Ok(e.mean_return),
            None => {
                let mut env = PilotRecoveryEnv::new(EnvConfig::default(), spec.clone()).map_err(|e| e.to_string())?;
                use crate::env::Environment;
                env.set_evaluation_mode(true);
                sac::evaluate(&outcome.policy, &mut env, &sac::eval_seeds(sac_config.eval_episodes.max(1)))
                    .map_err(|e| e.to_string())
            }
        }
    })?;
    let trials_run = result.history.len() - before;
    let failed = result.history[before..]
        .iter()
        .filter(|t| t.status == TrialStatus::Failed)
        .count();
    let report = out.join("best_trial.txt");
    let mut text = format!(
        "trials: {} ({} this run, {} failed this run)\n",
        result.history.len(),
        trials_run,
        failed
    );
    match &result.best {
        Some(best) => {
            text += &format!(
                "best trial: {}\nobjective: {}\nconfig:\n{}\n",
                best.id,
                best.value.unwrap_or(f64::NAN),
                toml::to_string(&best.config).map_err(|e| CliError::Io(e.to_string()))?
            );
        }
        None => text += "no trial completed\n",
    }
    std::fs::write(&report, text)?;
    if failed == trials_run && result.best.is_none() {
        return Err(CliError::Numerical("every trial failed".into()));
    }
    Ok(SweepReport {
        study,
        report,
        best: result.best,
        trials_run,
        failed,
    })
}

/// Reward curve 1 − asymptotic_error(|Δφ|, scale) sampled over ±180°.
pub fn reward_curve(scale: f64, points: usize) -> Vec<(f64, f64)> {
    (0..points)
        .map(|i| {
            let deg = -180.0 + 360.0 * i as f64 / (points - 1) as f64;
            (deg, 1.0 - asymptotic_error(deg.to_radians().abs(), scale))
        })
        .collect()
}

pub fn cmd_plot_reward(scales: &[f64], out: &Path) -> Result<PathBuf> {
    if scales.is_empty() || scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(CliError::Config("scales must be a non-empty list of positive numbers".into()));
    }
    prepare_out(out)?;
    write_manifest(out, "plot-reward", 0, &serde_json::json!({ "scales": scales }))?;
    let mut panel = Panel::new("reward versus bank error", "delta phi (deg)", "reward");
    let mut w = csv::Writer::from_path(out.join("reward_curves.csv")).map_err(|e| CliError::Io(e.to_string()))?;
    let mut header = vec!["delta_phi_deg".to_string()];
    header.extend(scales.iter().map(|s| format!("scale_{s}")));
    w.write_record(&header).map_err(|e| CliError::Io(e.to_string()))?;
    let curves: Vec<Vec<(f64, f64)>> = scales.iter().map(|s| reward_curve(*s, 361)).collect();
    for i in 0..361 {
        let mut record = vec![curves[0][i].0.to_string()];
        record.extend(curves.iter().map(|c| c[i].1.to_string()));
        w.write_record(&record).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush()?;
    for (scale, curve) in scales.iter().zip(curves) {
        panel.series.push(Series::new(format!("scale {scale}"), curve));
    }
    let path = out.join("reward_scales.svg");
    plot::save(&path, "Asymptotic reward by scale factor", &[panel])?;
    Ok(path)
}

/// Parses arguments, runs the subcommand and returns the exit status.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Train(args) => (|| {
            let mut config = match &args.config {
                Some(path) => TrainConfig::load(path)?,
                None => TrainConfig::default(),
            };
            if let Some(n) = args.total_steps {
                config.sac.total_steps = n;
            }
            if let Some(seed) = args.seed {
                config.sac.seed = seed;
            }
            let report = cmd_train(&config, &args.out)?;
            println!(
                "trained {} episodes, {} updates; checkpoint {}, curve {}",
                report.episodes,
                report.updates,
                report.checkpoint.display(),
                report.curve.display()
            );
            Ok(())
        })(),
        Command::Eval(args) => cmd_eval(&args).map(|s| {
            for (i, e) in s.episodes.iter().enumerate() {
                println!(
                    "episode {i}: success {}, joint recovery {}, min n_z {:.2} g",
                    e.success,
                    e.joint_recovery_s.map_or("-".into(), |t| format!("{t:.1} s")),
                    e.min_nz_g
                );
            }
            println!("{}/{} successful", s.successes, s.episodes.len());
        }),
        Command::Compare(args) => cmd_compare(&args).map(|r| {
            print!("{}", format_recovery_table(&r.table));
            println!("min n_z: rl {:.2} g, pid {:.2} g", r.rl.min_nz_g, r.pid.min_nz_g);
            println!("wrote {} and {}", r.csv.display(), r.svg.display());
        }),
        Command::Sweep(args) => (|| {
            let mut config = match &args.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
                    toml::from_str::<SweepConfig>(&text)
                        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
                }
                None => SweepConfig::default(),
            };
            if let Some(n) = args.trials {
                config.n_trials = n;
            }
            let report = cmd_sweep(&config, &args.out, args.resume)?;
            println!(
                "{} trials run ({} failed); report {}",
                report.trials_run,
                report.failed,
                report.report.display()
            );
            Ok(())
        })(),
        Command::PlotReward(args) => cmd_plot_reward(&args.scales, &args.out).map(|p| println!("wrote {}", p.display())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_curves_peak_at_zero() {
        for scale in [0.157, 1.0, 4.5] {
            let c = reward_curve(scale, 361);
            assert_eq!(c[180], (0.0, 1.0));
        }
        let small = reward_curve(0.157, 361);
        assert!((small[360].1 - 0.0476).abs() < 1e-4);
    }

    #[test]
    fn default_train_config_round_trips() {
        let c = TrainConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert!(text.contains("gamma = 0.9"));
        assert_eq!(toml::from_str::<TrainConfig>(&text).unwrap(), c);
    }

    #[test]
    fn rejects_bad_scales() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(cmd_plot_reward(&[], dir.path()).unwrap_err().exit_code(), EXIT_CONFIG);
        assert_eq!(cmd_plot_reward(&[1.0, -1.0], dir.path()).unwrap_err().exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn recovery_table_format() {
        let rows = vec![
            RecoveryRow {
                channel: "phi".into(),
                controller: "rl".into(),
                recovery_s: Some(6.25),
            },
            RecoveryRow {
                channel: "phi".into(),
                controller: "pid".into(),
                recovery_s: None,
            },
        ];
        let t = format_recovery_table(&rows);
        assert!(t.contains("6.2 s") || t.contains("6.3 s"));
        assert!(t.contains("not recovered"));
    }
}
