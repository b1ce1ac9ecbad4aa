use std::path::Path;
use std::process::{Command, Output};

fn pars(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pars")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn first_row(csv_path: &Path) -> csv::StringRecord {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    r.records().next().unwrap().unwrap()
}

fn column(csv_path: &Path, name: &str) -> usize {
    let mut r = csv::Reader::from_path(csv_path).unwrap();
    r.headers().unwrap().iter().position(|h| h == name).unwrap()
}

/// Untrained checkpoint from a zero-step training run.
fn untrained(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("train");
    ok(&pars(&["train", "--out", p(&out), "--total-steps", "0"]));
    out.join("policy.json")
}

#[test]
fn train_with_zero_steps_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("train.toml");
    std::fs::write(&config, "preset = 4\n[sac]\ngamma = 0.9\ntau = 0.08\nseed = 3\n").unwrap();
    let out = dir.path().join("run");
    ok(&pars(&["train", "--config", p(&config), "--out", p(&out), "--total-steps", "0"]));
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["sac"]["gamma"], 0.9);
    assert_eq!(manifest["config"]["sac"]["tau"], 0.08);
    assert_eq!(manifest["seed"], 3);
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1, "header only: {curve}");
    assert!(curve.starts_with("step,episode_return,critic_loss,actor_loss,alpha"));
    assert!(out.join("policy.json").exists());
    assert!(out.join("policy.json.meta.json").exists());
}

#[test]
fn eval_starts_from_reference_cases() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained(dir.path());
    for (case, phi, gamma) in [("case1", -100.0, 45.0), ("case2", -30.0, 60.0)] {
        let out = dir.path().join(case);
        ok(&pars(&[
            "eval", "--checkpoint", p(&ckpt), "--scenario", case, "--episodes", "2", "--duration", "2", "--out", p(&out),
        ]));
        let csv_path = out.join("episode_000.csv");
        let row = first_row(&csv_path);
        let phi0: f64 = row[column(&csv_path, "phi_deg")].parse().unwrap();
        let gamma0: f64 = row[column(&csv_path, "gamma_deg")].parse().unwrap();
        assert!((phi0 - phi).abs() < 1e-9 && (gamma0 - gamma).abs() < 1e-9, "{case}: {phi0}, {gamma0}");
        assert!(out.join("episode_001.csv").exists());
        let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["episodes"].as_array().unwrap().len(), 2);
    }
}

#[test]
fn compare_writes_table_csv_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained(dir.path());
    let out = dir.path().join("compare");
    ok(&pars(&["compare", "--checkpoint", p(&ckpt), "--scenario", "case2", "--duration", "20", "--out", p(&out)]));
    let svg = std::fs::read_to_string(out.join("comparison.svg")).unwrap();
    assert_eq!(pars::plot::count_series(&svg), 6);
    let mut r = csv::Reader::from_path(out.join("comparison.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "rl_phi_deg") && headers.iter().any(|h| h == "pid_phi_deg"), "{headers:?}");
    let rows = r.records().count();
    assert_eq!(rows, 201);
    let times = std::fs::read_to_string(out.join("recovery_times.csv")).unwrap();
    assert!(times.lines().count() >= 5, "{times}");
}

#[test]
fn errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x");
    let missing = dir.path().join("nope.toml");
    assert_eq!(pars(&["train", "--config", p(&missing), "--out", p(&out)]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[sac]\nbatch_size = 0\n").unwrap();
    assert_eq!(pars(&["train", "--config", p(&bad), "--out", p(&out), "--total-steps", "0"]).status.code(), Some(2));
    let ckpt = dir.path().join("missing.json");
    assert_eq!(pars(&["eval", "--checkpoint", p(&ckpt), "--out", p(&out)]).status.code(), Some(3));
    assert_eq!(pars(&["eval", "--checkpoint", p(&ckpt), "--scenario", "case9"]).status.code(), Some(2));
    assert_eq!(pars(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn sweep_runs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("sweep.toml");
    std::fs::write(
        &config,
        r#"n_trials = 1
seed = 4
[space]
batch_size = [32]
buffer_size = [1000]
learning_starts = [200]
net_arch = [[16, 16]]
train_freq = [64]
[base]
total_steps = 600
eval_interval = 300
eval_episodes = 1
"#,
    )
    .unwrap();
    let out = dir.path().join("sweep");
    ok(&pars(&["sweep", "--config", p(&config), "--out", p(&out)]));
    assert_eq!(pars(&["sweep", "--config", p(&config), "--out", p(&out)]).status.code(), Some(2));
    ok(&pars(&["sweep", "--config", p(&config), "--out", p(&out), "--resume", "--trials", "2"]));
    let (header, records) = pars::hpo::load_study(&out.join("study.jsonl")).unwrap();
    assert_eq!(header.seed, 4);
    assert_eq!(records.iter().map(|t| t.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    for t in &records {
        assert_eq!(t.config.net_arch, vec![16, 16]);
        assert_eq!(t.config.total_steps, 600);
    }
    let report = std::fs::read_to_string(out.join("best_trial.txt")).unwrap();
    assert!(report.contains("trials: 3"), "{report}");
}

#[test]
fn plot_reward_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("plot");
    ok(&pars(&["plot-reward", "--scales", "0.157,1,4.5", "--out", p(&out)]));
    let svg = std::fs::read_to_string(out.join("reward_scales.svg")).unwrap();
    assert_eq!(pars::plot::count_series(&svg), 3);
    let mut r = csv::Reader::from_path(out.join("reward_curves.csv")).unwrap();
    assert!(r.records().count() > 0);
    // Zero error pays full reward for every scale.
    for scale in [0.157, 1.0, 4.5] {
        let curve = pars::cli::reward_curve(scale, 181);
        let peak = curve.iter().find(|(e, _)| e.abs() < 1e-9).unwrap();
        assert_eq!(peak.1, 1.0);
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let train = pars::cli::TrainConfig::load(&root.join("train.toml")).unwrap();
    assert_eq!(train.sac, pars::sac::SacConfig::default());
    assert_eq!(train.preset, 4);
    let text = std::fs::read_to_string(root.join("sweep.toml")).unwrap();
    let sweep: pars::cli::SweepConfig = toml::from_str(&text).unwrap();
    assert_eq!(sweep.space, pars::hpo::SearchSpace::default());
    sweep.space.validate().unwrap();
}
