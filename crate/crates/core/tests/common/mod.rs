#![allow(dead_code)]

use pars::nn::{GradientTape, Gradients, Matrix, Mlp};
use rand::{Rng, SeedableRng};

/// Relative error ‖a − b‖ / (‖a‖ + ‖b‖) between autodiff and central
/// differences of L = Σ c ⊙ f(x) with respect to parameters and inputs,
/// whichever is worse.
pub fn gradient_check(sizes: &[usize], batch: usize, rng: &mut impl Rng) -> f64 {
    let mut net = Mlp::<f64>::new(sizes, rng).unwrap();
    let input = sizes[0];
    let output = *sizes.last().unwrap();
    let x = Matrix::from_vec(batch, input, (0..batch * input).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let c = Matrix::from_vec(batch, output, (0..batch * output).map(|_| rng.random_range(-1.0..1.0)).collect())
        .unwrap();
    let loss = |net: &Mlp<f64>, x: &Matrix<f64>| -> f64 {
        let y = net.forward(x).unwrap();
        y.data.iter().zip(&c.data).map(|(a, b)| a * b).sum()
    };

    let mut tape = GradientTape::new();
    net.forward_recorded(&mut tape, &x).unwrap();
    let mut grads = Gradients::for_net(&net);
    let dx = net.backward(&tape, &c, &mut grads).unwrap();

    let h = 1e-6;
    let mut numeric = Vec::with_capacity(grads.values.len());
    for i in 0..net.params().len() {
        let p = net.params()[i];
        net.params_mut()[i] = p + h;
        let up = loss(&net, &x);
        net.params_mut()[i] = p - h;
        let down = loss(&net, &x);
        net.params_mut()[i] = p;
        numeric.push((up - down) / (2.0 * h));
    }
    let mut numeric_x = Vec::with_capacity(x.data.len());
    for i in 0..x.data.len() {
        let mut xp = x.clone();
        xp.data[i] += h;
        let up = loss(&net, &xp);
        xp.data[i] -= 2.0 * h;
        let down = loss(&net, &xp);
        numeric_x.push((up - down) / (2.0 * h));
    }
    relative_error(&grads.values, &numeric).max(relative_error(&dx.data, &numeric_x))
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 { diff } else { diff / scale }
}

/// Twenty architectures, including the actor and critic shapes of the
/// recovery task.
pub fn gradient_check_shapes() -> Vec<Vec<usize>> {
    let mut shapes = vec![vec![12, 64, 64, 4], vec![14, 64, 64, 1]];
    let extra: [&[usize]; 18] = [
        &[1, 1],
        &[3, 2],
        &[1, 16, 16, 1],
        &[2, 8, 1],
        &[5, 7, 3],
        &[4, 4, 4, 4],
        &[12, 32, 4],
        &[6, 3, 9, 2],
        &[2, 64, 2],
        &[10, 5],
        &[3, 20, 20, 20, 1],
        &[8, 1, 8],
        &[7, 13, 5, 2],
        &[1, 32, 1],
        &[9, 9],
        &[4, 16, 8, 4, 2],
        &[2, 3, 4, 5, 6],
        &[15, 30, 2],
    ];
    shapes.extend(extra.iter().map(|s| s.to_vec()));
    shapes
}

use pars::env::{EnvConfig, EnvError, PilotRecoveryEnv, Termination};
use pars::reward::preset;

#[derive(Debug, Default, Clone, PartialEq)]
pub struct RolloutStats {
    pub steps: usize,
    pub episodes: usize,
    /// Steps whose substeps dipped below the g floor.
    pub violations: usize,
    /// Of those, steps that ended the episode as a g violation.
    pub terminated_on_violation: usize,
    /// Steps accepted by the environment after a violation.
    pub post_violation_steps: usize,
    pub both_flags_set: usize,
    pub max_abs_observation: f64,
    pub non_finite: usize,
}

/// Uniform random actions on the preset-4 task for `steps` control steps.
pub fn random_rollout(steps: usize, seed: u64) -> RolloutStats {
    let mut env = PilotRecoveryEnv::new(EnvConfig::default(), preset(4).unwrap()).unwrap();
    let floor = env.reward_spec().g_floor.unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut stats = RolloutStats::default();
    let mut episode_seed = seed.wrapping_mul(1_000_003);
    env.reset_sampled(episode_seed).unwrap();
    stats.episodes = 1;
    while stats.steps < steps {
        let action = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
        let out = env.step_command(&action).unwrap();
        stats.steps += 1;
        for v in &out.observation {
            if v.is_finite() {
                stats.max_abs_observation = stats.max_abs_observation.max(v.abs());
            } else {
                stats.non_finite += 1;
            }
        }
        if out.terminated && out.truncated {
            stats.both_flags_set += 1;
        }
        if out.info.min_load_factor < floor {
            stats.violations += 1;
            if out.terminated && out.termination == Some(Termination::GViolation) {
                stats.terminated_on_violation += 1;
            }
            if matches!(env.step_command(&action), Ok(_)) {
                stats.post_violation_steps += 1;
            } else {
                assert!(matches!(env.step_command(&action), Err(EnvError::EpisodeOver)));
            }
        }
        if out.terminated || out.truncated {
            episode_seed += 1;
            env.reset_sampled(episode_seed).unwrap();
            stats.episodes += 1;
        }
    }
    stats
}

use pars::hpo::{run_study, HpoError, SearchSpace, StudyOptions, StudyResult};
use pars::sac::SacConfig;

pub const SYNTHETIC_OPTIMUM_LR: f64 = 1e-3;

pub fn synthetic_options(n_trials: usize, seed: u64, path: Option<std::path::PathBuf>) -> StudyOptions {
    StudyOptions {
        n_trials,
        workers: 1,
        seed,
        space: SearchSpace::default(),
        base: SacConfig::default(),
        pruning: true,
        path,
    }
}

/// Peaks at the synthetic optimum learning rate. Reports three intermediate
/// values so the pruner has something to act on.
pub fn synthetic_study(options: &StudyOptions) -> Result<StudyResult, HpoError> {
    run_study(options, |config, ctx| {
        let value = -(config.learning_rate - SYNTHETIC_OPTIMUM_LR).powi(2);
        for k in 1..=3 {
            if !ctx.report(value * (4 - k) as f64) {
                break;
            }
        }
        Ok(value)
    })
}
