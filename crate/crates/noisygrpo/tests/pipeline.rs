//! Cross-module tests that exercise the crate the way a consumer would:
//! whole training runs, rollout collection feeding the estimator, and
//! estimator output feeding the diagnostics.

use noisygrpo::advantage::{estimate_advantages, AdvantageParams, EstimatorMode, RewardedGroup};
use noisygrpo::diagnostics::{collect_residuals, shapiro_wilk, ResidualKind};
use noisygrpo::group_stats::{normalize, ScalarGroup};
use noisygrpo::noise::{forward_noise, NoiseLevelSampler, NoiseSchedule};
use noisygrpo::toyenv::{collect_group, ToyEnv};
use noisygrpo::trainer::{
    run_experiment, run_experiment_observed, ExperimentConfig, TrainingMethod,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn training_lifts_eval_accuracy_well_above_chance() {
    let mut cfg = ExperimentConfig::for_method(TrainingMethod::Grpo, 1);
    cfg.iterations = 60;
    let run = run_experiment(&cfg).expect("training runs");
    let first = run.metrics.first().expect("metrics recorded").eval_accuracy;
    let last = run.metrics.last().expect("metrics recorded").eval_accuracy;
    // Four answers, so an untrained policy sits near 0.25.
    assert!(last > 0.6, "final eval accuracy {last} is too low");
    assert!(last > first, "no improvement: {first} -> {last}");
    assert!(run.final_policy.is_finite());
}

#[test]
fn identical_configs_reproduce_identical_runs() {
    let mut cfg = ExperimentConfig::for_method(TrainingMethod::NoisyGrpo, 7);
    cfg.iterations = 12;
    let a = run_experiment(&cfg).expect("first run");
    let b = run_experiment(&cfg).expect("second run");
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.final_policy, b.final_policy);
}

#[test]
fn observed_traces_satisfy_the_estimator_identities() {
    let mut cfg = ExperimentConfig::for_method(TrainingMethod::NoisyGrpo, 3);
    cfg.iterations = 10;
    cfg.groups_per_iteration = 6;
    let mut trace_count = 0usize;
    run_experiment_observed(&cfg, |trace| {
        trace_count += 1;
        assert!(trace.iteration >= 1 && trace.iteration <= 10);
        assert!(trace.group_index < 6);
        assert_eq!(trace.rollouts.len(), cfg.group_size);
        assert_eq!(trace.semantic_rewards.len(), cfg.group_size);
        assert_eq!(trace.accuracy_rewards.len(), cfg.group_size);

        let report = &trace.report;
        assert_eq!(report.mode, EstimatorMode::FullNoisy);
        let w = report.importance_weight;
        assert!(w > 0.0 && w < 1.0, "fused weight {w} outside (0, 1)");
        assert!(report.sigma_n_sq > 0.0 && report.sigma_n_sq <= 1.0);

        for slot in 0..cfg.group_size {
            let implied = report.posterior[slot] - report.obs_normed[slot];
            let correction = w * (report.prior_normed[slot] - report.obs_normed[slot]);
            assert!(
                (implied - correction).abs() <= 1e-12,
                "posterior correction mismatch at slot {slot}"
            );
        }

        let renormed = normalize(
            &ScalarGroup::new(report.posterior.clone()).expect("posterior is a valid group"),
        );
        for (got, want) in report.advantages.iter().zip(renormed.values()) {
            assert!(
                (got - want).abs() <= 1e-12,
                "advantages are not the normalized posterior"
            );
        }
    })
    .expect("observed run succeeds");
    assert_eq!(trace_count, 10 * 6);
}

#[test]
fn collected_rollouts_flow_through_estimator_and_diagnostics() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let env = ToyEnv::new(8, 4, &mut rng).expect("env builds");
    let policy = env.oracle_policy();
    let sampler = NoiseLevelSampler::uniform(1.0).expect("valid sampler");
    let schedule = NoiseSchedule::linear(1000).expect("valid schedule");
    let params = AdvantageParams::default();

    let mut reports = Vec::new();
    for question_id in 0..40u64 {
        let (task, clean_obs) = env.sample_task(question_id, &mut rng);
        let rollouts = collect_group(
            &task, &clean_obs, &policy, &sampler, &schedule, 6, 1.0, &mut rng,
        )
        .expect("rollouts collect");
        let spec = task.answer_spec(&clean_obs);
        let levels: Vec<f64> = rollouts.iter().map(|r| r.noise_level).collect();
        let rewards: Vec<f64> = rollouts
            .iter()
            .map(|r| noisygrpo::reward::semantic_reward(&r.completion, &spec, &params_reward()))
            .collect();
        let group = RewardedGroup::new(levels, rewards).expect("valid group");
        reports.push(estimate_advantages(&group, &params).expect("estimation succeeds"));
    }

    let residuals =
        collect_residuals(&reports, ResidualKind::ObsMinusPrior).expect("pooling succeeds");
    assert_eq!(residuals.values.len(), 40 * 6);
    let spread = residuals
        .values
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max);
    assert!(spread > 0.0, "residuals are all zero");

    let (w, p) = shapiro_wilk(&residuals.values).expect("test runs");
    assert!(w > 0.0 && w <= 1.0);
    assert!((0.0..=1.0).contains(&p));
}

fn params_reward() -> noisygrpo::reward::RewardConfig {
    noisygrpo::reward::RewardConfig::default()
}

#[test]
fn oracle_policy_is_nearly_perfect_on_clean_observations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let env = ToyEnv::new(8, 4, &mut rng).expect("env builds");
    let oracle = env.oracle_policy();
    let accuracy = env
        .evaluate_policy(&oracle, 2000, &mut rng)
        .expect("evaluation runs");
    assert!(accuracy > 0.99, "oracle accuracy {accuracy}");
}

#[test]
fn heavier_noise_levels_decorrelate_observations_more() {
    let schedule = NoiseSchedule::linear(1000).expect("valid schedule");
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let x0: Vec<f64> = (0..20_000)
        .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();

    let corr_at = |level: f64, rng: &mut ChaCha8Rng| -> f64 {
        let noised = forward_noise(&x0, level, &schedule, rng).expect("noising runs");
        let n = x0.len() as f64;
        let mean_a = x0.iter().sum::<f64>() / n;
        let mean_b = noised.iter().sum::<f64>() / n;
        let mut cov = 0.0;
        let mut var_a = 0.0;
        let mut var_b = 0.0;
        for (a, b) in x0.iter().zip(&noised) {
            cov += (a - mean_a) * (b - mean_b);
            var_a += (a - mean_a) * (a - mean_a);
            var_b += (b - mean_b) * (b - mean_b);
        }
        cov / (var_a.sqrt() * var_b.sqrt())
    };

    let light = corr_at(0.1, &mut rng);
    let heavy = corr_at(0.9, &mut rng);
    assert!(light > heavy, "corr at 0.1 ({light}) <= corr at 0.9 ({heavy})");
    assert!(light > 0.8);
    assert!(heavy < 0.4);
}

#[test]
fn same_seed_same_noise_draw() {
    let schedule = NoiseSchedule::linear(500).expect("valid schedule");
    let x0: Vec<f64> = (0..64).map(|i| (i as f64) * 0.25 - 8.0).collect();
    let mut rng_a = ChaCha8Rng::seed_from_u64(5);
    let mut rng_b = ChaCha8Rng::seed_from_u64(5);
    let a = forward_noise(&x0, 0.7, &schedule, &mut rng_a).expect("noising runs");
    let b = forward_noise(&x0, 0.7, &schedule, &mut rng_b).expect("noising runs");
    assert_eq!(a, b);
}

#[test]
fn vanilla_mode_ignores_the_prior_channel() {
    let group = RewardedGroup::new(vec![0.05, 0.35, 0.55, 0.95], vec![1.0, 0.4, 0.8, 0.1])
        .expect("valid group");
    let vanilla = estimate_advantages(
        &group,
        &AdvantageParams::new(0.1, 0.01, EstimatorMode::VanillaGrpo).expect("valid params"),
    )
    .expect("estimation succeeds");
    let full = estimate_advantages(&group, &AdvantageParams::default()).expect("estimation");

    assert_eq!(vanilla.importance_weight, 0.0);
    assert_eq!(vanilla.advantages, vanilla.obs_normed);
    assert!(full.importance_weight > 0.0);
    assert_ne!(full.advantages, vanilla.advantages);
}

#[test]
fn config_validation_rejects_broken_setups() {
    let base = ExperimentConfig::for_method(TrainingMethod::NoisyGrpo, 0);
    assert!(base.validate().is_ok());

    let mut broken = base.clone();
    broken.iterations = 0;
    assert!(broken.validate().is_err());

    let mut broken = base.clone();
    broken.group_size = 1;
    assert!(broken.validate().is_err());

    let mut broken = base.clone();
    broken.temperature = 0.0;
    assert!(broken.validate().is_err());

    let mut broken = base.clone();
    broken.learning_rate = -0.01;
    assert!(broken.validate().is_err());

    let mut broken = base.clone();
    broken.sampler = NoiseLevelSampler::fixed(0.0).expect("valid sampler");
    let err = broken.validate().expect_err("mismatched sampler");
    assert!(err.to_string().contains("invalid input"));
}
