//! Training loop over the four method variants, emitting the metric
//! time-series the diagnostics and CLI consume.

use crate::advantage::{estimate_advantages, AdvantageParams, AdvantageReport, EstimatorMode, RewardedGroup};
use crate::error::{Error, Result};
use crate::group_stats::{group_std, ScalarGroup};
use crate::noise::{NoiseLevelSampler, NoiseSchedule};
use crate::reward::{accuracy_reward, extract_answer, format_reward, RewardConfig};
use crate::surrogate::{objective_gradient, PolicySnapshot, SurrogateConfig};
use crate::toyenv::{collect_group, ToyEnv, ToyRollout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const STREAM_LABELING: u64 = 0;
const STREAM_GROUPS: u64 = 1;
const STREAM_EVAL: u64 = 2;
const STREAM_INIT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingMethod {
    /// Clean rollouts, plain group-normalized advantages.
    Grpo,
    /// Noised rollouts, but still plain group-normalized advantages.
    GrpoPlusNoise,
    /// Noised rollouts fused with the prior at a fixed half-half weight.
    NaiveNoisyGrpo,
    /// Noised rollouts with the full variance-adaptive fusion.
    NoisyGrpo,
}

impl TrainingMethod {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Grpo => "GRPO",
            Self::GrpoPlusNoise => "GRPOPlusNoise",
            Self::NaiveNoisyGrpo => "NaiveNoisyGRPO",
            Self::NoisyGrpo => "NoisyGRPO",
        }
    }

    pub fn all() -> [TrainingMethod; 4] {
        [
            Self::Grpo,
            Self::GrpoPlusNoise,
            Self::NaiveNoisyGrpo,
            Self::NoisyGrpo,
        ]
    }

    fn required_mode(&self) -> EstimatorMode {
        match self {
            Self::Grpo | Self::GrpoPlusNoise => EstimatorMode::VanillaGrpo,
            Self::NaiveNoisyGrpo => EstimatorMode::NaiveNoisy,
            Self::NoisyGrpo => EstimatorMode::FullNoisy,
        }
    }

    fn sampler_matches(&self, sampler: &NoiseLevelSampler) -> bool {
        match self {
            Self::Grpo => matches!(sampler, NoiseLevelSampler::Fixed { value } if *value == 0.0),
            _ => matches!(sampler, NoiseLevelSampler::Uniform { .. }),
        }
    }

    fn default_sampler(&self) -> NoiseLevelSampler {
        match self {
            Self::Grpo => NoiseLevelSampler::Fixed { value: 0.0 },
            _ => NoiseLevelSampler::default(),
        }
    }
}

/// Full specification of one training run. Construct with
/// [`ExperimentConfig::for_method`] and adjust fields; [`validate`]
/// re-checks the method constraints afterward, rejecting mismatched
/// sampler/estimator combinations rather than silently fixing them.
///
/// [`validate`]: ExperimentConfig::validate
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub method: TrainingMethod,
    pub seed: u64,
    pub iterations: usize,
    pub groups_per_iteration: usize,
    pub group_size: usize,
    pub learning_rate: f64,
    pub temperature: f64,
    pub feature_dim: usize,
    pub num_answers: usize,
    pub eval_tasks: usize,
    pub inner_epochs: usize,
    pub noise_steps: usize,
    /// Standard deviation of the initial policy weights. The default is
    /// large enough that the starting policy is confidently (and mostly
    /// wrongly) opinionated, mirroring a pretrained model rather than a
    /// uniform one.
    pub init_scale: f64,
    pub advantage: AdvantageParams,
    pub surrogate: SurrogateConfig,
    pub sampler: NoiseLevelSampler,
    pub reward: RewardConfig,
}

impl ExperimentConfig {
    /// Defaults sized so a full ablation grid runs in seconds: 200
    /// iterations of 32 groups of 4 rollouts on an 8-feature, 4-answer
    /// environment, evaluated on 512 held-out tasks.
    pub fn for_method(method: TrainingMethod, seed: u64) -> Self {
        Self {
            method,
            seed,
            iterations: 200,
            groups_per_iteration: 32,
            group_size: 4,
            learning_rate: 0.05,
            temperature: 1.0,
            feature_dim: 8,
            num_answers: 4,
            eval_tasks: 512,
            inner_epochs: 1,
            noise_steps: 1000,
            init_scale: 1.0,
            advantage: AdvantageParams {
                mode: method.required_mode(),
                ..AdvantageParams::default()
            },
            surrogate: SurrogateConfig::default(),
            sampler: method.default_sampler(),
            reward: RewardConfig::default(),
        }
    }

    /// Same hyperparameters, different method: the sampler and estimator
    /// mode are reset to the method's required combination.
    pub fn with_method(&self, method: TrainingMethod) -> Self {
        let mut cfg = self.clone();
        cfg.method = method;
        cfg.sampler = method.default_sampler();
        cfg.advantage.mode = method.required_mode();
        cfg
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.groups_per_iteration == 0 {
            return Err(Error::invalid("groups_per_iteration must be at least 1"));
        }
        if self.group_size < 2 {
            return Err(Error::invalid("group_size must be at least 2"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::invalid(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::invalid(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        if self.num_answers < 2 {
            return Err(Error::invalid("num_answers must be at least 2"));
        }
        if self.eval_tasks == 0 {
            return Err(Error::invalid("eval_tasks must be at least 1"));
        }
        if self.inner_epochs == 0 {
            return Err(Error::invalid("inner_epochs must be at least 1"));
        }
        if self.noise_steps == 0 {
            return Err(Error::invalid("noise_steps must be at least 1"));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::invalid(format!(
                "init_scale must be non-negative, got {}",
                self.init_scale
            )));
        }
        self.advantage.validate()?;
        self.surrogate.validate()?;
        self.reward.validate()?;

        if self.advantage.mode != self.method.required_mode() {
            return Err(Error::invalid(format!(
                "method {} requires the {} estimator mode, got {}",
                self.method.name(),
                self.method.required_mode().name(),
                self.advantage.mode.name()
            )));
        }
        if !self.method.sampler_matches(&self.sampler) {
            return Err(Error::invalid(format!(
                "method {} does not allow noise sampler {:?}",
                self.method.name(),
                self.sampler
            )));
        }
        Ok(())
    }
}

/// Per-iteration training metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Mean accuracy reward over every rollout collected this iteration.
    pub mean_accuracy_reward: f64,
    /// Mean over groups of the within-group standard deviation of the
    /// semantic rewards; the exploration signal.
    pub reward_std: f64,
    /// Mean over groups of the logged fusion weight.
    pub mean_importance_weight: f64,
    /// Population variance over groups of the logged fusion weight.
    pub importance_weight_variance: f64,
    /// Greedy accuracy on the fixed held-out evaluation tasks after this
    /// iteration's updates.
    pub eval_accuracy: f64,
}

/// CSV header matching [`metric_csv_row`].
pub const METRIC_CSV_HEADER: &str =
    "iteration,method,seed,acc_reward,reward_std,imp_weight_mean,imp_weight_var,eval_acc";

/// One CSV row per metric record; floats carry 17 significant digits so
/// files round-trip exactly.
pub fn metric_csv_row(record: &MetricRecord, method: TrainingMethod, seed: u64) -> String {
    format!(
        "{},{},{},{},{},{},{},{}",
        record.iteration,
        method.name(),
        seed,
        crate::format_f64(record.mean_accuracy_reward),
        crate::format_f64(record.reward_std),
        crate::format_f64(record.mean_importance_weight),
        crate::format_f64(record.importance_weight_variance),
        crate::format_f64(record.eval_accuracy),
    )
}

/// Everything observed about one group during training: the task context,
/// the raw rollouts, their rewards, and the full advantage report. Streamed
/// to observers so logs can be audited without rerunning.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrace {
    /// 1-based iteration number.
    pub iteration: usize,
    /// Group index within the iteration.
    pub group_index: usize,
    pub question_id: u64,
    pub clean_observation: Vec<f64>,
    pub ground_truth: usize,
    pub rollouts: Vec<ToyRollout>,
    pub accuracy_rewards: Vec<f64>,
    pub semantic_rewards: Vec<f64>,
    pub report: AdvantageReport,
}

/// A finished run: the metric series (one record per iteration) and the
/// trained policy.
#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub metrics: Vec<MetricRecord>,
    pub final_policy: PolicySnapshot,
}

/// One ablation-grid cell.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub method: TrainingMethod,
    pub seed: u64,
    pub final_eval_accuracy: f64,
    pub metrics: Vec<MetricRecord>,
}

fn stream_rng(seed: u64, kind: u64, payload: u64) -> ChaCha8Rng {
    debug_assert!(payload < (1 << 56));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 56) | payload);
    rng
}

fn initial_policy(cfg: &ExperimentConfig) -> PolicySnapshot {
    let mut rng = stream_rng(cfg.seed, STREAM_INIT, 0);
    let weights: Vec<f64> = (0..cfg.feature_dim * cfg.num_answers)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            cfg.init_scale * z
        })
        .collect();
    PolicySnapshot::new(
        cfg.feature_dim,
        cfg.num_answers,
        weights,
        vec![0.0; cfg.num_answers],
    )
    .expect("scaled normal draws are finite")
}

/// Runs one experiment, discarding per-group traces.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<TrainingRun> {
    run_experiment_observed(cfg, |_| {})
}

/// Runs one experiment, handing every group's trace to the observer in
/// deterministic order before the parameter updates of its iteration.
///
/// Per iteration: the rollout policy is snapshotted, every group is
/// collected and scored against that snapshot, then each group batch gets
/// one ascent step per inner epoch while the snapshot stays fixed. The
/// reference policy for the KL penalty is frozen at initialization. Held
/// -out evaluation reuses the same task stream every iteration, so a frozen
/// policy scores identically across iterations.
pub fn run_experiment_observed(
    cfg: &ExperimentConfig,
    mut observer: impl FnMut(&GroupTrace),
) -> Result<TrainingRun> {
    cfg.validate()?;

    let mut env_rng = stream_rng(cfg.seed, STREAM_LABELING, 0);
    let env = ToyEnv::new(cfg.feature_dim, cfg.num_answers, &mut env_rng)?;
    let schedule = NoiseSchedule::linear(cfg.noise_steps)?;

    let mut theta = initial_policy(cfg);
    let reference = theta.clone();
    let mut metrics = Vec::with_capacity(cfg.iterations);

    for iteration in 1..=cfg.iterations {
        let theta_old = theta.clone();

        struct GroupBatch {
            contexts: Vec<Vec<f64>>,
            actions: Vec<usize>,
            advantages: Vec<f64>,
        }
        let mut batches = Vec::with_capacity(cfg.groups_per_iteration);
        let mut accuracy_sum = 0.0;
        let mut reward_std_sum = 0.0;
        let mut weights = Vec::with_capacity(cfg.groups_per_iteration);

        for group_index in 0..cfg.groups_per_iteration {
            let question_id =
                ((iteration - 1) * cfg.groups_per_iteration + group_index) as u64;
            let mut rng = stream_rng(cfg.seed, STREAM_GROUPS, question_id);
            let (task, clean_obs) = env.sample_task(question_id, &mut rng);
            let rollouts = collect_group(
                &task,
                &clean_obs,
                &theta_old,
                &cfg.sampler,
                &schedule,
                cfg.group_size,
                cfg.temperature,
                &mut rng,
            )?;

            let answer_key = task.answer_spec(&clean_obs);
            let mut accuracy_rewards = Vec::with_capacity(rollouts.len());
            let mut semantic_rewards = Vec::with_capacity(rollouts.len());
            for rollout in &rollouts {
                let acc =
                    accuracy_reward(extract_answer(&rollout.completion), &answer_key, &cfg.reward);
                let sem = acc + cfg.reward.format_weight * format_reward(&rollout.completion);
                accuracy_rewards.push(acc);
                semantic_rewards.push(sem);
            }

            let rewarded = RewardedGroup::new(
                rollouts.iter().map(|r| r.noise_level).collect(),
                semantic_rewards.clone(),
            )?;
            let report = estimate_advantages(&rewarded, &cfg.advantage)?;

            accuracy_sum += accuracy_rewards.iter().sum::<f64>();
            reward_std_sum += group_std(
                &ScalarGroup::new(semantic_rewards.clone()).expect("group size checked"),
            );
            weights.push(report.importance_weight);

            let trace = GroupTrace {
                iteration,
                group_index,
                question_id,
                clean_observation: clean_obs.clone(),
                ground_truth: task.ground_truth(&clean_obs),
                rollouts: rollouts.clone(),
                accuracy_rewards,
                semantic_rewards,
                report: report.clone(),
            };
            observer(&trace);

            batches.push(GroupBatch {
                contexts: vec![clean_obs; rollouts.len()],
                actions: rollouts.iter().map(|r| r.action).collect(),
                advantages: report.advantages,
            });
        }

        for _ in 0..cfg.inner_epochs {
            for batch in &batches {
                let grad = objective_gradient(
                    &batch.contexts,
                    &batch.actions,
                    &batch.advantages,
                    &theta,
                    &theta_old,
                    &reference,
                    &cfg.surrogate,
                )?;
                theta.ascent_step(&grad, cfg.learning_rate);
                if !theta.is_finite() {
                    return Err(Error::Diverged { iteration });
                }
            }
        }

        let mut eval_rng = stream_rng(cfg.seed, STREAM_EVAL, 0);
        let eval_accuracy = env.evaluate_policy(&theta, cfg.eval_tasks, &mut eval_rng)?;

        let rollout_count = (cfg.groups_per_iteration * cfg.group_size) as f64;
        let group_count = cfg.groups_per_iteration as f64;
        let w_mean = weights.iter().sum::<f64>() / group_count;
        let w_var =
            weights.iter().map(|w| (w - w_mean) * (w - w_mean)).sum::<f64>() / group_count;
        metrics.push(MetricRecord {
            iteration,
            mean_accuracy_reward: accuracy_sum / rollout_count,
            reward_std: reward_std_sum / group_count,
            mean_importance_weight: w_mean,
            importance_weight_variance: w_var,
            eval_accuracy,
        });
    }

    Ok(TrainingRun {
        metrics,
        final_policy: theta,
    })
}

/// Runs the full method × seed grid off one base configuration. Every cell
/// shares the base hyperparameters; only the method trio (method, sampler,
/// estimator mode) and the seed vary.
pub fn run_ablation_grid(
    base: &ExperimentConfig,
    methods: &[TrainingMethod],
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    if methods.is_empty() || seeds.is_empty() {
        return Err(Error::invalid(
            "ablation grid needs at least one method and one seed",
        ));
    }
    let mut rows = Vec::with_capacity(methods.len() * seeds.len());
    for &method in methods {
        for &seed in seeds {
            let cfg = base.with_method(method).with_seed(seed);
            let run = run_experiment(&cfg)?;
            let final_eval_accuracy = run
                .metrics
                .last()
                .map(|m| m.eval_accuracy)
                .expect("iterations >= 1 guarantees at least one record");
            rows.push(AblationRow {
                method,
                seed,
                final_eval_accuracy,
                metrics: run.metrics,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(method: TrainingMethod, seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_method(method, seed);
        cfg.iterations = 5;
        cfg.groups_per_iteration = 4;
        cfg.eval_tasks = 64;
        cfg
    }

    #[test]
    fn method_constraints_are_enforced() {
        for method in TrainingMethod::all() {
            assert!(ExperimentConfig::for_method(method, 0).validate().is_ok());
        }

        let mut cfg = ExperimentConfig::for_method(TrainingMethod::Grpo, 0);
        cfg.sampler = NoiseLevelSampler::default();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::for_method(TrainingMethod::Grpo, 0);
        cfg.advantage.mode = EstimatorMode::FullNoisy;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::for_method(TrainingMethod::NoisyGrpo, 0);
        cfg.sampler = NoiseLevelSampler::fixed(0.0).unwrap();
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::for_method(TrainingMethod::NoisyGrpo, 0);
        cfg.advantage.mode = EstimatorMode::NaiveNoisy;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::for_method(TrainingMethod::NaiveNoisyGrpo, 0);
        cfg.advantage.mode = EstimatorMode::FullNoisy;
        assert!(cfg.validate().is_err());

        // Non-default uniform bound still satisfies the noisy methods.
        let mut cfg = ExperimentConfig::for_method(TrainingMethod::NoisyGrpo, 0);
        cfg.sampler = NoiseLevelSampler::uniform(0.5).unwrap();
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_bounds_are_checked() {
        let base = ExperimentConfig::for_method(TrainingMethod::Grpo, 0);

        let mut cfg = base.clone();
        cfg.iterations = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = base.clone();
        cfg.group_size = 1;
        assert!(cfg.validate().is_err());

        let mut cfg = base.clone();
        cfg.learning_rate = -0.1;
        assert!(cfg.validate().is_err());

        let mut cfg = base.clone();
        cfg.temperature = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = base.clone();
        cfg.eval_tasks = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = base;
        cfg.inner_epochs = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn metric_series_has_one_record_per_iteration() {
        let cfg = tiny_config(TrainingMethod::NoisyGrpo, 3);
        let run = run_experiment(&cfg).unwrap();
        assert_eq!(run.metrics.len(), 5);
        for (idx, record) in run.metrics.iter().enumerate() {
            assert_eq!(record.iteration, idx + 1);
            assert!(record.reward_std >= 0.0);
            assert!((0.0..=1.0).contains(&record.eval_accuracy));
            assert!((0.0..=1.0).contains(&record.mean_importance_weight));
            assert!(record.importance_weight_variance >= 0.0);
        }
        assert!(run.final_policy.is_finite());
    }

    #[test]
    fn runs_are_deterministic_per_seed() {
        let cfg = tiny_config(TrainingMethod::NoisyGrpo, 11);
        let mut traces_a = Vec::new();
        let a = run_experiment_observed(&cfg, |t| traces_a.push(t.clone())).unwrap();
        let mut traces_b = Vec::new();
        let b = run_experiment_observed(&cfg, |t| traces_b.push(t.clone())).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.final_policy, b.final_policy);
        assert_eq!(traces_a, traces_b);

        let other = run_experiment(&tiny_config(TrainingMethod::NoisyGrpo, 12)).unwrap();
        assert_ne!(a.metrics, other.metrics);
    }

    #[test]
    fn zero_learning_rate_freezes_evaluation() {
        for method in [TrainingMethod::Grpo, TrainingMethod::NoisyGrpo] {
            let mut cfg = tiny_config(method, 5);
            cfg.learning_rate = 0.0;
            let run = run_experiment(&cfg).unwrap();
            let first = run.metrics[0].eval_accuracy;
            for record in &run.metrics {
                assert_eq!(record.eval_accuracy, first);
            }
        }
    }

    #[test]
    fn vanilla_methods_log_zero_weight_and_naive_logs_half() {
        let cfg = tiny_config(TrainingMethod::Grpo, 2);
        let run = run_experiment(&cfg).unwrap();
        for record in &run.metrics {
            assert_eq!(record.mean_importance_weight, 0.0);
            assert_eq!(record.importance_weight_variance, 0.0);
        }

        let cfg = tiny_config(TrainingMethod::NaiveNoisyGrpo, 2);
        let run = run_experiment(&cfg).unwrap();
        for record in &run.metrics {
            assert_eq!(record.mean_importance_weight, 0.5);
            assert_eq!(record.importance_weight_variance, 0.0);
        }
    }

    #[test]
    fn near_greedy_grpo_has_zero_reward_spread() {
        let mut cfg = tiny_config(TrainingMethod::Grpo, 7);
        cfg.temperature = 1e-4;
        let mut all_advantages_zero = true;
        let run = run_experiment_observed(&cfg, |trace| {
            if trace.report.advantages.iter().any(|a| *a != 0.0) {
                all_advantages_zero = false;
            }
        })
        .unwrap();
        for record in &run.metrics {
            assert_eq!(record.reward_std, 0.0, "iteration {}", record.iteration);
        }
        assert!(all_advantages_zero);
    }

    #[test]
    fn noisy_grpo_keeps_reward_spread_positive() {
        let mut cfg = tiny_config(TrainingMethod::NoisyGrpo, 0);
        cfg.iterations = 30;
        let run = run_experiment(&cfg).unwrap();
        for record in &run.metrics {
            assert!(
                record.reward_std > 0.0,
                "iteration {} lost its spread",
                record.iteration
            );
        }
    }

    #[test]
    fn old_policy_snapshot_tracks_collection_policy() {
        // With a frozen policy the rollout log-probs must equal the initial
        // policy's clean log-probs at every iteration.
        let mut cfg = tiny_config(TrainingMethod::NoisyGrpo, 13);
        cfg.learning_rate = 0.0;
        let init = initial_policy(&cfg);
        run_experiment_observed(&cfg, |trace| {
            let lp = init.log_probs(&trace.clean_observation);
            for r in &trace.rollouts {
                assert_eq!(r.log_prob_old, lp[r.action]);
            }
        })
        .unwrap();
    }

    #[test]
    fn traces_expose_consistent_rewards() {
        let cfg = tiny_config(TrainingMethod::NoisyGrpo, 17);
        run_experiment_observed(&cfg, |trace| {
            assert_eq!(trace.rollouts.len(), cfg.group_size);
            for (i, rollout) in trace.rollouts.iter().enumerate() {
                let correct = rollout.action == trace.ground_truth;
                assert_eq!(trace.accuracy_rewards[i], if correct { 1.0 } else { 0.0 });
                // Templated completions always earn the format point.
                assert_eq!(
                    trace.semantic_rewards[i],
                    trace.accuracy_rewards[i] + 1.0
                );
            }
        })
        .unwrap();
    }

    #[test]
    fn ablation_grid_covers_method_seed_product() {
        let base = tiny_config(TrainingMethod::NoisyGrpo, 0);
        let methods = [TrainingMethod::Grpo, TrainingMethod::NoisyGrpo];
        let rows = run_ablation_grid(&base, &methods, &[1, 2, 3]).unwrap();
        assert_eq!(rows.len(), 6);
        for row in &rows {
            assert_eq!(row.metrics.len(), base.iterations);
            assert!((0.0..=1.0).contains(&row.final_eval_accuracy));
            assert_eq!(
                row.final_eval_accuracy,
                row.metrics.last().unwrap().eval_accuracy
            );
        }

        // Same cell twice gives identical rows.
        let again = run_ablation_grid(&base, &[TrainingMethod::Grpo], &[1]).unwrap();
        assert_eq!(again[0].metrics, rows[0].metrics);

        assert!(run_ablation_grid(&base, &[], &[1]).is_err());
        assert!(run_ablation_grid(&base, &methods, &[]).is_err());
    }

    #[test]
    fn csv_rows_follow_the_header() {
        let record = MetricRecord {
            iteration: 3,
            mean_accuracy_reward: 0.5,
            reward_std: 0.25,
            mean_importance_weight: 0.4,
            importance_weight_variance: 0.01,
            eval_accuracy: 0.75,
        };
        let row = metric_csv_row(&record, TrainingMethod::NoisyGrpo, 9);
        assert_eq!(
            METRIC_CSV_HEADER.split(',').count(),
            row.split(',').count()
        );
        assert!(row.starts_with("3,NoisyGRPO,9,"));
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[3].parse::<f64>().unwrap(), 0.5);
        assert_eq!(fields[7].parse::<f64>().unwrap(), 0.75);
    }

    #[test]
    fn importance_weights_recompute_from_logged_rewards() {
        use crate::advantage::{importance_weight, prior_variance};

        let cfg = tiny_config(TrainingMethod::NoisyGrpo, 23);
        run_experiment_observed(&cfg, |trace| {
            let rewards = ScalarGroup::new(trace.semantic_rewards.clone()).unwrap();
            let sigma_n_sq = prior_variance(&rewards, cfg.advantage.gamma).unwrap();
            let w = importance_weight(sigma_n_sq, cfg.advantage.alpha).unwrap();
            assert!(
                (w - trace.report.importance_weight).abs() < 1e-12,
                "logged weight {} vs recomputed {}",
                trace.report.importance_weight,
                w
            );
        })
        .unwrap();
    }
}
