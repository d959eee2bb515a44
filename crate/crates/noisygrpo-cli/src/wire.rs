//! JSONL record shapes and JSON line builders.
//!
//! Output numbers go through [`noisygrpo::format_f64`], which prints 17
//! significant digits so every f64 round-trips exactly through the text.

use noisygrpo::advantage::{AdvantageReport, EstimatorMode};
use noisygrpo::format_f64;
use noisygrpo::trainer::{GroupTrace, MetricRecord, TrainingMethod};
use serde::Deserialize;

/// One rollout inside an input group record.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutRecord {
    pub noise_level: f64,
    pub semantic_reward: f64,
    #[serde(default)]
    #[allow(dead_code)]
    pub completion: Option<String>,
}

/// One line of `advantages` input: a group of scored rollouts.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RolloutGroupRecord {
    pub group_id: i64,
    pub rollouts: Vec<RolloutRecord>,
}

/// One line of `diagnose` input. Accepts both the `advantages` output shape
/// and the richer per-group log written by `train`; unknown fields are
/// ignored so either source parses.
#[derive(Debug, Deserialize)]
pub struct LoggedGroup {
    #[serde(default)]
    pub mode: Option<String>,
    pub prior_normed: Vec<f64>,
    pub obs_normed: Vec<f64>,
    pub posterior: Vec<f64>,
    pub importance_weight: f64,
    #[serde(default)]
    pub iteration: Option<usize>,
    #[serde(default)]
    pub noise_levels: Option<Vec<f64>>,
    #[serde(default)]
    pub semantic_rewards: Option<Vec<f64>>,
}

pub fn json_array(values: &[f64]) -> String {
    let inner: Vec<String> = values.iter().map(|v| format_f64(*v)).collect();
    format!("[{}]", inner.join(","))
}

pub fn mode_label(mode: EstimatorMode) -> &'static str {
    match mode {
        EstimatorMode::VanillaGrpo => "vanilla",
        EstimatorMode::NaiveNoisy => "naive",
        EstimatorMode::FullNoisy => "full",
    }
}

pub fn parse_mode_label(label: &str) -> Option<EstimatorMode> {
    match label {
        "vanilla" => Some(EstimatorMode::VanillaGrpo),
        "naive" => Some(EstimatorMode::NaiveNoisy),
        "full" => Some(EstimatorMode::FullNoisy),
        _ => None,
    }
}

/// One `advantages` output line.
pub fn advantage_line(group_id: i64, report: &AdvantageReport) -> String {
    format!(
        "{{\"group_id\":{},\"advantages\":{},\"importance_weight\":{},\"sigma_n_sq\":{},\"prior_normed\":{},\"obs_normed\":{},\"posterior\":{}}}",
        group_id,
        json_array(&report.advantages),
        format_f64(report.importance_weight),
        format_f64(report.sigma_n_sq),
        json_array(&report.prior_normed),
        json_array(&report.obs_normed),
        json_array(&report.posterior),
    )
}

/// One per-group line of the training log, carrying everything the
/// diagnostics need to audit the run.
pub fn trace_line(trace: &GroupTrace) -> String {
    let report = &trace.report;
    let noise_levels: Vec<f64> = trace.rollouts.iter().map(|r| r.noise_level).collect();
    format!(
        "{{\"iteration\":{},\"group_index\":{},\"group_id\":{},\"mode\":\"{}\",\"noise_levels\":{},\"semantic_rewards\":{},\"advantages\":{},\"importance_weight\":{},\"sigma_n_sq\":{},\"sigma_s_sq\":{},\"prior_normed\":{},\"obs_normed\":{},\"posterior\":{}}}",
        trace.iteration,
        trace.group_index,
        trace.question_id,
        mode_label(report.mode),
        json_array(&noise_levels),
        json_array(&trace.semantic_rewards),
        json_array(&report.advantages),
        format_f64(report.importance_weight),
        format_f64(report.sigma_n_sq),
        format_f64(report.sigma_s_sq),
        json_array(&report.prior_normed),
        json_array(&report.obs_normed),
        json_array(&report.posterior),
    )
}

pub fn metrics_json(method: TrainingMethod, seed: u64, metrics: &[MetricRecord]) -> String {
    let records: Vec<String> = metrics
        .iter()
        .map(|m| {
            format!(
                "{{\"iteration\":{},\"acc_reward\":{},\"reward_std\":{},\"imp_weight_mean\":{},\"imp_weight_var\":{},\"eval_acc\":{}}}",
                m.iteration,
                format_f64(m.mean_accuracy_reward),
                format_f64(m.reward_std),
                format_f64(m.mean_importance_weight),
                format_f64(m.importance_weight_variance),
                format_f64(m.eval_accuracy),
            )
        })
        .collect();
    format!(
        "{{\"method\":\"{}\",\"seed\":{},\"records\":[{}]}}",
        method.name(),
        seed,
        records.join(",")
    )
}
