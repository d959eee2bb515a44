//! Flat key=value experiment configuration files.
//!
//! One assignment per line; blank lines and `#` comments are skipped.
//! Unknown keys are rejected outright rather than ignored, so a typo cannot
//! silently run a different experiment.

use anyhow::{anyhow, bail, Result};
use noisygrpo::noise::NoiseLevelSampler;
use noisygrpo::trainer::{ExperimentConfig, TrainingMethod};
use std::collections::HashSet;

const VALID_KEYS: &[&str] = &[
    "method",
    "seed",
    "iterations",
    "groups_per_iteration",
    "group_size",
    "learning_rate",
    "temperature",
    "feature_dim",
    "num_answers",
    "eval_tasks",
    "inner_epochs",
    "noise_steps",
    "init_scale",
    "alpha",
    "gamma",
    "clip_eps",
    "kl_beta",
    "sampler",
    "tau",
    "format_weight",
];

const METHOD_NAMES: &str = "GRPO, GRPOPlusNoise, NaiveNoisyGRPO, NoisyGRPO";

pub fn parse_config(text: &str, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let mut entries: Vec<(&str, &str, usize)> = Vec::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {line_no}: expected `key = value`, got `{line}`");
        };
        let key = key.trim();
        let value = value.trim();
        if !VALID_KEYS.contains(&key) {
            bail!(
                "line {line_no}: unknown config key `{key}`; valid keys: {}",
                VALID_KEYS.join(", ")
            );
        }
        if !seen.insert(key) {
            bail!("line {line_no}: duplicate config key `{key}`");
        }
        entries.push((key, value, line_no));
    }

    let method = match entries.iter().find(|(k, _, _)| *k == "method") {
        Some((_, value, line_no)) => parse_method(value, *line_no)?,
        None => bail!("config must set `method` (one of {METHOD_NAMES})"),
    };
    let mut seed = 0u64;
    if let Some((_, value, line_no)) = entries.iter().find(|(k, _, _)| *k == "seed") {
        seed = parse_number(value, *line_no, "seed")?;
    }
    if let Some(s) = seed_override {
        seed = s;
    }

    let mut cfg = ExperimentConfig::for_method(method, seed);
    for (key, value, line_no) in entries {
        match key {
            "method" | "seed" => {}
            "iterations" => cfg.iterations = parse_number(value, line_no, key)?,
            "groups_per_iteration" => cfg.groups_per_iteration = parse_number(value, line_no, key)?,
            "group_size" => cfg.group_size = parse_number(value, line_no, key)?,
            "learning_rate" => cfg.learning_rate = parse_number(value, line_no, key)?,
            "temperature" => cfg.temperature = parse_number(value, line_no, key)?,
            "feature_dim" => cfg.feature_dim = parse_number(value, line_no, key)?,
            "num_answers" => cfg.num_answers = parse_number(value, line_no, key)?,
            "eval_tasks" => cfg.eval_tasks = parse_number(value, line_no, key)?,
            "inner_epochs" => cfg.inner_epochs = parse_number(value, line_no, key)?,
            "noise_steps" => cfg.noise_steps = parse_number(value, line_no, key)?,
            "init_scale" => cfg.init_scale = parse_number(value, line_no, key)?,
            "alpha" => cfg.advantage.alpha = parse_number(value, line_no, key)?,
            "gamma" => cfg.advantage.gamma = parse_number(value, line_no, key)?,
            "clip_eps" => cfg.surrogate.clip_eps = parse_number(value, line_no, key)?,
            "kl_beta" => cfg.surrogate.kl_beta = parse_number(value, line_no, key)?,
            "tau" => cfg.reward.tau = parse_number(value, line_no, key)?,
            "format_weight" => cfg.reward.format_weight = parse_number(value, line_no, key)?,
            "sampler" => cfg.sampler = parse_sampler(value, line_no)?,
            _ => unreachable!("key list already checked"),
        }
    }

    cfg.validate()
        .map_err(|e| anyhow!("invalid configuration: {e}"))?;
    Ok(cfg)
}

fn parse_method(value: &str, line_no: usize) -> Result<TrainingMethod> {
    TrainingMethod::all()
        .into_iter()
        .find(|m| m.name() == value)
        .ok_or_else(|| {
            anyhow!("line {line_no}: unknown method `{value}`; valid methods: {METHOD_NAMES}")
        })
}

fn parse_number<T: std::str::FromStr>(value: &str, line_no: usize, key: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("line {line_no}: invalid value `{value}` for `{key}`: {e}"))
}

/// Sampler syntax: `fixed:<level>`, `uniform:<hi>`, or `gaussian:<mean>,<var>`.
fn parse_sampler(value: &str, line_no: usize) -> Result<NoiseLevelSampler> {
    let syntax = "sampler must be fixed:<level>, uniform:<hi>, or gaussian:<mean>,<var>";
    let Some((kind, args)) = value.split_once(':') else {
        bail!("line {line_no}: {syntax}, got `{value}`");
    };
    let result = match kind.trim() {
        "fixed" => {
            let level: f64 = parse_number(args.trim(), line_no, "sampler level")?;
            NoiseLevelSampler::fixed(level)
        }
        "uniform" => {
            let hi: f64 = parse_number(args.trim(), line_no, "sampler hi")?;
            NoiseLevelSampler::uniform(hi)
        }
        "gaussian" => {
            let Some((mean, var)) = args.split_once(',') else {
                bail!("line {line_no}: {syntax}, got `{value}`");
            };
            let mean: f64 = parse_number(mean.trim(), line_no, "sampler mean")?;
            let var: f64 = parse_number(var.trim(), line_no, "sampler var")?;
            NoiseLevelSampler::gaussian(mean, var)
        }
        other => bail!("line {line_no}: unknown sampler kind `{other}`; {syntax}"),
    };
    result.map_err(|e| anyhow!("line {line_no}: {e}"))
}
