//! Advantage estimation for noise-injected rollout groups.
//!
//! The full estimator treats the normalized semantic reward of each rollout
//! as a noisy observation of trajectory quality and the noise level it was
//! generated under as a prior: a rollout produced from a barely corrupted
//! observation is expected to be better than one produced from near-pure
//! noise. Both signals are group-normalized, fused as Gaussian mean
//! estimates, and the fused posterior is normalized once more to give the
//! final advantages. Two baselines share the same report shape: plain
//! group-normalized rewards, and fusion with equal weights.

use crate::error::{Error, Result};
use crate::group_stats::{group_std, normalize, ScalarGroup};

/// Which estimator produced a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMode {
    /// Group-normalized semantic rewards only; no prior.
    VanillaGrpo,
    /// Prior and observation fused with equal weights.
    NaiveNoisy,
    /// Variance-weighted fusion of prior and observation.
    FullNoisy,
}

impl EstimatorMode {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorMode::VanillaGrpo => "vanilla",
            EstimatorMode::NaiveNoisy => "naive",
            EstimatorMode::FullNoisy => "full",
        }
    }
}

/// Estimator hyperparameters.
///
/// `alpha` is the observation variance; `gamma` scales the reward-spread
/// term in the prior variance. Both must be positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdvantageParams {
    pub alpha: f64,
    pub gamma: f64,
    pub mode: EstimatorMode,
}

impl AdvantageParams {
    pub fn new(alpha: f64, gamma: f64, mode: EstimatorMode) -> Result<Self> {
        let params = Self { alpha, gamma, mode };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::invalid(format!(
                "alpha must be a positive finite number, got {}",
                self.alpha
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be a positive finite number, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

impl Default for AdvantageParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.01,
            mode: EstimatorMode::FullNoisy,
        }
    }
}

/// One rollout group ready for estimation: the noise level each rollout was
/// generated under, paired with its semantic reward.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardedGroup {
    noise_levels: Vec<f64>,
    semantic_rewards: Vec<f64>,
}

impl RewardedGroup {
    pub fn new(noise_levels: Vec<f64>, semantic_rewards: Vec<f64>) -> Result<Self> {
        if noise_levels.len() != semantic_rewards.len() {
            return Err(Error::invalid(format!(
                "noise level count {} does not match reward count {}",
                noise_levels.len(),
                semantic_rewards.len()
            )));
        }
        if noise_levels.len() < 2 {
            return Err(Error::invalid(format!(
                "a group needs at least 2 rollouts, got {}",
                noise_levels.len()
            )));
        }
        if let Some(bad) = noise_levels
            .iter()
            .find(|n| !n.is_finite() || **n < 0.0 || **n > 1.0)
        {
            return Err(Error::invalid(format!(
                "noise level {bad} outside [0, 1]"
            )));
        }
        if let Some(bad) = semantic_rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::invalid(format!("non-finite semantic reward {bad}")));
        }
        Ok(Self {
            noise_levels,
            semantic_rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.noise_levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noise_levels.is_empty()
    }

    pub fn noise_levels(&self) -> &[f64] {
        &self.noise_levels
    }

    pub fn semantic_rewards(&self) -> &[f64] {
        &self.semantic_rewards
    }
}

/// Every intermediate of the estimation pipeline, exposed so downstream
/// diagnostics can audit each step.
///
/// `importance_weight` is the fusion weight placed on the prior. Vanilla
/// reports carry 0 there by convention since no fusion happens; fused
/// reports always carry a value in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageReport {
    pub mode: EstimatorMode,
    pub advantages: Vec<f64>,
    pub prior_normed: Vec<f64>,
    pub obs_normed: Vec<f64>,
    pub posterior: Vec<f64>,
    pub sigma_n_sq: f64,
    pub sigma_s_sq: f64,
    pub importance_weight: f64,
}

/// Prior reward of a rollout: `1 - noise_level`.
pub fn prior_reward(noise_level: f64) -> Result<f64> {
    if !noise_level.is_finite() || !(0.0..=1.0).contains(&noise_level) {
        return Err(Error::invalid(format!(
            "noise level {noise_level} outside [0, 1]"
        )));
    }
    Ok(1.0 - noise_level)
}

/// Prior variance `gamma / (gamma + std(rewards)^2)`, computed over the raw
/// (unnormalized) semantic rewards. Always in (0, 1]; exactly 1 for a
/// constant-reward group.
pub fn prior_variance(semantic_rewards: &ScalarGroup, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::invalid(format!(
            "gamma must be a positive finite number, got {gamma}"
        )));
    }
    let std = group_std(semantic_rewards);
    Ok(gamma / (gamma + std * std))
}

/// Fusion weight on the prior: `sigma_s_sq / (sigma_n_sq + sigma_s_sq)`.
pub fn importance_weight(sigma_n_sq: f64, sigma_s_sq: f64) -> Result<f64> {
    check_variance("sigma_n_sq", sigma_n_sq)?;
    check_variance("sigma_s_sq", sigma_s_sq)?;
    Ok(sigma_s_sq / (sigma_n_sq + sigma_s_sq))
}

/// Gaussian posterior mean of one rollout:
/// `obs + w * (prior - obs)` with `w = sigma_s_sq / (sigma_n_sq + sigma_s_sq)`.
pub fn posterior_fuse(
    prior_normed: f64,
    obs_normed: f64,
    sigma_n_sq: f64,
    sigma_s_sq: f64,
) -> Result<f64> {
    let w = importance_weight(sigma_n_sq, sigma_s_sq)?;
    Ok(obs_normed + w * (prior_normed - obs_normed))
}

/// Runs the configured estimator over one group and reports every
/// intermediate alongside the final advantages.
pub fn estimate_advantages(group: &RewardedGroup, params: &AdvantageParams) -> Result<AdvantageReport> {
    params.validate()?;

    let prior_raw: Vec<f64> = group.noise_levels.iter().map(|n| 1.0 - n).collect();
    let prior_group = ScalarGroup::new(prior_raw).expect("group invariants give a valid prior");
    let obs_group = ScalarGroup::new(group.semantic_rewards.clone())
        .expect("group invariants give valid rewards");

    let prior_normed = normalize(&prior_group).into_values();
    let obs_normed = normalize(&obs_group).into_values();
    let sigma_n_sq = prior_variance(&obs_group, params.gamma)?;

    let (sigma_s_sq, weight, posterior) = match params.mode {
        EstimatorMode::VanillaGrpo => (params.alpha, 0.0, obs_normed.clone()),
        EstimatorMode::NaiveNoisy => {
            let posterior = fuse_all(&prior_normed, &obs_normed, sigma_n_sq, sigma_n_sq)?;
            (sigma_n_sq, 0.5, posterior)
        }
        EstimatorMode::FullNoisy => {
            let weight = importance_weight(sigma_n_sq, params.alpha)?;
            let posterior = fuse_all(&prior_normed, &obs_normed, sigma_n_sq, params.alpha)?;
            (params.alpha, weight, posterior)
        }
    };

    // The vanilla posterior is already the normalized reward vector;
    // renormalizing it would only churn the last bit.
    let advantages = if params.mode == EstimatorMode::VanillaGrpo {
        posterior.clone()
    } else {
        let posterior_group =
            ScalarGroup::new(posterior.clone()).expect("fusion of finite inputs stays finite");
        normalize(&posterior_group).into_values()
    };

    Ok(AdvantageReport {
        mode: params.mode,
        advantages,
        prior_normed,
        obs_normed,
        posterior,
        sigma_n_sq,
        sigma_s_sq,
        importance_weight: weight,
    })
}

fn fuse_all(
    prior_normed: &[f64],
    obs_normed: &[f64],
    sigma_n_sq: f64,
    sigma_s_sq: f64,
) -> Result<Vec<f64>> {
    prior_normed
        .iter()
        .zip(obs_normed)
        .map(|(p, o)| posterior_fuse(*p, *o, sigma_n_sq, sigma_s_sq))
        .collect()
}

fn check_variance(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::invalid(format!(
            "{name} must be a positive finite number, got {value}"
        )));
    }
    Ok(())
}
