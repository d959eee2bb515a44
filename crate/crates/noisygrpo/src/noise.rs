//! Forward noising of observation tensors and the noise-level samplers used
//! during rollout collection.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::StandardNormal;

pub const DEFAULT_TOTAL_STEPS: usize = 1000;
pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 0.02;

/// Per-step variance schedule with precomputed cumulative signal fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds the linear schedule: `total_steps` betas evenly spaced from
    /// [`BETA_START`] to [`BETA_END`].
    pub fn linear(total_steps: usize) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        let betas: Vec<f64> = if total_steps == 1 {
            vec![BETA_START]
        } else {
            (0..total_steps)
                .map(|i| {
                    BETA_START + (BETA_END - BETA_START) * i as f64 / (total_steps - 1) as f64
                })
                .collect()
        };
        let mut alpha_bars = Vec::with_capacity(total_steps);
        let mut product = 1.0;
        for beta in &betas {
            product *= 1.0 - beta;
            alpha_bars.push(product);
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn total_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Discrete timestep for a continuous level in [0, 1]. Level 0 maps to
    /// step 0, meaning no noising at all; any positive level maps to at
    /// least step 1.
    pub fn timestep_for_level(&self, level: f64) -> Result<usize> {
        if !level.is_finite() || !(0.0..=1.0).contains(&level) {
            return Err(Error::invalid(format!("noise level {level} outside [0, 1]")));
        }
        if level == 0.0 {
            return Ok(0);
        }
        let t = (level * self.total_steps() as f64).floor() as usize;
        Ok(t.clamp(1, self.total_steps()))
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::linear(DEFAULT_TOTAL_STEPS).expect("default step count is positive")
    }
}

/// Distribution that draws the per-rollout noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseLevelSampler {
    /// Uniform on [0, hi).
    Uniform { hi: f64 },
    /// Normal draw clipped into [0, 1].
    Gaussian { mean: f64, var: f64 },
    /// Always the same level; consumes no randomness.
    Fixed { value: f64 },
}

impl NoiseLevelSampler {
    pub fn uniform(hi: f64) -> Result<Self> {
        if !(hi.is_finite() && hi > 0.0 && hi <= 1.0) {
            return Err(Error::invalid(format!(
                "uniform upper bound must lie in (0, 1], got {hi}"
            )));
        }
        Ok(Self::Uniform { hi })
    }

    pub fn gaussian(mean: f64, var: f64) -> Result<Self> {
        if !mean.is_finite() || !(var.is_finite() && var > 0.0) {
            return Err(Error::invalid(format!(
                "gaussian sampler needs finite mean and positive variance, got mean {mean}, var {var}"
            )));
        }
        Ok(Self::Gaussian { mean, var })
    }

    pub fn fixed(value: f64) -> Result<Self> {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!(
                "fixed level must lie in [0, 1], got {value}"
            )));
        }
        Ok(Self::Fixed { value })
    }

    /// Draws one noise level; always in [0, 1].
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Uniform { hi } => rng.random::<f64>() * hi,
            Self::Gaussian { mean, var } => {
                let z: f64 = rng.sample(StandardNormal);
                (mean + var.sqrt() * z).clamp(0.0, 1.0)
            }
            Self::Fixed { value } => *value,
        }
    }
}

impl Default for NoiseLevelSampler {
    fn default() -> Self {
        Self::Uniform { hi: 1.0 }
    }
}

/// Applies the closed-form forward corruption at the given level:
/// `sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps` elementwise, with
/// `t = max(1, floor(level * T))`. Level 0 returns the input bit-exactly
/// and draws nothing from the generator.
pub fn forward_noise<R: Rng + ?Sized>(
    x0: &[f64],
    level: f64,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let t = schedule.timestep_for_level(level)?;
    if t == 0 {
        return Ok(x0.to_vec());
    }
    let alpha_bar = schedule.alpha_bars[t - 1];
    let signal = alpha_bar.sqrt();
    let corruption = (1.0 - alpha_bar).sqrt();
    Ok(x0
        .iter()
        .map(|x| {
            let eps: f64 = rng.sample(StandardNormal);
            signal * x + corruption * eps
        })
        .collect())
}
