//! Clipped-surrogate training objective with a KL penalty toward a frozen
//! reference policy, plus its exact gradient for the linear-softmax policy.

use crate::error::{Error, Result};

/// A linear-softmax categorical policy over `num_actions` actions. Logits
/// are an affine map of the observation: `z_k = Σ_i x_i W[i,k] + b_k` with
/// the weight matrix stored row-major (`feature_dim × num_actions`).
///
/// One struct serves as the live policy, the rollout-time snapshot, and the
/// frozen reference; the objective takes all three.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySnapshot {
    feature_dim: usize,
    num_actions: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl PolicySnapshot {
    pub fn new(
        feature_dim: usize,
        num_actions: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if feature_dim == 0 || num_actions < 2 {
            return Err(Error::invalid(
                "policy needs feature_dim >= 1 and at least two actions",
            ));
        }
        if weights.len() != feature_dim * num_actions {
            return Err(Error::invalid(format!(
                "weight matrix must hold {} entries, got {}",
                feature_dim * num_actions,
                weights.len()
            )));
        }
        if bias.len() != num_actions {
            return Err(Error::invalid(format!(
                "bias must hold {} entries, got {}",
                num_actions,
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("policy parameters must be finite"));
        }
        Ok(Self {
            feature_dim,
            num_actions,
            weights,
            bias,
        })
    }

    /// Zero-initialized policy: uniform action probabilities everywhere.
    pub fn zeros(feature_dim: usize, num_actions: usize) -> Result<Self> {
        Self::new(
            feature_dim,
            num_actions,
            vec![0.0; feature_dim * num_actions],
            vec![0.0; num_actions],
        )
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Raw logits for one observation. Panics if the observation length
    /// does not match `feature_dim`; callers validate dimensions upstream.
    pub fn logits(&self, context: &[f64]) -> Vec<f64> {
        assert_eq!(
            context.len(),
            self.feature_dim,
            "observation length does not match policy feature_dim"
        );
        let mut z = self.bias.clone();
        for (i, x) in context.iter().enumerate() {
            let row = &self.weights[i * self.num_actions..(i + 1) * self.num_actions];
            for (k, w) in row.iter().enumerate() {
                z[k] += x * w;
            }
        }
        z
    }

    pub fn log_probs(&self, context: &[f64]) -> Vec<f64> {
        log_softmax(&self.logits(context))
    }

    pub fn probs(&self, context: &[f64]) -> Vec<f64> {
        softmax(&self.logits(context))
    }

    /// Highest-logit action, lowest index on ties.
    pub fn greedy_action(&self, context: &[f64]) -> usize {
        let z = self.logits(context);
        let mut best = 0;
        for (k, v) in z.iter().enumerate().skip(1) {
            if *v > z[best] {
                best = k;
            }
        }
        best
    }

    /// Gradient-ascent update `params += lr * grad`, in place.
    pub fn ascent_step(&mut self, grad: &PolicyGradient, lr: f64) {
        debug_assert_eq!(grad.weights.len(), self.weights.len());
        debug_assert_eq!(grad.bias.len(), self.bias.len());
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w += lr * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b += lr * g;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.bias.iter())
            .all(|v| v.is_finite())
    }
}

/// Objective gradient with respect to one policy's parameters, same layout
/// as [`PolicySnapshot`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    /// PPO clipping half-width ε, in (0, 1).
    pub clip_eps: f64,
    /// KL penalty coefficient β, non-negative.
    pub kl_beta: f64,
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps.is_finite() && self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid(format!(
                "clip_eps must lie in (0, 1), got {}",
                self.clip_eps
            )));
        }
        if !(self.kl_beta.is_finite() && self.kl_beta >= 0.0) {
            return Err(Error::invalid(format!(
                "kl_beta must be non-negative, got {}",
                self.kl_beta
            )));
        }
        Ok(())
    }
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            kl_beta: 0.04,
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// Numerically stable log-softmax via max subtraction.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Exact KL(p ‖ q) between the categoricals induced by two logit vectors.
pub fn categorical_kl(p_logits: &[f64], q_logits: &[f64]) -> f64 {
    let lp = log_softmax(p_logits);
    let lq = log_softmax(q_logits);
    lp.iter()
        .zip(&lq)
        .map(|(a, b)| a.exp() * (a - b))
        .sum()
}

/// One term of the clipped surrogate: `min(ρÂ, clip(ρ, 1−ε, 1+ε)·Â)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip_eps: f64) -> Result<f64> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(Error::invalid(format!(
            "probability ratio must be positive and finite, got {ratio}"
        )));
    }
    let clipped = ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage;
    Ok((ratio * advantage).min(clipped))
}

struct Batch<'a> {
    contexts: &'a [Vec<f64>],
    actions: &'a [usize],
    advantages: &'a [f64],
}

fn validate_batch(
    batch: &Batch<'_>,
    theta: &PolicySnapshot,
    theta_old: &PolicySnapshot,
    reference: &PolicySnapshot,
    cfg: &SurrogateConfig,
) -> Result<()> {
    cfg.validate()?;
    let g = batch.contexts.len();
    if g == 0 {
        return Err(Error::invalid("objective needs at least one rollout"));
    }
    if batch.actions.len() != g || batch.advantages.len() != g {
        return Err(Error::invalid(format!(
            "contexts, actions, and advantages must have equal length, got {}/{}/{}",
            g,
            batch.actions.len(),
            batch.advantages.len()
        )));
    }
    for snap in [theta_old, reference] {
        if snap.feature_dim != theta.feature_dim || snap.num_actions != theta.num_actions {
            return Err(Error::invalid(
                "policy snapshots must share feature_dim and num_actions",
            ));
        }
    }
    for ctx in batch.contexts {
        if ctx.len() != theta.feature_dim {
            return Err(Error::invalid(format!(
                "observation length {} does not match policy feature_dim {}",
                ctx.len(),
                theta.feature_dim
            )));
        }
        if ctx.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
    }
    if let Some(a) = batch.actions.iter().find(|a| **a >= theta.num_actions) {
        return Err(Error::invalid(format!(
            "action id {} out of range for {} actions",
            a, theta.num_actions
        )));
    }
    if batch.advantages.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("advantages must be finite"));
    }
    Ok(())
}

fn old_log_prob(theta_old: &PolicySnapshot, ctx: &[f64], action: usize) -> Result<f64> {
    let lp = theta_old.log_probs(ctx)[action];
    if lp.exp() <= 0.0 {
        return Err(Error::invalid(
            "old policy assigns zero probability to a taken action",
        ));
    }
    Ok(lp)
}

/// Training objective
/// `J(θ) = (1/G)·Σ_i min(ρ_i Ã_i, clip(ρ_i, 1−ε, 1+ε)·Ã_i) − β·mean_i KL(π_θ ‖ π_ref)`
/// with `ρ_i = π_θ(a_i|ctx_i) / π_old(a_i|ctx_i)` computed on clean
/// observations and exact categorical KL per context.
pub fn objective(
    group_contexts: &[Vec<f64>],
    actions: &[usize],
    advantages: &[f64],
    theta: &PolicySnapshot,
    theta_old: &PolicySnapshot,
    reference: &PolicySnapshot,
    cfg: &SurrogateConfig,
) -> Result<f64> {
    let batch = Batch {
        contexts: group_contexts,
        actions,
        advantages,
    };
    validate_batch(&batch, theta, theta_old, reference, cfg)?;

    let g = group_contexts.len() as f64;
    let mut surr = 0.0;
    let mut kl_sum = 0.0;
    for ((ctx, &action), &adv) in group_contexts.iter().zip(actions).zip(advantages) {
        let lp_new = theta.log_probs(ctx);
        let lp_old = old_log_prob(theta_old, ctx, action)?;
        let ratio = (lp_new[action] - lp_old).exp();
        surr += clipped_term(ratio, adv, cfg.clip_eps)?;
        kl_sum += categorical_kl(&theta.logits(ctx), &reference.logits(ctx));
    }
    Ok(surr / g - cfg.kl_beta * (kl_sum / g))
}

/// Exact gradient of [`objective`] with respect to `theta`'s parameters.
/// The clipped term differentiates through whichever branch the min
/// selects, taking the unclipped branch on ties, so a sample whose ratio is
/// clipped contributes no surrogate gradient.
pub fn objective_gradient(
    group_contexts: &[Vec<f64>],
    actions: &[usize],
    advantages: &[f64],
    theta: &PolicySnapshot,
    theta_old: &PolicySnapshot,
    reference: &PolicySnapshot,
    cfg: &SurrogateConfig,
) -> Result<PolicyGradient> {
    let batch = Batch {
        contexts: group_contexts,
        actions,
        advantages,
    };
    validate_batch(&batch, theta, theta_old, reference, cfg)?;

    let g = group_contexts.len() as f64;
    let k = theta.num_actions;
    let mut grad_w = vec![0.0; theta.weights.len()];
    let mut grad_b = vec![0.0; k];

    for ((ctx, &action), &adv) in group_contexts.iter().zip(actions).zip(advantages) {
        let lp_new = theta.log_probs(ctx);
        let lp_ref = reference.log_probs(ctx);
        let p_new: Vec<f64> = lp_new.iter().map(|v| v.exp()).collect();
        let lp_old = old_log_prob(theta_old, ctx, action)?;
        let ratio = (lp_new[action] - lp_old).exp();
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::invalid(format!(
                "probability ratio must be positive and finite, got {ratio}"
            )));
        }

        let unclipped = ratio * adv;
        let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;

        // Per-logit gradient of this sample's contribution.
        let mut gz = vec![0.0; k];
        if unclipped <= clipped {
            for (kk, gzk) in gz.iter_mut().enumerate() {
                let indicator = if kk == action { 1.0 } else { 0.0 };
                *gzk += ratio * adv * (indicator - p_new[kk]);
            }
        }
        if cfg.kl_beta != 0.0 {
            let kl: f64 = lp_new
                .iter()
                .zip(&lp_ref)
                .map(|(a, b)| a.exp() * (a - b))
                .sum();
            for (kk, gzk) in gz.iter_mut().enumerate() {
                *gzk -= cfg.kl_beta * p_new[kk] * ((lp_new[kk] - lp_ref[kk]) - kl);
            }
        }
        for gzk in &mut gz {
            *gzk /= g;
        }

        for (i, x) in ctx.iter().enumerate() {
            let row = &mut grad_w[i * k..(i + 1) * k];
            for (kk, slot) in row.iter_mut().enumerate() {
                *slot += x * gz[kk];
            }
        }
        for (kk, slot) in grad_b.iter_mut().enumerate() {
            *slot += gz[kk];
        }
    }

    Ok(PolicyGradient {
        weights: grad_w,
        bias: grad_b,
    })
}
