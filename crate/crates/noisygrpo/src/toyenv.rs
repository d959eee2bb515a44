//! Synthetic grounded-QA environment. Observations are standard-normal
//! feature vectors, the correct answer is the argmax of a hidden linear
//! labeling rule, and grounding degrades as forward noising corrupts the
//! observation the policy acts on.

use crate::error::{Error, Result};
use crate::noise::{forward_noise, NoiseLevelSampler, NoiseSchedule};
use crate::reward::{AnswerKind, AnswerSpec};
use crate::surrogate::{softmax, PolicySnapshot};
use rand::Rng;
use rand_distr::StandardNormal;

/// Task distribution for one experiment: fixed feature dimension, answer
/// count, and hidden labeling weights drawn once from the experiment seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEnv {
    feature_dim: usize,
    num_answers: usize,
    labeling_weights: Vec<f64>,
}

impl ToyEnv {
    /// Draws the hidden labeling weights i.i.d. standard normal.
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        num_answers: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::invalid("feature_dim must be positive"));
        }
        if num_answers < 2 {
            return Err(Error::invalid("environment needs at least two answers"));
        }
        let labeling_weights = (0..feature_dim * num_answers)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Ok(Self {
            feature_dim,
            num_answers,
            labeling_weights,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_answers(&self) -> usize {
        self.num_answers
    }

    /// Hidden labeling matrix, row-major `feature_dim × num_answers`.
    pub fn labeling_weights(&self) -> &[f64] {
        &self.labeling_weights
    }

    /// Policy whose parameters equal the labeling rule; it answers every
    /// clean observation correctly.
    pub fn oracle_policy(&self) -> PolicySnapshot {
        PolicySnapshot::new(
            self.feature_dim,
            self.num_answers,
            self.labeling_weights.clone(),
            vec![0.0; self.num_answers],
        )
        .expect("labeling weights are finite by construction")
    }

    /// One task plus its clean observation (entries i.i.d. standard
    /// normal). The labeling rule is shared across all tasks of the
    /// environment.
    pub fn sample_task<R: Rng + ?Sized>(
        &self,
        question_id: u64,
        rng: &mut R,
    ) -> (ToyTask, Vec<f64>) {
        let observation: Vec<f64> = (0..self.feature_dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let task = ToyTask {
            feature_dim: self.feature_dim,
            num_answers: self.num_answers,
            labeling_weights: self.labeling_weights.clone(),
            question_id,
        };
        (task, observation)
    }

    /// Fraction of freshly sampled tasks where the greedy action on the
    /// clean observation matches the ground truth.
    pub fn evaluate_policy<R: Rng + ?Sized>(
        &self,
        policy: &PolicySnapshot,
        num_tasks: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if num_tasks == 0 {
            return Err(Error::invalid("evaluation needs at least one task"));
        }
        if policy.feature_dim() != self.feature_dim || policy.num_actions() != self.num_answers {
            return Err(Error::invalid(
                "policy shape does not match the environment",
            ));
        }
        let mut correct = 0usize;
        for id in 0..num_tasks {
            let (task, obs) = self.sample_task(id as u64, rng);
            if policy.greedy_action(&obs) == task.ground_truth(&obs) {
                correct += 1;
            }
        }
        Ok(correct as f64 / num_tasks as f64)
    }
}

/// One question: the hidden labeling rule scores every answer and the
/// highest-scoring one is correct.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    feature_dim: usize,
    num_answers: usize,
    labeling_weights: Vec<f64>,
    question_id: u64,
}

impl ToyTask {
    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_answers(&self) -> usize {
        self.num_answers
    }

    pub fn question_id(&self) -> u64 {
        self.question_id
    }

    /// Argmax of `observationᵀ · labeling_weights`, lowest index on ties.
    pub fn ground_truth(&self, clean_obs: &[f64]) -> usize {
        assert_eq!(
            clean_obs.len(),
            self.feature_dim,
            "observation length does not match task feature_dim"
        );
        let k = self.num_answers;
        let mut scores = vec![0.0f64; k];
        for (i, x) in clean_obs.iter().enumerate() {
            for (j, s) in scores.iter_mut().enumerate() {
                *s += x * self.labeling_weights[i * k + j];
            }
        }
        let mut best = 0;
        for (j, s) in scores.iter().enumerate().skip(1) {
            if *s > scores[best] {
                best = j;
            }
        }
        best
    }

    /// Answer key for reward scoring, in the `answer-k` template.
    pub fn answer_spec(&self, clean_obs: &[f64]) -> AnswerSpec {
        let truth = format!("answer-{}", self.ground_truth(clean_obs));
        AnswerSpec::new(AnswerKind::MultipleChoice, truth)
            .expect("template answers survive canonicalization")
    }
}

/// One sampled response: the noise level it saw, the observation after
/// forward noising, the chosen action with its templated completion, and
/// the action's log-probability under the collection-time policy evaluated
/// on the clean observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyRollout {
    pub noise_level: f64,
    pub noised_observation: Vec<f64>,
    pub action: usize,
    pub completion: String,
    pub log_prob_old: f64,
}

/// Templated completion for an action id. Always format-valid: one think
/// span with non-empty content, then the answer text.
pub fn completion_text(action: usize) -> String {
    format!("<think>option {action} fits the features best</think>answer-{action}")
}

/// Collects a group of rollouts for one task. Each rollout draws its own
/// noise level, corrupts the clean observation at that level, and samples
/// an action from the temperature-scaled softmax of the policy's logits on
/// the noised observation. The recorded log-probability uses the
/// un-tempered policy on the clean observation, matching how the update
/// step evaluates the old policy.
#[allow(clippy::too_many_arguments)]
pub fn collect_group<R: Rng + ?Sized>(
    task: &ToyTask,
    clean_obs: &[f64],
    policy: &PolicySnapshot,
    sampler: &NoiseLevelSampler,
    schedule: &NoiseSchedule,
    group_size: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<ToyRollout>> {
    if group_size < 2 {
        return Err(Error::invalid(format!(
            "group size must be at least 2, got {group_size}"
        )));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if clean_obs.len() != task.feature_dim {
        return Err(Error::invalid(
            "observation length does not match task feature_dim",
        ));
    }
    if policy.feature_dim() != task.feature_dim || policy.num_actions() != task.num_answers {
        return Err(Error::invalid("policy shape does not match the task"));
    }

    let clean_log_probs = policy.log_probs(clean_obs);
    let mut group = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let noise_level = sampler.sample(rng);
        let noised_observation = forward_noise(clean_obs, noise_level, schedule, rng)?;
        let tempered: Vec<f64> = policy
            .logits(&noised_observation)
            .iter()
            .map(|z| z / temperature)
            .collect();
        let action = sample_categorical(&softmax(&tempered), rng);
        group.push(ToyRollout {
            noise_level,
            noised_observation,
            action,
            completion: completion_text(action),
            log_prob_old: clean_log_probs[action],
        });
    }
    Ok(group)
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}
