//! Overestimation study: critic prediction, true discounted return of the
//! current policy, and episodic estimate, all on one replay batch.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::Agent;
use crate::env::{Env, EpisodeStatus};
use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;
use crate::nn::Mlp;
use crate::replay::PrioritizedBuffer;

pub const DEFAULT_CADENCE: usize = 5000;
pub const TRUE_VALUE_MAX_STEPS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverestimationSample {
    pub step: usize,
    pub q_pred_mean: f64,
    pub q_true_mean: f64,
    pub q_mem_mean: f64,
}

impl OverestimationSample {
    pub fn is_finite(&self) -> bool {
        self.q_pred_mean.is_finite() && self.q_true_mean.is_finite() && self.q_mem_mean.is_finite()
    }
}

/// Whether a measurement is taken after environment step `step` (1-based).
pub fn is_due(step: usize, cadence: usize) -> bool {
    step > 0 && cadence > 0 && step.is_multiple_of(cadence)
}

/// Number of measurements a run of `total_steps` produces.
pub fn expected_samples(total_steps: usize, cadence: usize) -> usize {
    total_steps.checked_div(cadence).unwrap_or(0)
}

/// Mean discounted return of the deterministic `actor` started from each of
/// `start_states`, rolled for at most `max_steps` or until natural
/// termination. Each start state runs on a copy of `env` with its time limit
/// removed; all rollouts advance in lockstep so the actor sees one batch per
/// step.
pub fn true_value_estimate(
    actor: &Mlp,
    env: &Env,
    start_states: &[Vec<f64>],
    gamma: f64,
    max_steps: usize,
) -> Result<f64> {
    if start_states.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let obs_dim = env.spec().observation_dim;
    let mut envs = Vec::with_capacity(start_states.len());
    for s in start_states {
        let mut e = env.clone().with_time_limit(None);
        e.set_state(s)?;
        envs.push(e);
    }
    let mut returns = vec![0.0; envs.len()];
    let mut discount = 1.0;
    for _ in 0..max_steps {
        let live: Vec<usize> = (0..envs.len())
            .filter(|&i| envs[i].status() == EpisodeStatus::Running)
            .collect();
        if live.is_empty() {
            break;
        }
        let mut obs = Array2::zeros((live.len(), obs_dim));
        for (row, &i) in live.iter().enumerate() {
            obs.row_mut(row)
                .assign(&ndarray::aview1(&envs[i].observation()));
        }
        let actions = actor.predict(obs.view())?;
        for (row, &i) in live.iter().enumerate() {
            let action = actions.row(row).to_vec();
            returns[i] += discount * envs[i].step(&action)?.reward;
        }
        discount *= gamma;
    }
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    if !mean.is_finite() {
        return Err(Error::NonFinite("true value estimate"));
    }
    Ok(mean)
}

/// Takes one measurement on a batch of `batch_size` draws from `replay`.
///
/// `q_pred` is the critic on the stored `(s, a)` pairs, `q_mem` the episodic
/// lookup for the same pairs, `q_true` the current policy's discounted return
/// from the stored states. Only `rng` and the scratch environments change.
#[allow(clippy::too_many_arguments)]
pub fn measure<R: Rng + ?Sized>(
    step: usize,
    agent: &Agent,
    replay: &PrioritizedBuffer,
    memory: &EpisodicMemory,
    env: &Env,
    batch_size: usize,
    max_steps: usize,
    rng: &mut R,
) -> Result<OverestimationSample> {
    let batch = replay.sample(batch_size, rng)?;
    let q_pred_mean = agent.mean_q(batch.states.view(), batch.actions.view())?;
    let q_mem = memory.estimate(batch.states.view(), batch.actions.view(), agent.config().k)?;
    let q_mem_mean = q_mem.iter().sum::<f64>() / q_mem.len() as f64;
    let starts: Vec<Vec<f64>> = batch
        .states
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    let q_true_mean =
        true_value_estimate(&agent.actor, env, &starts, agent.config().gamma, max_steps)?;
    let sample = OverestimationSample {
        step,
        q_pred_mean,
        q_true_mean,
        q_mem_mean,
    };
    if !sample.is_finite() {
        return Err(Error::NonFinite("overestimation sample"));
    }
    Ok(sample)
}
