//! Actor-critic agent with the episodic-memory critic objective.
//!
//! The critic minimizes
//! `(1 − α)(Q(s,a) − Q')² + α(Q(s,a) − Q_M)²` where `Q'` is the one-step
//! bootstrapped target from the target networks and `Q_M` the episodic
//! estimate. The actor ascends `Q(s, π(s))` through the critic's action
//! gradient. Passing no episodic estimate selects the plain TD objective,
//! which is the DDPG baseline.

use std::io::{Read, Write};

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::nn::{read_params, soft_update, write_params, Activation, AdamState, Gradients, Mlp};
use crate::replay::Batch;
use crate::seeding::{stream, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Weight of the episodic term in the critic loss.
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Neighbours per episodic lookup.
    pub k: usize,
    /// Exploration noise std as a fraction of the action bound.
    pub noise_std: f64,
    pub batch_size: usize,
    pub warmup_steps: usize,
    pub lr: f64,
    pub hidden: Vec<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            tau: 0.005,
            k: 2,
            noise_std: 0.1,
            batch_size: 256,
            warmup_steps: 1000,
            lr: 1e-3,
            hidden: vec![256, 256],
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must be in [0, 1], got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!(
                "hidden widths must be non-empty and non-zero, got {:?}",
                self.hidden
            ));
        }
        Ok(())
    }
}

/// Loss value, parameter gradients and the batch-mean prediction.
#[derive(Clone, Debug)]
pub struct CriticLoss {
    pub loss: f64,
    pub grads: Gradients,
    pub q_mean: f64,
}

#[derive(Clone, Debug)]
pub struct ActorLoss {
    pub loss: f64,
    pub grads: Gradients,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub q_mean: f64,
    pub q_mem_mean: Option<f64>,
}

pub fn critic_input(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    if states.nrows() != actions.nrows() {
        return Err(Error::ShapeMismatch(
            "state/action batch sizes differ".into(),
        ));
    }
    Ok(concatenate![Axis(1), states, actions])
}

fn predictions(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
) -> Result<(crate::nn::ForwardCache, Array1<f64>)> {
    let input = critic_input(states, actions)?;
    let cache = critic.forward(input.view())?;
    let q = cache.output().column(0).to_owned();
    Ok((cache, q))
}

fn finish_critic_loss(
    critic: &Mlp,
    cache: &crate::nn::ForwardCache,
    q: &Array1<f64>,
    per_sample: Array1<f64>,
    dq: Array1<f64>,
) -> Result<CriticLoss> {
    let n = q.len() as f64;
    let loss = per_sample.sum() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("critic loss"));
    }
    let grad_out = dq.insert_axis(Axis(1));
    let (grads, _) = critic.backward(cache, grad_out.view())?;
    Ok(CriticLoss {
        loss,
        grads,
        q_mean: q.sum() / n,
    })
}

/// Mean squared TD error `(Q(s,a) − Q')²`.
pub fn td_critic_loss(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    td_target: ArrayView1<f64>,
) -> Result<CriticLoss> {
    let (cache, q) = predictions(critic, states, actions)?;
    if td_target.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "TD targets",
            expected: q.len(),
            got: td_target.len(),
        });
    }
    let n = q.len() as f64;
    let err = &q - &td_target;
    let per_sample = err.mapv(|e| e * e);
    let dq = err.mapv(|e| 2.0 * e / n);
    finish_critic_loss(critic, &cache, &q, per_sample, dq)
}

/// Mean of `(1 − α)(Q − Q')² + α(Q − Q_M)²`; gradients flow through `Q` only.
pub fn blended_critic_loss(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    td_target: ArrayView1<f64>,
    q_mem: ArrayView1<f64>,
    alpha: f64,
) -> Result<CriticLoss> {
    let (cache, q) = predictions(critic, states, actions)?;
    if td_target.len() != q.len() || q_mem.len() != q.len() {
        return Err(Error::DimensionMismatch {
            context: "critic targets",
            expected: q.len(),
            got: if td_target.len() != q.len() {
                td_target.len()
            } else {
                q_mem.len()
            },
        });
    }
    let n = q.len() as f64;
    let keep = 1.0 - alpha;
    let td_err = &q - &td_target;
    let mem_err = &q - &q_mem;
    let per_sample = ndarray::Zip::from(&td_err)
        .and(&mem_err)
        .map_collect(|&t, &m| keep * (t * t) + alpha * (m * m));
    let dq = ndarray::Zip::from(&td_err)
        .and(&mem_err)
        .map_collect(|&t, &m| 2.0 * (keep * t + alpha * m) / n);
    finish_critic_loss(critic, &cache, &q, per_sample, dq)
}

/// `−mean Q(s, π(s))` and its gradient with respect to the actor parameters;
/// the critic is held fixed.
pub fn actor_loss(actor: &Mlp, critic: &Mlp, states: ArrayView2<f64>) -> Result<ActorLoss> {
    let actor_cache = actor.forward(states)?;
    let actions = actor_cache.output().view();
    let input = critic_input(states, actions)?;
    let critic_cache = critic.forward(input.view())?;
    let n = states.nrows() as f64;
    let loss = -critic_cache.output().sum() / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("actor loss"));
    }
    let dq = Array2::from_elem((states.nrows(), 1), -1.0 / n);
    let d_input = critic.input_gradient(&critic_cache, dq.view())?;
    let d_action = d_input.slice(s![.., states.ncols()..]);
    let (grads, _) = actor.backward(&actor_cache, d_action)?;
    Ok(ActorLoss { loss, grads })
}

#[derive(Clone, Debug)]
pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    config: AgentConfig,
    spec: EnvSpec,
    env_steps: usize,
    warmup_rng: ChaCha8Rng,
    noise_rng: ChaCha8Rng,
}

impl Agent {
    /// Networks are initialized from the `Init` stream of `seed`; exploration
    /// draws come from the `Warmup` and `Noise` streams.
    pub fn new(spec: EnvSpec, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = stream(seed, Stream::Init);
        let mut actor_sizes = vec![spec.observation_dim];
        actor_sizes.extend(&config.hidden);
        actor_sizes.push(spec.action_dim);
        let mut critic_sizes = vec![spec.observation_dim + spec.action_dim];
        critic_sizes.extend(&config.hidden);
        critic_sizes.push(1);
        let actor = Mlp::new(
            &actor_sizes,
            Activation::Relu,
            Activation::ScaledTanh(spec.action_bound),
            &mut init,
        )?;
        let critic = Mlp::new(
            &critic_sizes,
            Activation::Relu,
            Activation::Identity,
            &mut init,
        )?;
        Self::from_networks(spec, config, actor, critic, seed)
    }

    /// Builds an agent around given online networks; targets start as copies.
    pub fn from_networks(
        spec: EnvSpec,
        config: AgentConfig,
        actor: Mlp,
        critic: Mlp,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if actor.input_dim() != spec.observation_dim || actor.output_dim() != spec.action_dim {
            return Err(Error::ShapeMismatch(
                "actor does not match the environment".into(),
            ));
        }
        if critic.input_dim() != spec.observation_dim + spec.action_dim || critic.output_dim() != 1
        {
            return Err(Error::ShapeMismatch(
                "critic does not match the environment".into(),
            ));
        }
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: AdamState::new(&actor),
            critic_opt: AdamState::new(&critic),
            actor,
            critic,
            config,
            spec,
            env_steps: 0,
            warmup_rng: stream(seed, Stream::Warmup),
            noise_rng: stream(seed, Stream::Noise),
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    /// Counts one environment interaction (drives the warmup schedule).
    pub fn record_env_step(&mut self) {
        self.env_steps += 1;
    }

    pub fn in_warmup(&self) -> bool {
        self.env_steps < self.config.warmup_steps
    }

    /// Deterministic actor output.
    pub fn policy(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.predict_one(state)
    }

    /// Exploring: uniform in the action box during warmup, afterwards actor
    /// output plus Gaussian noise, clipped. Not exploring: raw actor output.
    pub fn select_action(&mut self, state: &[f64], explore: bool) -> Result<Vec<f64>> {
        let bound = self.spec.action_bound;
        if !explore {
            return self.policy(state);
        }
        if self.in_warmup() {
            return Ok((0..self.spec.action_dim)
                .map(|_| self.warmup_rng.random_range(-bound..=bound))
                .collect());
        }
        let mut action = self.policy(state)?;
        let std = self.config.noise_std * bound;
        if std > 0.0 {
            let noise = Normal::new(0.0, std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            for a in &mut action {
                *a = (*a + noise.sample(&mut self.noise_rng)).clamp(-bound, bound);
            }
        }
        Ok(action)
    }

    /// `Q' = r + γ·(1 − done)·Q_target(s', π_target(s'))`.
    pub fn compute_td_target(&self, batch: &Batch) -> Result<Array1<f64>> {
        let next_actions = self.target_actor.predict(batch.next_states.view())?;
        let input = critic_input(batch.next_states.view(), next_actions.view())?;
        let next_q = self.target_critic.predict(input.view())?;
        let gamma = self.config.gamma;
        let mut target = batch.rewards.clone();
        ndarray::Zip::from(&mut target)
            .and(&batch.dones)
            .and(next_q.column(0))
            .for_each(|y, &d, &q| *y += gamma * (1.0 - d) * q);
        Ok(target)
    }

    /// Critic loss for `batch`: blended when `q_mem` is given, plain TD otherwise.
    pub fn critic_loss(&self, batch: &Batch, q_mem: Option<&[f64]>) -> Result<CriticLoss> {
        let target = self.compute_td_target(batch)?;
        match q_mem {
            Some(q_mem) => blended_critic_loss(
                &self.critic,
                batch.states.view(),
                batch.actions.view(),
                target.view(),
                ArrayView1::from(q_mem),
                self.config.alpha,
            ),
            None => td_critic_loss(
                &self.critic,
                batch.states.view(),
                batch.actions.view(),
                target.view(),
            ),
        }
    }

    pub fn actor_loss(&self, batch: &Batch) -> Result<ActorLoss> {
        actor_loss(&self.actor, &self.critic, batch.states.view())
    }

    /// One critic step, one actor step, then soft updates of both targets.
    pub fn update(&mut self, batch: &Batch, q_mem: Option<&[f64]>) -> Result<UpdateStats> {
        let critic = self.critic_loss(batch, q_mem)?;
        self.critic_opt
            .step(&mut self.critic, &critic.grads, self.config.lr)?;
        let actor = self.actor_loss(batch)?;
        self.actor_opt
            .step(&mut self.actor, &actor.grads, self.config.lr)?;
        soft_update(&mut self.target_critic, &self.critic, self.config.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.config.tau)?;
        Ok(UpdateStats {
            critic_loss: critic.loss,
            actor_loss: actor.loss,
            q_mean: critic.q_mean,
            q_mem_mean: q_mem.map(|q| q.iter().sum::<f64>() / q.len() as f64),
        })
    }

    /// Batch-mean critic prediction `Q(s, a)`.
    pub fn mean_q(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<f64> {
        let input = critic_input(states, actions)?;
        let q = self.critic.predict(input.view())?;
        Ok(q.sum() / q.len() as f64)
    }

    /// Checkpoint: `b"EMACAGT1"`, `u32` length + JSON header (config, spec,
    /// step counter), then actor, critic, target actor, target critic in the
    /// flat parameter layout. Optimizer moments are not stored.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&CheckpointHeader {
            config: self.config.clone(),
            spec: self.spec,
            env_steps: self.env_steps,
        })?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        for net in [
            &self.actor,
            &self.critic,
            &self.target_actor,
            &self.target_critic,
        ] {
            write_params(net, &mut w)?;
        }
        Ok(())
    }

    pub fn load<R: Read>(mut r: R, seed: u64) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an agent checkpoint".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut header = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut header)?;
        let header: CheckpointHeader = serde_json::from_slice(&header)?;
        let mut agent = Agent::new(header.spec, header.config, seed)?;
        for net in [
            &mut agent.actor,
            &mut agent.critic,
            &mut agent.target_actor,
            &mut agent.target_critic,
        ] {
            read_params(net, &mut r)?;
        }
        agent.env_steps = header.env_steps;
        Ok(agent)
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"EMACAGT1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: AgentConfig,
    spec: EnvSpec,
    env_steps: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use ndarray::array;

    fn spec1() -> EnvSpec {
        EnvSpec {
            observation_dim: 1,
            action_dim: 1,
            action_bound: 2.0,
            time_limit: 10,
        }
    }

    fn small_config() -> AgentConfig {
        AgentConfig {
            hidden: vec![8, 8],
            batch_size: 4,
            warmup_steps: 0,
            ..AgentConfig::default()
        }
    }

    fn batch_of(
        states: &[f64],
        actions: &[f64],
        rewards: &[f64],
        next: &[f64],
        dones: &[f64],
    ) -> Batch {
        let n = states.len();
        Batch {
            indices: (0..n).collect(),
            states: Array2::from_shape_vec((n, 1), states.to_vec()).unwrap(),
            actions: Array2::from_shape_vec((n, 1), actions.to_vec()).unwrap(),
            rewards: Array1::from(rewards.to_vec()),
            next_states: Array2::from_shape_vec((n, 1), next.to_vec()).unwrap(),
            dones: Array1::from(dones.to_vec()),
            mc_returns: Array1::zeros(n),
        }
    }

    fn linear(weights: &[f64], bias: f64, act: Activation) -> Mlp {
        Mlp::from_layers(vec![Dense {
            weight: Array2::from_shape_vec((1, weights.len()), weights.to_vec()).unwrap(),
            bias: array![bias],
            activation: act,
        }])
        .unwrap()
    }

    #[test]
    fn td_target_terminal_and_myopic() {
        let agent = Agent::new(spec1(), small_config(), 0).unwrap();
        let b = batch_of(
            &[0.1, 0.2],
            &[0.5, -0.5],
            &[1.5, -2.0],
            &[0.3, 0.4],
            &[1.0, 1.0],
        );
        assert_eq!(agent.compute_td_target(&b).unwrap(), array![1.5, -2.0]);
        let myopic = Agent::new(
            spec1(),
            AgentConfig {
                gamma: 0.0,
                ..small_config()
            },
            0,
        )
        .unwrap();
        let b = batch_of(
            &[0.1, 0.2],
            &[0.5, -0.5],
            &[1.5, -2.0],
            &[0.3, 0.4],
            &[0.0, 0.0],
        );
        assert_eq!(myopic.compute_td_target(&b).unwrap(), array![1.5, -2.0]);
    }

    #[test]
    fn td_target_matches_hand_evaluation() {
        // actor π(s) = 2·tanh(0.5 s + 0.1), critic Q(s, a) = 0.3 s − 0.7 a + 0.2
        let actor = linear(&[0.5], 0.1, Activation::ScaledTanh(2.0));
        let critic = linear(&[0.3, -0.7], 0.2, Activation::Identity);
        let config = AgentConfig {
            gamma: 0.9,
            ..small_config()
        };
        let agent = Agent::from_networks(spec1(), config, actor, critic, 0).unwrap();
        let b = batch_of(&[0.0], &[0.0], &[1.0], &[0.8], &[0.0]);
        let a_next = 2.0 * (0.5f64 * 0.8 + 0.1).tanh();
        let q_next = 0.3 * 0.8 - 0.7 * a_next + 0.2;
        let want = 1.0 + 0.9 * q_next;
        assert!((agent.compute_td_target(&b).unwrap()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_equals_td_objective() {
        let agent = Agent::new(
            spec1(),
            AgentConfig {
                alpha: 0.0,
                ..small_config()
            },
            3,
        )
        .unwrap();
        let b = batch_of(
            &[0.1, -0.4, 0.9],
            &[0.5, -1.0, 1.5],
            &[1.0, 0.0, -1.0],
            &[0.2, 0.3, 0.1],
            &[0.0, 1.0, 0.0],
        );
        let blended = agent.critic_loss(&b, Some(&[3.0, -7.0, 11.0])).unwrap();
        let plain = agent.critic_loss(&b, None).unwrap();
        assert_eq!(blended.loss, plain.loss);
        assert_eq!(blended.grads, plain.grads);
    }

    #[test]
    fn alpha_one_ignores_td_target() {
        let agent = Agent::new(
            spec1(),
            AgentConfig {
                alpha: 1.0,
                ..small_config()
            },
            3,
        )
        .unwrap();
        let b1 = batch_of(
            &[0.1, -0.4],
            &[0.5, -1.0],
            &[1.0, 0.0],
            &[0.2, 0.3],
            &[0.0, 0.0],
        );
        let b2 = batch_of(
            &[0.1, -0.4],
            &[0.5, -1.0],
            &[-50.0, 9.0],
            &[0.7, -0.3],
            &[1.0, 0.0],
        );
        let q_mem = [2.0, -1.0];
        let l1 = agent.critic_loss(&b1, Some(&q_mem)).unwrap();
        let l2 = agent.critic_loss(&b2, Some(&q_mem)).unwrap();
        assert_eq!(l1.loss, l2.loss);
        let input = critic_input(b1.states.view(), b1.actions.view()).unwrap();
        let q = agent.critic.predict(input.view()).unwrap();
        let want = ((q[[0, 0]] - 2.0).powi(2) + (q[[1, 0]] + 1.0).powi(2)) / 2.0;
        assert!((l1.loss - want).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_has_zero_loss_and_gradient() {
        let critic = linear(&[0.3, -0.7], 0.2, Activation::Identity);
        let states = array![[0.5], [1.0]];
        let actions = array![[0.25], [-0.5]];
        let q = critic
            .predict(critic_input(states.view(), actions.view()).unwrap().view())
            .unwrap();
        let q = q.column(0).to_owned();
        let l = blended_critic_loss(
            &critic,
            states.view(),
            actions.view(),
            q.view(),
            q.view(),
            0.4,
        )
        .unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.grads.flatten().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn flat_critic_gives_zero_actor_gradient() {
        let actor = linear(&[0.5], 0.1, Activation::ScaledTanh(2.0));
        let critic = linear(&[0.3, 0.0], 0.2, Activation::Identity);
        let l = actor_loss(&actor, &critic, array![[0.4], [-1.0]].view()).unwrap();
        assert!(l.grads.flatten().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn quadratic_critic_pulls_policy_toward_optimum() {
        // Q(s, a) = −(a − c)². At the current action a₀ a linear critic with
        // action slope −2(a₀ − c) has the same action gradient, so it stands
        // in for the quadratic one step at a time.
        let c = 0.7;
        let s = array![[1.5]];
        let mut actor = linear(&[0.1], 0.0, Activation::Identity);
        for _ in 0..200 {
            let a0 = actor.predict(s.view()).unwrap()[[0, 0]];
            let critic = linear(&[0.0, -2.0 * (a0 - c)], 0.0, Activation::Identity);
            let l = actor_loss(&actor, &critic, s.view()).unwrap();
            let g = l.grads.flatten();
            // ∂J/∂w = 2(a₀ − c)·s, ∂J/∂b = 2(a₀ − c)
            assert!((g[0] - 2.0 * (a0 - c) * 1.5).abs() < 1e-12);
            assert!((g[1] - 2.0 * (a0 - c)).abs() < 1e-12);
            let p: Vec<f64> = actor
                .flat_params()
                .iter()
                .zip(&g)
                .map(|(p, g)| p - 0.05 * g)
                .collect();
            actor.set_flat_params(&p).unwrap();
            let a1 = actor.predict(s.view()).unwrap()[[0, 0]];
            assert!((a1 - c).abs() <= (a0 - c).abs());
        }
        assert!((actor.predict(s.view()).unwrap()[[0, 0]] - c).abs() < 1e-6);
    }

    #[test]
    fn explore_false_is_deterministic_and_zero_noise_matches() {
        let config = AgentConfig {
            noise_std: 0.0,
            ..small_config()
        };
        let mut agent = Agent::new(spec1(), config, 5).unwrap();
        let s = [0.3];
        let a = agent.select_action(&s, false).unwrap();
        assert_eq!(a, agent.select_action(&s, false).unwrap());
        assert_eq!(a, agent.select_action(&s, true).unwrap());
    }

    #[test]
    fn warmup_actions_are_in_the_box() {
        let config = AgentConfig {
            warmup_steps: 100,
            ..small_config()
        };
        let mut agent = Agent::new(spec1(), config, 5).unwrap();
        for _ in 0..100 {
            let a = agent.select_action(&[0.0], true).unwrap();
            assert!(a[0].abs() <= 2.0);
            agent.record_env_step();
        }
        assert!(!agent.in_warmup());
    }

    #[test]
    fn frozen_targets_with_tau_zero() {
        let config = AgentConfig {
            tau: 0.0,
            ..small_config()
        };
        let mut agent = Agent::new(spec1(), config, 1).unwrap();
        let (ta, tc) = (agent.target_actor.clone(), agent.target_critic.clone());
        let b = batch_of(
            &[0.1, -0.4],
            &[0.5, -1.0],
            &[1.0, 0.0],
            &[0.2, 0.3],
            &[0.0, 0.0],
        );
        for _ in 0..5 {
            agent.update(&b, Some(&[0.5, 0.5])).unwrap();
        }
        assert_eq!(agent.target_actor, ta);
        assert_eq!(agent.target_critic, tc);
        assert_ne!(agent.actor, ta);
    }

    #[test]
    fn targets_start_as_copies() {
        let agent = Agent::new(spec1(), small_config(), 9).unwrap();
        assert_eq!(agent.actor, agent.target_actor);
        assert_eq!(agent.critic, agent.target_critic);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut agent = Agent::new(spec1(), small_config(), 2).unwrap();
        let b = batch_of(
            &[0.1, -0.4],
            &[0.5, -1.0],
            &[1.0, 0.0],
            &[0.2, 0.3],
            &[0.0, 0.0],
        );
        agent.update(&b, None).unwrap();
        agent.record_env_step();
        let mut bytes = Vec::new();
        agent.save(&mut bytes).unwrap();
        let back = Agent::load(bytes.as_slice(), 0).unwrap();
        assert_eq!(back.actor, agent.actor);
        assert_eq!(back.critic, agent.critic);
        assert_eq!(back.target_actor, agent.target_actor);
        assert_eq!(back.target_critic, agent.target_critic);
        assert_eq!(back.config(), agent.config());
        assert_eq!(back.env_steps(), 1);
        assert!(Agent::load(&bytes[1..], 0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AgentConfig {
            alpha: 1.5,
            ..AgentConfig::default()
        }
        .validate()
        .is_err());
        assert!(AgentConfig {
            k: 0,
            ..AgentConfig::default()
        }
        .validate()
        .is_err());
        assert!(AgentConfig {
            gamma: -0.1,
            ..AgentConfig::default()
        }
        .validate()
        .is_err());
        assert!(AgentConfig::default().validate().is_ok());
    }
}
