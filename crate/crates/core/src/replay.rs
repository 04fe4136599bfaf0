//! Episode staging, Monte-Carlo return computation and the replay buffer with
//! episodic-return prioritized sampling.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;

/// One environment step as recorded during an episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub truncated: bool,
}

/// A finalized step carrying its discounted return. Only finalized
/// transitions enter the replay buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub mc_return: f64,
}

/// How the in-flight episode ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeEnd {
    Terminated,
    Truncated,
}

#[derive(Clone, Debug, Default)]
pub struct EpisodeBuffer {
    steps: Vec<Step>,
}

impl EpisodeBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: Step) {
        self.steps.push(step);
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn end(&self) -> Option<EpisodeEnd> {
        let last = self.steps.last()?;
        if last.done {
            Some(EpisodeEnd::Terminated)
        } else if last.truncated {
            Some(EpisodeEnd::Truncated)
        } else {
            None
        }
    }

    /// Computes `R_t = r_t + γ·R_{t+1}` backwards and empties the buffer.
    ///
    /// A naturally terminated episode seeds the recursion with 0. A truncated
    /// one seeds it with `Σ_j γ^j e_j` over `extension_rewards`, the rewards
    /// collected past the time limit.
    pub fn finalize(&mut self, gamma: f64, extension_rewards: &[f64]) -> Result<Vec<Transition>> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be in [0, 1], got {gamma}"
            )));
        }
        let tail = match self.end() {
            _ if self.steps.is_empty() => return Err(Error::EmptyEpisode),
            None => return Err(Error::EpisodeRunning),
            Some(EpisodeEnd::Terminated) if !extension_rewards.is_empty() => {
                return Err(Error::NaturalTermination)
            }
            Some(EpisodeEnd::Terminated) => 0.0,
            Some(EpisodeEnd::Truncated) => discounted_sum(extension_rewards, gamma),
        };
        let steps = std::mem::take(&mut self.steps);
        let mut returns = vec![0.0; steps.len()];
        let mut acc = tail;
        for (t, step) in steps.iter().enumerate().rev() {
            acc = step.reward + gamma * acc;
            returns[t] = acc;
        }
        if !returns.iter().all(|r| r.is_finite()) {
            return Err(Error::NonFinite("episode returns"));
        }
        Ok(steps
            .into_iter()
            .zip(returns)
            .map(|(s, mc_return)| Transition {
                state: s.state,
                action: s.action,
                reward: s.reward,
                next_state: s.next_state,
                done: s.done,
                mc_return,
            })
            .collect())
    }
}

/// `Σ_j γ^j r_j`, evaluated backwards.
pub fn discounted_sum(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}

/// Maps returns to non-negative priorities `(R_i − R_min) + η`,
/// `η = 0.01·(R_max − R_min + 1e-8)`.
pub fn priorities_from_returns(returns: &[f64]) -> Vec<f64> {
    let (lo, hi) = returns
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        });
    let eta = 1e-2 * (hi - lo + 1e-8);
    returns.iter().map(|r| (r - lo) + eta).collect()
}

/// `P(i) = p_i^β / Σ_k p_k^β`; exactly uniform at `β = 0`.
pub fn sampling_probabilities(priorities: &[f64], beta: f64) -> Vec<f64> {
    let n = priorities.len();
    if beta == 0.0 {
        return vec![1.0 / n as f64; n];
    }
    let powered: Vec<f64> = priorities.iter().map(|p| p.powf(beta)).collect();
    let total: f64 = powered.iter().sum();
    powered.iter().map(|w| w / total).collect()
}

/// A sampled minibatch, one row per draw.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1.0 at natural termination, else 0.0
    pub dones: Array1<f64>,
    pub mc_returns: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn from_transitions(indices: Vec<usize>, transitions: &[&Transition]) -> Result<Self> {
        let first = transitions.first().ok_or(Error::EmptyBuffer)?;
        let (n, obs, act) = (transitions.len(), first.state.len(), first.action.len());
        let mut states = Array2::zeros((n, obs));
        let mut actions = Array2::zeros((n, act));
        let mut next_states = Array2::zeros((n, obs));
        for (i, t) in transitions.iter().enumerate() {
            if t.state.len() != obs || t.next_state.len() != obs || t.action.len() != act {
                return Err(Error::ShapeMismatch("ragged transitions in batch".into()));
            }
            states.row_mut(i).assign(&ndarray::aview1(&t.state));
            actions.row_mut(i).assign(&ndarray::aview1(&t.action));
            next_states
                .row_mut(i)
                .assign(&ndarray::aview1(&t.next_state));
        }
        Ok(Self {
            indices,
            states,
            actions,
            rewards: transitions.iter().map(|t| t.reward).collect(),
            next_states,
            dones: transitions
                .iter()
                .map(|t| if t.done { 1.0 } else { 0.0 })
                .collect(),
            mc_returns: transitions.iter().map(|t| t.mc_return).collect(),
        })
    }
}

/// Replay buffer sampling transition `i` with probability
/// `P(i) = p_i^β / Σ_k p_k^β`.
///
/// Returns can be negative, so priorities are shifted:
/// `p_i = (R_i − R_min) + η` with `η = 0.01·(R_max − R_min + 1e-8)`.
/// Priorities are refreshed after every pushed episode.
#[derive(Clone, Debug)]
pub struct PrioritizedBuffer {
    transitions: Vec<Transition>,
    priorities: Vec<f64>,
    /// running sums of `p_i^β`
    cumulative: Vec<f64>,
    beta: f64,
    capacity: usize,
}

impl PrioritizedBuffer {
    pub fn new(capacity: usize, beta: f64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidArgument(
                "replay capacity must be non-zero".into(),
            ));
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be >= 0, got {beta}"
            )));
        }
        Ok(Self {
            transitions: Vec::new(),
            priorities: Vec::new(),
            cumulative: Vec::new(),
            beta,
            capacity,
        })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn priorities(&self) -> &[f64] {
        &self.priorities
    }

    /// Appends a finalized episode and, when given, adds every
    /// `(project([s, a]), R)` pair to the episodic memory. Priorities are
    /// recomputed afterwards. Nothing is stored if either side would overflow.
    pub fn push_finalized(
        &mut self,
        transitions: Vec<Transition>,
        memory: Option<&mut EpisodicMemory>,
    ) -> Result<()> {
        if self.len() + transitions.len() > self.capacity {
            return Err(Error::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        if !transitions.iter().all(|t| t.mc_return.is_finite()) {
            return Err(Error::NonFinite("transition returns"));
        }
        if let Some(memory) = memory {
            if memory.table.len() + transitions.len() > memory.table.capacity() {
                return Err(Error::CapacityExceeded {
                    capacity: memory.table.capacity(),
                });
            }
            for t in &transitions {
                memory.add(&t.state, &t.action, t.mc_return)?;
            }
        }
        self.transitions.extend(transitions);
        self.recompute_priorities();
        Ok(())
    }

    /// Rebuilds `p_i` from the stored returns and the sampling prefix sums.
    pub fn recompute_priorities(&mut self) {
        let returns: Vec<f64> = self.transitions.iter().map(|t| t.mc_return).collect();
        self.priorities = priorities_from_returns(&returns);
        self.rebuild_cumulative();
    }

    /// Replaces the priorities until the next refresh.
    pub fn set_priorities(&mut self, priorities: Vec<f64>) -> Result<()> {
        if priorities.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "priorities",
                expected: self.len(),
                got: priorities.len(),
            });
        }
        if !priorities.iter().all(|p| *p >= 0.0 && p.is_finite()) {
            return Err(Error::InvalidArgument(
                "priorities must be finite and >= 0".into(),
            ));
        }
        self.priorities = priorities;
        self.rebuild_cumulative();
        Ok(())
    }

    fn rebuild_cumulative(&mut self) {
        let beta = self.beta;
        let mut acc = 0.0;
        self.cumulative = self
            .priorities
            .iter()
            .map(|&p| {
                acc += if beta == 0.0 { 1.0 } else { p.powf(beta) };
                acc
            })
            .collect();
    }

    /// `P(i)` for every stored transition.
    pub fn probabilities(&self) -> Vec<f64> {
        sampling_probabilities(&self.priorities, self.beta)
    }

    /// Draws one index according to `P(i)`.
    pub fn sample_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if self.beta == 0.0 {
            return Ok(rng.random_range(0..self.len()));
        }
        let total = self.cumulative[self.len() - 1];
        let target = rng.random::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= target);
        Ok(i.min(self.len() - 1))
    }

    /// `batch_size` independent draws with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be non-zero".into()));
        }
        let indices = (0..batch_size)
            .map(|_| self.sample_index(rng))
            .collect::<Result<Vec<_>>>()?;
        let picked: Vec<&Transition> = indices.iter().map(|&i| &self.transitions[i]).collect();
        Batch::from_transitions(indices, &picked)
    }
}
