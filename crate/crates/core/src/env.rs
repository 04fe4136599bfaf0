//! Seedable continuous-control environments with closed-form dynamics.
//!
//! Both models integrate with semi-implicit (symplectic) Euler at a fixed
//! tick and are pure functions of `(state, action)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation_dim: usize,
    pub action_dim: usize,
    /// Symmetric bound applied to every action component.
    pub action_bound: f64,
    pub time_limit: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Natural termination.
    pub done: bool,
    /// Time-limit cut.
    pub truncated: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpisodeStatus {
    Running,
    Terminated,
    Truncated,
}

/// Point-mass pendulum, angle measured from upright.
///
/// `θ̈ = (g/l)·sin θ + u/(m·l²)`, velocity clipped to `±MAX_SPEED`.
/// Observation `[cos θ, sin θ, θ̇]`. Reward
/// `−(θ² + 0.1·θ̇² + 0.001·u²)` on the post-step state with θ wrapped to
/// `[−π, π)`; it lies in `[PENDULUM_REWARD_MIN, 0]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pendulum {
    pub theta: f64,
    pub theta_dot: f64,
}

impl Pendulum {
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const GRAVITY: f64 = 9.81;
    pub const DT: f64 = 0.05;
    pub const MAX_TORQUE: f64 = 2.0;
    pub const MAX_SPEED: f64 = 8.0;
    pub const TIME_LIMIT: usize = 200;

    /// Mechanical energy with the pivot as the zero of potential energy.
    pub fn energy(&self) -> f64 {
        let (m, l, g) = (Self::MASS, Self::LENGTH, Self::GRAVITY);
        0.5 * m * l * l * self.theta_dot * self.theta_dot + m * g * l * self.theta.cos()
    }

    fn advance(&mut self, torque: f64) -> f64 {
        let (m, l, g, dt) = (Self::MASS, Self::LENGTH, Self::GRAVITY, Self::DT);
        let accel = g / l * self.theta.sin() + torque / (m * l * l);
        self.theta_dot = (self.theta_dot + accel * dt).clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = wrap_angle(self.theta + self.theta_dot * dt);
        -(self.theta * self.theta + 0.1 * self.theta_dot * self.theta_dot + 0.001 * torque * torque)
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.theta.cos(), self.theta.sin(), self.theta_dot]
    }
}

pub const PENDULUM_REWARD_MIN: f64 =
    -(PI * PI + 0.1 * Pendulum::MAX_SPEED * Pendulum::MAX_SPEED + 0.001 * 4.0);

fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Velocity-controlled point on `[−1, 1]²` chasing a fixed goal.
///
/// Observation `[x, y, goal_x, goal_y]`. Each step pays `−distance`; reaching
/// the goal radius adds `GOAL_BONUS` and terminates. Rewards lie in
/// `[−2√2, GOAL_BONUS]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Reacher {
    pub position: [f64; 2],
    pub goal: [f64; 2],
}

impl Reacher {
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 1.0;
    pub const GOAL_RADIUS: f64 = 0.05;
    pub const GOAL_BONUS: f64 = 10.0;
    pub const TIME_LIMIT: usize = 100;

    pub fn distance(&self) -> f64 {
        let dx = self.position[0] - self.goal[0];
        let dy = self.position[1] - self.goal[1];
        (dx * dx + dy * dy).sqrt()
    }

    fn advance(&mut self, velocity: &[f64]) -> (f64, bool) {
        for (p, v) in self.position.iter_mut().zip(velocity) {
            *p = (*p + v * Self::DT).clamp(-1.0, 1.0);
        }
        let d = self.distance();
        if d <= Self::GOAL_RADIUS {
            (Self::GOAL_BONUS - d, true)
        } else {
            (-d, false)
        }
    }

    fn observe(&self) -> Vec<f64> {
        vec![
            self.position[0],
            self.position[1],
            self.goal[0],
            self.goal[1],
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Pendulum(Pendulum),
    Reacher(Reacher),
}

impl Model {
    fn spec(&self) -> EnvSpec {
        match self {
            Model::Pendulum(_) => EnvSpec {
                observation_dim: 3,
                action_dim: 1,
                action_bound: Pendulum::MAX_TORQUE,
                time_limit: Pendulum::TIME_LIMIT,
            },
            Model::Reacher(_) => EnvSpec {
                observation_dim: 4,
                action_dim: 2,
                action_bound: Reacher::MAX_SPEED,
                time_limit: Reacher::TIME_LIMIT,
            },
        }
    }

    fn observe(&self) -> Vec<f64> {
        match self {
            Model::Pendulum(p) => p.observe(),
            Model::Reacher(r) => r.observe(),
        }
    }

    /// Expects an already clipped action. Returns `(reward, terminal)`.
    fn advance(&mut self, action: &[f64]) -> (f64, bool) {
        match self {
            Model::Pendulum(p) => (p.advance(action[0]), false),
            Model::Reacher(r) => r.advance(action),
        }
    }
}

/// An environment instance: a model plus episode bookkeeping.
#[derive(Clone, Debug)]
pub struct Env {
    model: Model,
    spec: EnvSpec,
    steps: usize,
    status: EpisodeStatus,
    time_limit: Option<usize>,
}

impl Env {
    pub const NAMES: [&'static str; 2] = ["pendulum", "reacher"];

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::pendulum()),
            "reacher" => Ok(Self::reacher()),
            other => Err(Error::Config(format!(
                "unknown environment `{other}` (expected one of {:?})",
                Self::NAMES
            ))),
        }
    }

    pub fn pendulum() -> Self {
        Self::from_model(Model::Pendulum(Pendulum {
            theta: 0.0,
            theta_dot: 0.0,
        }))
    }

    pub fn reacher() -> Self {
        Self::from_model(Model::Reacher(Reacher {
            position: [0.0, 0.0],
            goal: [0.5, 0.5],
        }))
    }

    pub fn from_model(model: Model) -> Self {
        let spec = model.spec();
        Self {
            model,
            spec,
            steps: 0,
            status: EpisodeStatus::Running,
            time_limit: Some(spec.time_limit),
        }
    }

    /// Same environment with the time limit replaced (`None` disables it).
    pub fn with_time_limit(mut self, limit: Option<usize>) -> Self {
        self.time_limit = limit;
        self
    }

    pub fn spec(&self) -> EnvSpec {
        self.spec
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn observation(&self) -> Vec<f64> {
        self.model.observe()
    }

    /// Inclusive per-component observation ranges.
    pub fn observation_bounds(&self) -> Vec<(f64, f64)> {
        match self.model {
            Model::Pendulum(_) => vec![
                (-1.0, 1.0),
                (-1.0, 1.0),
                (-Pendulum::MAX_SPEED, Pendulum::MAX_SPEED),
            ],
            Model::Reacher(_) => vec![(-1.0, 1.0); 4],
        }
    }

    /// Starts a new episode from the initial distribution determined by `seed`:
    /// pendulum `θ ~ U[−π, π)`, `θ̇ ~ U[−1, 1)`; reacher position and goal
    /// uniform on the square, resampled until they are farther apart than the
    /// goal radius.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &mut self.model {
            Model::Pendulum(p) => {
                p.theta = rng.random_range(-PI..PI);
                p.theta_dot = rng.random_range(-1.0..1.0);
            }
            Model::Reacher(r) => {
                r.goal = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                loop {
                    r.position = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
                    if r.distance() > Reacher::GOAL_RADIUS {
                        break;
                    }
                }
            }
        }
        self.steps = 0;
        self.status = EpisodeStatus::Running;
        self.observation()
    }

    /// Places the model in the state described by `observation` and starts a
    /// fresh episode from there.
    pub fn set_state(&mut self, observation: &[f64]) -> Result<()> {
        if observation.len() != self.spec.observation_dim {
            return Err(Error::DimensionMismatch {
                context: "state injection",
                expected: self.spec.observation_dim,
                got: observation.len(),
            });
        }
        if !observation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("injected observation"));
        }
        match &mut self.model {
            Model::Pendulum(p) => {
                p.theta = observation[1].atan2(observation[0]);
                p.theta_dot = observation[2].clamp(-Pendulum::MAX_SPEED, Pendulum::MAX_SPEED);
            }
            Model::Reacher(r) => {
                r.position = [
                    observation[0].clamp(-1.0, 1.0),
                    observation[1].clamp(-1.0, 1.0),
                ];
                r.goal = [
                    observation[2].clamp(-1.0, 1.0),
                    observation[3].clamp(-1.0, 1.0),
                ];
            }
        }
        self.steps = 0;
        self.status = if matches!(&self.model, Model::Reacher(r) if r.distance() <= Reacher::GOAL_RADIUS)
        {
            EpisodeStatus::Terminated
        } else {
            EpisodeStatus::Running
        };
        Ok(())
    }

    fn clip(&self, action: &[f64]) -> Result<Vec<f64>> {
        if action.len() != self.spec.action_dim {
            return Err(Error::DimensionMismatch {
                context: "action",
                expected: self.spec.action_dim,
                got: action.len(),
            });
        }
        if !action.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("action"));
        }
        let b = self.spec.action_bound;
        Ok(action.iter().map(|a| a.clamp(-b, b)).collect())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.status != EpisodeStatus::Running {
            return Err(Error::EpisodeFinished);
        }
        let action = self.clip(action)?;
        let (reward, done) = self.model.advance(&action);
        self.steps += 1;
        let truncated = !done && self.time_limit.is_some_and(|limit| self.steps >= limit);
        self.status = if done {
            EpisodeStatus::Terminated
        } else if truncated {
            EpisodeStatus::Truncated
        } else {
            EpisodeStatus::Running
        };
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done,
            truncated,
        })
    }

    /// Continues a time-limited episode on a private copy of the state for up
    /// to `horizon` steps, stopping early on natural termination. The rewards
    /// are for return computation only; `self` is untouched.
    pub fn rollout_extension<F>(&self, mut policy: F, horizon: usize) -> Result<Vec<f64>>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        match self.status {
            EpisodeStatus::Truncated => {}
            EpisodeStatus::Terminated => return Err(Error::NaturalTermination),
            EpisodeStatus::Running => return Err(Error::EpisodeRunning),
        }
        let mut model = self.model.clone();
        let mut rewards = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let action = self.clip(&policy(&model.observe())?)?;
            let (reward, done) = model.advance(&action);
            rewards.push(reward);
            if done {
                break;
            }
        }
        Ok(rewards)
    }
}

/// Smallest horizon `h` with `gamma^h < tol`.
pub fn horizon_for(gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    if gamma >= 1.0 {
        return usize::MAX;
    }
    let h = (tol.ln() / gamma.ln()).floor() as usize + 1;
    debug_assert!(gamma.powi(h as i32) < tol);
    h
}
