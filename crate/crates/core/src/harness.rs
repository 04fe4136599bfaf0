//! Run orchestration: configuration, the training loop, periodic evaluation,
//! sweeps and artifact files.
//!
//! Layout of an output directory:
//!
//! ```text
//! <out>/config.json             resolved configuration
//! <out>/summary.json            final score per seed, mean and std over seeds
//! <out>/seed_<n>/curve.csv      step,eval_return_mean,eval_return_std
//! <out>/seed_<n>/diagnostics.csv step,q_pred,q_true,q_mem
//! ```
//!
//! Rows are flushed as they are produced, so an aborted run leaves a valid
//! prefix behind.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig};
use crate::diagnostics::{self, OverestimationSample, TRUE_VALUE_MAX_STEPS};
use crate::env::{horizon_for, Env, EpisodeStatus};
use crate::error::{Error, Result};
use crate::memory::{EpisodicMemory, MemoryTable, ProjectionMatrix};
use crate::replay::{EpisodeBuffer, PrioritizedBuffer, Step};
use crate::seeding::{stream, Stream};

/// Evaluation points averaged into a seed's final score.
pub const FINAL_SCORE_WINDOW: usize = 10;

/// Truncated episodes are extended until `γ^h` drops below this.
pub const EXTENSION_TOLERANCE: f64 = 1e-3;

pub const SWEEPABLE: &[&str] = &[
    "alpha",
    "beta",
    "u",
    "k",
    "tau",
    "lr",
    "gamma",
    "epsilon",
    "batch_size",
    "noise_std",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Emac,
    /// Plain TD critic and uniform replay; `alpha` and `beta` are forced to 0.
    Ddpg,
}

fn default_env() -> String {
    "pendulum".into()
}
fn default_algo() -> Algo {
    Algo::Emac
}
fn default_eval_every() -> usize {
    1000
}
fn default_eval_episodes() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_gamma() -> f64 {
    0.99
}
fn default_alpha() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.5
}
fn default_tau() -> f64 {
    0.005
}
fn default_k() -> usize {
    2
}
fn default_u() -> usize {
    4
}
fn default_epsilon() -> f64 {
    1e-3
}
fn default_lr() -> f64 {
    1e-3
}
fn default_batch_size() -> usize {
    256
}
fn default_warmup() -> usize {
    1000
}
fn default_memory_capacity() -> usize {
    200_000
}
fn default_noise_std() -> f64 {
    0.1
}
fn default_hidden() -> Vec<usize> {
    vec![256, 256]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_env")]
    pub env: String,
    #[serde(default = "default_algo")]
    pub algo: Algo,
    /// Defaults to 30000 for pendulum and 20000 for reacher.
    #[serde(default)]
    pub total_steps: Option<usize>,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Projected key dimension.
    #[serde(default = "default_u")]
    pub u: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    /// Holds every transition of a run; replay uses the same size.
    #[serde(default = "default_memory_capacity")]
    pub memory_capacity: usize,
    /// Fraction of the action bound.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
    /// Steps rolled past a time limit; defaults to `horizon_for(gamma, 1e-3)`.
    #[serde(default)]
    pub extension_horizon: Option<usize>,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Overestimation measurement cadence; `None` disables it.
    #[serde(default)]
    pub diag_every: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps.unwrap_or(match self.env.as_str() {
            "reacher" => 20_000,
            _ => 30_000,
        })
    }

    pub fn extension_horizon(&self) -> usize {
        self.extension_horizon
            .unwrap_or_else(|| horizon_for(self.gamma, EXTENSION_TOLERANCE))
    }

    /// Fills every defaulted field and applies the algorithm's overrides.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.total_steps = Some(self.total_steps());
        c.extension_horizon = Some(self.extension_horizon());
        if c.algo == Algo::Ddpg {
            c.alpha = 0.0;
            c.beta = 0.0;
        }
        c
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            tau: self.tau,
            k: self.k,
            noise_std: self.noise_std,
            batch_size: self.batch_size,
            warmup_steps: self.warmup_steps,
            lr: self.lr,
            hidden: self.hidden.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        Env::by_name(&self.env)?;
        self.agent_config().validate()?;
        let total = self.total_steps();
        if total == 0 {
            return bad("total_steps must be >= 1".into());
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every and eval_episodes must be >= 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if self.u == 0 {
            return bad("u must be >= 1".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be > 0, got {}", self.epsilon));
        }
        if self.memory_capacity < total {
            return bad(format!(
                "memory_capacity {} cannot hold {} steps",
                self.memory_capacity, total
            ));
        }
        if self.diag_every == Some(0) {
            return bad("diag_every must be >= 1".into());
        }
        Ok(())
    }

    /// Sets a sweepable field from its textual value.
    pub fn set_axis(&mut self, axis: &str, value: &str) -> Result<()> {
        let float = || {
            value
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{axis}={value}: {e}")))
        };
        let int = || {
            value
                .parse::<usize>()
                .map_err(|e| Error::Config(format!("{axis}={value}: {e}")))
        };
        match axis {
            "alpha" => self.alpha = float()?,
            "beta" => self.beta = float()?,
            "tau" => self.tau = float()?,
            "lr" => self.lr = float()?,
            "gamma" => self.gamma = float()?,
            "epsilon" => self.epsilon = float()?,
            "noise_std" => self.noise_std = float()?,
            "u" => self.u = int()?,
            "k" => self.k = int()?,
            "batch_size" => self.batch_size = int()?,
            _ => return Err(Error::NotSweepable(axis.into())),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
}

/// Everything one seed produced.
#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub curve: Vec<CurvePoint>,
    pub diagnostics: Vec<OverestimationSample>,
    pub updates: usize,
    pub final_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub final_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<SeedScore>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl Summary {
    pub fn from_scores(seeds: Vec<SeedScore>) -> Self {
        let scores: Vec<f64> = seeds.iter().map(|s| s.final_score).collect();
        let (mean, std) = mean_std(&scores, 1);
        Self { seeds, mean, std }
    }
}

/// Mean and standard deviation with `ddof` degrees of freedom removed.
pub fn mean_std(xs: &[f64], ddof: usize) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n <= ddof {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - ddof) as f64;
    (mean, var.sqrt())
}

/// Mean of the last `FINAL_SCORE_WINDOW` evaluation means.
pub fn final_score(curve: &[CurvePoint]) -> f64 {
    let tail = &curve[curve.len().saturating_sub(FINAL_SCORE_WINDOW)..];
    let means: Vec<f64> = tail.iter().map(|p| p.mean).collect();
    mean_std(&means, 0).0
}

pub const CURVE_HEADER: &str = "step,eval_return_mean,eval_return_std";
pub const DIAGNOSTICS_HEADER: &str = "step,q_pred,q_true,q_mem";

/// Line-buffered CSV writer; `{}` on `f64` prints the shortest string that
/// parses back to the same value.
struct CsvSink {
    out: BufWriter<File>,
}

impl CsvSink {
    fn create(path: &Path, header: &str) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        out.flush()?;
        Ok(Self { out })
    }

    fn row(&mut self, key: impl std::fmt::Display, values: &[f64]) -> Result<()> {
        write!(self.out, "{key}")?;
        for v in values {
            write!(self.out, ",{v}")?;
        }
        writeln!(self.out)?;
        self.out.flush()?;
        Ok(())
    }
}

/// Undiscounted returns of `seeds.len()` deterministic-policy episodes, run
/// in lockstep on fresh environments.
pub fn evaluate(agent: &Agent, template: &Env, seeds: &[u64]) -> Result<Vec<f64>> {
    let mut envs: Vec<Env> = seeds
        .iter()
        .map(|&s| {
            let mut e = template.clone();
            e.reset(s);
            e
        })
        .collect();
    let obs_dim = template.spec().observation_dim;
    let mut returns = vec![0.0; envs.len()];
    loop {
        let live: Vec<usize> = (0..envs.len())
            .filter(|&i| envs[i].status() == EpisodeStatus::Running)
            .collect();
        if live.is_empty() {
            return Ok(returns);
        }
        let mut obs = Array2::zeros((live.len(), obs_dim));
        for (row, &i) in live.iter().enumerate() {
            obs.row_mut(row)
                .assign(&ndarray::aview1(&envs[i].observation()));
        }
        let actions = agent.actor.predict(obs.view())?;
        for (row, &i) in live.iter().enumerate() {
            returns[i] += envs[i].step(&actions.row(row).to_vec())?.reward;
        }
    }
}

/// Trains one seed, writing `curve.csv` and `diagnostics.csv` into `dir`.
pub fn run_seed(config: &RunConfig, seed: u64, dir: &Path) -> Result<SeedRun> {
    let config = config.resolved();
    config.validate()?;
    fs::create_dir_all(dir)?;
    let mut curve_csv = CsvSink::create(&dir.join("curve.csv"), CURVE_HEADER)?;
    let mut diag_csv = CsvSink::create(&dir.join("diagnostics.csv"), DIAGNOSTICS_HEADER)?;

    let mut env = Env::by_name(&config.env)?;
    let spec = env.spec();
    let mut agent = Agent::new(spec, config.agent_config(), seed)?;
    let emac = config.algo == Algo::Emac;
    let cadence = config.diag_every.unwrap_or(0);
    let keep_memory = emac || cadence > 0;

    let projection_seed: u64 = stream(seed, Stream::Projection).random();
    let mut memory = EpisodicMemory::new(
        ProjectionMatrix::new(
            config.u,
            spec.observation_dim + spec.action_dim,
            projection_seed,
        )?,
        MemoryTable::new(config.u, config.memory_capacity, config.epsilon)?,
    )?;
    let mut replay = PrioritizedBuffer::new(config.memory_capacity, config.beta)?;
    let mut env_rng = stream(seed, Stream::Env);
    let mut sampling_rng = stream(seed, Stream::Sampling);
    let mut diag_rng = stream(seed, Stream::Diagnostics);
    let mut eval_rng = stream(seed, Stream::Eval);
    let eval_seeds: Vec<u64> = (0..config.eval_episodes)
        .map(|_| eval_rng.random())
        .collect();
    let eval_env = Env::by_name(&config.env)?;

    let total = config.total_steps();
    let horizon = config.extension_horizon();
    let mut episode = EpisodeBuffer::new();
    let mut state = env.reset(env_rng.random());
    let mut curve = Vec::new();
    let mut samples = Vec::new();
    let mut updates = 0;

    for t in 1..=total {
        let action = agent.select_action(&state, true)?;
        agent.record_env_step();
        let result = env.step(&action)?;
        episode.push(Step {
            state: std::mem::take(&mut state),
            action,
            reward: result.reward,
            next_state: result.observation.clone(),
            done: result.done,
            truncated: result.truncated,
        });
        state = result.observation;

        if result.done || result.truncated {
            let extension = if result.truncated {
                env.rollout_extension(|obs| agent.policy(obs), horizon)?
            } else {
                Vec::new()
            };
            let transitions = episode.finalize(config.gamma, &extension)?;
            replay.push_finalized(transitions, keep_memory.then_some(&mut memory))?;
            state = env.reset(env_rng.random());
        }

        if t > config.warmup_steps && !replay.is_empty() {
            let batch = replay.sample(config.batch_size, &mut sampling_rng)?;
            let q_mem = if emac {
                Some(memory.estimate(batch.states.view(), batch.actions.view(), config.k)?)
            } else {
                None
            };
            agent.update(&batch, q_mem.as_deref())?;
            updates += 1;
        }

        if t % config.eval_every == 0 {
            let returns = evaluate(&agent, &eval_env, &eval_seeds)?;
            let (mean, std) = mean_std(&returns, 0);
            curve_csv.row(t, &[mean, std])?;
            curve.push(CurvePoint { step: t, mean, std });
        }

        if diagnostics::is_due(t, cadence) && !replay.is_empty() {
            let sample = diagnostics::measure(
                t,
                &agent,
                &replay,
                &memory,
                &eval_env,
                config.batch_size,
                TRUE_VALUE_MAX_STEPS,
                &mut diag_rng,
            )?;
            diag_csv.row(
                t,
                &[sample.q_pred_mean, sample.q_true_mean, sample.q_mem_mean],
            )?;
            samples.push(sample);
        }
    }

    Ok(SeedRun {
        seed,
        final_score: final_score(&curve),
        curve,
        diagnostics: samples,
        updates,
    })
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains every configured seed under `out` and writes `config.json` and
/// `summary.json`.
pub fn run(config: &RunConfig, out: &Path) -> Result<(Summary, Vec<SeedRun>)> {
    let resolved = config.resolved();
    resolved.validate()?;
    fs::create_dir_all(out)?;
    fs::write(
        out.join("config.json"),
        serde_json::to_string_pretty(&resolved)?,
    )?;
    let mut runs = Vec::with_capacity(resolved.seeds.len());
    for &seed in &resolved.seeds {
        runs.push(run_seed(&resolved, seed, &seed_dir(out, seed))?);
    }
    let summary = Summary::from_scores(
        runs.iter()
            .map(|r| SeedScore {
                seed: r.seed,
                final_score: r.final_score,
            })
            .collect(),
    );
    fs::write(
        out.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok((summary, runs))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub summary: Summary,
}

/// One full `run` per value under `out/<axis>_<value>`, plus `sweep.csv`
/// with one row per value and seed.
pub fn sweep(base: &RunConfig, axis: &str, values: &[String], out: &Path) -> Result<Vec<SweepRow>> {
    if !SWEEPABLE.contains(&axis) {
        return Err(Error::NotSweepable(axis.into()));
    }
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut c = base.clone();
        c.set_axis(axis, v)?;
        c.resolved().validate()?;
        configs.push(c);
    }
    fs::create_dir_all(out)?;
    let mut table = CsvSink::create(&out.join("sweep.csv"), "value,seed,final_score")?;
    let mut rows = Vec::with_capacity(values.len());
    for (v, c) in values.iter().zip(&configs) {
        let (summary, _) = run(c, &out.join(format!("{axis}_{v}")))?;
        for s in &summary.seeds {
            table.row(format_args!("{v},{}", s.seed), &[s.final_score])?;
        }
        rows.push(SweepRow {
            value: v.clone(),
            summary,
        });
    }
    Ok(rows)
}

/// Parses a CSV written by this module into `(step, values)` rows.
pub fn read_csv(path: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    lines
        .next()
        .ok_or_else(|| Error::Format("missing CSV header".into()))?;
    lines
        .map(|line| {
            let mut fields = line.split(',');
            let step = fields
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad step in {line:?}")))?;
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| Error::Format(format!("{f:?}: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((step, values))
        })
        .collect()
}
