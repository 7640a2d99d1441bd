//! Value-based deep RL: dueling/double Q-learning with uniform replay.

mod checkpoint;
mod net;
mod optim;
mod replay;

use std::io::Write;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use net::{argmax, Cache, DuelingNet, Mode, NetSpec};
pub use optim::{sgd_step, Adam};
pub use replay::{ReplayBuffer, Transition};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::world::{aggregate, EpisodeRecord, Metrics};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dqn,
    Ddqn,
    #[default]
    D3qn,
}

impl Variant {
    pub fn dueling(self) -> bool {
        self == Variant::D3qn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub gamma: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub l2_reg: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Env steps over which epsilon decays; `None` means half the expected total.
    pub epsilon_decay_steps: Option<usize>,
    pub replay_capacity: usize,
    pub target_sync_every: usize,
    pub total_episodes: usize,
    /// Stop after this many env steps even if episodes remain.
    pub max_steps: Option<usize>,
    pub learning_starts: usize,
    pub train_every: usize,
    /// Gradient steps per training call.
    pub updates_per_step: usize,
    pub variant: Variant,
    pub hidden: Vec<usize>,
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            lr: 3e-4,
            batch_size: 256,
            l2_reg: 1e-4,
            epsilon_start: 0.5,
            epsilon_end: 0.1,
            epsilon_decay_steps: None,
            replay_capacity: 1_000_000,
            target_sync_every: 1000,
            total_episodes: 2000,
            max_steps: None,
            learning_starts: 1000,
            train_every: 1,
            updates_per_step: 1,
            variant: Variant::D3qn,
            hidden: vec![256, 256, 128],
            bn_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    /// Small network and budget for the shrunk world: 30k environment steps on one core.
    pub fn desk() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 64,
            hidden: vec![64, 64],
            target_sync_every: 1000,
            max_steps: Some(30_000),
            total_episodes: 100_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config("train.gamma", "must lie in [0, 1)"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("train.lr", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be >= 1"));
        }
        if !(self.l2_reg >= 0.0) {
            return Err(Error::config("train.l2_reg", "must be >= 0"));
        }
        if !(0.0 <= self.epsilon_end && self.epsilon_end <= self.epsilon_start && self.epsilon_start <= 1.0) {
            return Err(Error::config("train.epsilon_start", "need 0 <= epsilon_end <= epsilon_start <= 1"));
        }
        if self.replay_capacity == 0 {
            return Err(Error::config("train.replay_capacity", "must be >= 1"));
        }
        if self.target_sync_every == 0 || self.train_every == 0 {
            return Err(Error::config("train.target_sync_every", "sync and train intervals must be >= 1"));
        }
        if self.updates_per_step == 0 {
            return Err(Error::config("train.updates_per_step", "must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("train.hidden", "layer widths must be >= 1"));
        }
        Ok(())
    }

    pub fn net_spec(&self, input: usize, actions: usize) -> NetSpec {
        let mut s = NetSpec::new(input, self.hidden.clone(), actions, self.variant.dueling());
        s.bn_momentum = self.bn_momentum;
        s
    }

    /// Linear decay from `epsilon_start` to `epsilon_end` over `decay` steps.
    pub fn epsilon_at(&self, step: usize, decay: usize) -> f64 {
        if step >= decay {
            return self.epsilon_end;
        }
        let f = step as f64 / decay as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

/// Bootstrapped targets for a batch of transitions.
///
/// Non-double variants take the target net's max; double variants evaluate the target net at
/// the evaluation net's argmax. Both nets run with frozen normalisation statistics.
pub fn td_target<T: Real>(
    rewards: &[T],
    next_states: &Array2<T>,
    terminal: &[bool],
    eval_net: &DuelingNet<T>,
    target_net: &DuelingNet<T>,
    gamma: T,
    variant: Variant,
) -> Result<Vec<T>> {
    let q_target = target_net.forward(next_states.view(), Mode::Eval)?;
    let q_eval = match variant {
        Variant::Dqn => None,
        Variant::Ddqn | Variant::D3qn => Some(eval_net.forward(next_states.view(), Mode::Eval)?),
    };
    Ok((0..rewards.len())
        .map(|i| {
            if terminal[i] || gamma == T::zero() {
                return rewards[i];
            }
            let row = q_target.row(i);
            let boot = match &q_eval {
                None => row.iter().copied().fold(T::neg_infinity(), T::max),
                Some(qe) => row[argmax(qe.row(i).as_slice().expect("contiguous"))],
            };
            rewards[i] + gamma * boot
        })
        .collect())
}

/// Epsilon-greedy choice; greedy ties go to the lowest index.
///
/// `q` is only called on the greedy branch.
pub fn select_action<T: Real, R: Rng + ?Sized>(
    q: impl FnOnce() -> Result<Vec<T>>,
    actions: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<usize> {
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..actions))
    } else {
        Ok(argmax(&q()?))
    }
}

/// One step of an episodic environment with a discrete action set.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub features: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
    /// Outcome summary, present on terminal steps.
    pub record: Option<EpisodeRecord>,
}

pub trait Environment {
    fn feature_len(&self) -> usize;
    fn action_count(&self) -> usize;
    /// Upper bound on episode length in steps.
    fn horizon(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub steps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub epsilon: f64,
    pub loss_mean: Option<f64>,
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["episode", "steps", "return", "epsilon", "loss_mean"])?;
    for r in rows {
        w.write_record([
            r.episode.to_string(),
            r.steps.to_string(),
            r.ret.to_string(),
            r.epsilon.to_string(),
            r.loss_mean.map(|l| l.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Real> {
    pub net: DuelingNet<T>,
    pub curve: Vec<CurveRow>,
    pub steps: usize,
    /// Number of times the policy network was queried to pick an action.
    pub greedy_queries: usize,
}

/// Named random sub-streams derived from one seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const EXPLORATION: u64 = 2;
    pub const WORLD: u64 = 3;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn to_t<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::lit(*x)).collect()
}

/// Deep Q-learning over `env`, fully determined by `seed`.
pub fn train<T: Real, E: Environment>(env: &mut E, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome<T>> {
    train_with(env, cfg, seed, |_, _| Ok(()))
}

/// As [`train`], calling `on_episode(row, net)` after every episode.
pub fn train_with<T: Real, E: Environment>(
    env: &mut E,
    cfg: &TrainConfig,
    seed: u64,
    mut on_episode: impl FnMut(&CurveRow, &DuelingNet<T>) -> Result<()>,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let n_actions = env.action_count();
    let spec = cfg.net_spec(env.feature_len(), n_actions);
    let mut net = DuelingNet::<T>::new(spec, &mut stream_rng(seed, streams::INIT))?;
    let mut target = net.clone();
    let mut opt = Adam::new(net.params.len(), T::lit(cfg.lr));
    let mut replay = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut explore = stream_rng(seed, streams::EXPLORATION);
    let mut worlds = stream_rng(seed, streams::WORLD);

    let budget = cfg
        .max_steps
        .unwrap_or(usize::MAX)
        .min(cfg.total_episodes.saturating_mul(env.horizon().max(1)));
    let decay = cfg.epsilon_decay_steps.unwrap_or(budget / 2);
    let gamma = T::lit(cfg.gamma);
    let l2 = T::lit(cfg.l2_reg);
    let warmup = cfg.learning_starts.max(cfg.batch_size);

    let mut curve = Vec::new();
    let mut steps = 0usize;
    let mut greedy_queries = 0usize;
    for episode in 0..cfg.total_episodes {
        if steps >= budget {
            break;
        }
        let mut state: Vec<T> = to_t(&env.reset(worlds.gen())?);
        let mut ret = 0.0;
        let mut losses = Vec::new();
        let mut eps;
        loop {
            eps = cfg.epsilon_at(steps, decay);
            let action = select_action(
                || {
                    greedy_queries += 1;
                    net.q_values(&state)
                },
                n_actions,
                eps,
                &mut explore,
            )?;
            let st = env.step(action)?;
            let next: Vec<T> = to_t(&st.features);
            ret += st.reward;
            replay.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: T::lit(st.reward),
                next_state: next.clone(),
                terminal: st.terminal,
            });
            steps += 1;

            for _ in 0..cfg.updates_per_step {
                if replay.len() < warmup || !steps.is_multiple_of(cfg.train_every) {
                    break;
                }
                let batch = replay.sample(cfg.batch_size, &mut explore);
                let dim = net.input_len();
                let mut x = Array2::<T>::zeros((batch.len(), dim));
                let mut xn = Array2::<T>::zeros((batch.len(), dim));
                for (i, t) in batch.iter().enumerate() {
                    x.row_mut(i).as_slice_mut().expect("row").copy_from_slice(&t.state);
                    xn.row_mut(i).as_slice_mut().expect("row").copy_from_slice(&t.next_state);
                }
                let rewards: Vec<T> = batch.iter().map(|t| t.reward).collect();
                let terms: Vec<bool> = batch.iter().map(|t| t.terminal).collect();
                let actions: Vec<usize> = batch.iter().map(|t| t.action).collect();
                let y = td_target(&rewards, &xn, &terms, &net, &target, gamma, cfg.variant)?;
                let loss = sgd_step(&mut net, &mut opt, x.view(), &actions, &y, l2)?;
                losses.push(loss.to_f64_lossy());
            }
            if steps.is_multiple_of(cfg.target_sync_every) {
                target.copy_from(&net);
            }
            if st.terminal || steps >= budget {
                break;
            }
            state = next;
        }
        let row = CurveRow {
            episode,
            steps,
            ret,
            epsilon: eps,
            loss_mean: if losses.is_empty() {
                None
            } else {
                Some(losses.iter().sum::<f64>() / losses.len() as f64)
            },
        };
        on_episode(&row, &net)?;
        curve.push(row);
    }
    Ok(TrainOutcome {
        net,
        curve,
        steps,
        greedy_queries,
    })
}

/// Seed of evaluation episode `i`; independent of how episodes are split across workers.
pub fn episode_seed(seed: u64, i: usize) -> u64 {
    let mut r = stream_rng(seed, 0x5eed_0000 + i as u64);
    r.gen()
}

/// Greedy rollout of one episode.
pub fn run_episode<T: Real, E: Environment>(net: &DuelingNet<T>, env: &mut E, seed: u64) -> Result<EpisodeRecord> {
    let mut s = env.reset(seed)?;
    loop {
        let q = net.q_values(&to_t::<T>(&s))?;
        let st = env.step(argmax(&q))?;
        if st.terminal {
            return st
                .record
                .ok_or_else(|| Error::Usage("environment ended an episode without a record".into()));
        }
        s = st.features;
    }
}

/// Greedy evaluation over `episodes` freshly seeded worlds.
pub fn evaluate<T: Real, E: Environment>(
    net: &DuelingNet<T>,
    env: &mut E,
    episodes: usize,
    seed: u64,
) -> Result<(Metrics, Vec<EpisodeRecord>)> {
    if episodes == 0 {
        return Err(Error::Usage("evaluate needs episodes > 0".into()));
    }
    let records = (0..episodes)
        .map(|i| run_episode(net, env, episode_seed(seed, i)))
        .collect::<Result<Vec<_>>>()?;
    Ok((aggregate(&records)?, records))
}

/// As [`evaluate`], spreading episodes over `workers` threads; results match the serial run.
pub fn evaluate_parallel<T: Real, E: Environment, F: Fn() -> Result<E> + Sync>(
    net: &DuelingNet<T>,
    make_env: F,
    episodes: usize,
    seed: u64,
    workers: usize,
) -> Result<(Metrics, Vec<EpisodeRecord>)> {
    if episodes == 0 {
        return Err(Error::Usage("evaluate needs episodes > 0".into()));
    }
    let workers = workers.max(1);
    if workers == 1 {
        return evaluate(net, &mut make_env()?, episodes, seed);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    let chunk = episodes.div_ceil(workers);
    let parts: Vec<Result<Vec<EpisodeRecord>>> = pool.install(|| {
        (0..workers)
            .into_par_iter()
            .map(|w| {
                let mut env = make_env()?;
                (w * chunk..((w + 1) * chunk).min(episodes))
                    .map(|i| run_episode(net, &mut env, episode_seed(seed, i)))
                    .collect()
            })
            .collect()
    });
    let mut records = Vec::with_capacity(episodes);
    for p in parts {
        records.extend(p?);
    }
    Ok((aggregate(&records)?, records))
}
