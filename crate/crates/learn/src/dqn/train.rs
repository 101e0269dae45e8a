//! Experience replay, the DQN update and the training loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use super::env::{synthetic_episode, EpisodeSpec, MergeEnv, RewardVariant, RlState, SynthEpisodeConfig, N_ACTIONS};
use super::network::{DuelingNetwork, NetShape};
use super::optim::{Optimizer, OptimizerKind};
use super::DqnError;
use crate::classify::tree::mix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: RlState,
    pub action: usize,
    pub reward: f64,
    pub next_state: RlState,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample(&self, rng: &mut impl Rng, n: usize) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Mean squared TD error on the taken actions and its gradient with respect
/// to the online network. Targets come from `target`.
///
/// The batch is cut into fixed chunks whose partial sums are added in order,
/// so the result does not depend on how rayon schedules the chunks.
pub fn loss_and_grad(net: &DuelingNetwork, target: &DuelingNetwork, batch: &[&Transition], gamma: f64) -> (f64, Vec<f64>) {
    const CHUNK: usize = 8;
    let n = batch.len() as f64;
    let partials: Vec<(f64, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; net.n_params()];
            let mut loss = 0.0;
            for t in chunk {
                let y = td_target(target, t, gamma);
                let act = net.forward(&t.state);
                let err = act.q[t.action] - y;
                loss += err * err;
                let mut g_q = vec![0.0; net.shape.actions];
                g_q[t.action] = 2.0 * err / n;
                net.backward(&act, &g_q, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut grad = vec![0.0; net.n_params()];
    let mut loss = 0.0;
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss / n, grad)
}

pub fn td_target(target: &DuelingNetwork, t: &Transition, gamma: f64) -> f64 {
    if t.terminal {
        t.reward
    } else {
        let q = target.q_values(&t.next_state);
        t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One gradient update of `net`; returns the loss before the update.
pub fn train_step(
    net: &mut DuelingNetwork,
    target: &DuelingNetwork,
    batch: &[&Transition],
    gamma: f64,
    opt: &mut Optimizer,
) -> Result<f64, DqnError> {
    if batch.is_empty() {
        return Err(DqnError::Model("empty training batch".into()));
    }
    let (loss, mut grad) = loss_and_grad(net, target, batch, gamma);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        let worst = batch
            .iter()
            .map(|t| format!("a={} r={} terminal={} s={:?}", t.action, t.reward, t.terminal, t.state))
            .take(4)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(DqnError::NonFinite(format!("loss {loss} on batch of {} [{worst}]", batch.len())));
    }
    opt.apply(net.params_mut(), &mut grad);
    net.check_finite()?;
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub episodes: usize,
    pub shape: NetShape,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub clip_norm: Option<f64>,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub target_sync_steps: usize,
    /// Transitions collected before the first update.
    pub warmup_steps: usize,
    /// Environment steps per gradient update.
    pub train_every: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of the episode budget over which epsilon decays linearly.
    pub epsilon_fraction: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            episodes: 8000,
            shape: NetShape::DEFAULT,
            optimizer: OptimizerKind::Adam,
            learning_rate: 5e-4,
            clip_norm: Some(10.0),
            gamma: 0.95,
            batch_size: 64,
            replay_capacity: 50_000,
            target_sync_steps: 500,
            warmup_steps: 1000,
            train_every: 2,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_fraction: 0.5,
        }
    }
}

impl DqnConfig {
    pub fn epsilon(&self, episode: usize) -> f64 {
        let span = self.epsilon_fraction * self.episodes as f64;
        let frac = if span > 0.0 { (episode as f64 / span).min(1.0) } else { 1.0 };
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub step: u64,
    pub episode: u64,
    pub variant: RewardVariant,
    pub reward: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub net: DuelingNetwork,
    pub reward_log: Vec<RewardRecord>,
    pub losses: Vec<f64>,
    pub episodes_run: usize,
    pub steps: u64,
    /// Episodes skipped because they were degenerate at reset.
    pub skipped: usize,
    /// The episode source ran dry before the configured budget.
    pub exhausted: bool,
}

/// Trains a fresh network on episodes drawn from `episodes`, stopping after
/// `config.episodes` or when the source runs out.
pub fn run_training(
    episodes: impl IntoIterator<Item = EpisodeSpec>,
    variant: RewardVariant,
    config: &DqnConfig,
    seed: u64,
) -> Result<TrainingResult, DqnError> {
    let mut net = DuelingNetwork::new(config.shape, mix(seed, 1));
    let mut target = net.clone();
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, config.clip_norm, net.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 2));
    let mut replay = ReplayBuffer::new(config.replay_capacity);
    let mut result = TrainingResult {
        net: net.clone(),
        reward_log: Vec::new(),
        losses: Vec::new(),
        episodes_run: 0,
        steps: 0,
        skipped: 0,
        exhausted: false,
    };
    let mut source = episodes.into_iter();
    while result.episodes_run < config.episodes {
        let Some(spec) = source.next() else {
            result.exhausted = true;
            break;
        };
        let mut env = match MergeEnv::reset(&spec) {
            Ok(env) => env,
            Err(DqnError::DegenerateEpisode(_)) => {
                result.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let eps = config.epsilon(result.episodes_run);
        let mut state = env.state();
        loop {
            let action = if rng.random::<f64>() < eps {
                rng.random_range(0..N_ACTIONS)
            } else {
                net.greedy_action(&state)
            };
            let step = env.step(action)?;
            let reward = variant.apply(step.r_pos);
            result.reward_log.push(RewardRecord {
                step: result.steps,
                episode: result.episodes_run as u64,
                variant,
                reward,
            });
            replay.push(Transition { state, action, reward, next_state: step.state, terminal: step.terminal });
            result.steps += 1;
            if replay.len() >= config.warmup_steps.max(1) && result.steps.is_multiple_of(config.train_every.max(1) as u64) {
                let batch = replay.sample(&mut rng, config.batch_size);
                result.losses.push(train_step(&mut net, &target, &batch, config.gamma, &mut opt)?);
            }
            if config.target_sync_steps > 0 && result.steps.is_multiple_of(config.target_sync_steps as u64) {
                target = net.clone();
            }
            state = step.state;
            if step.terminal {
                break;
            }
        }
        result.episodes_run += 1;
    }
    result.net = net;
    Ok(result)
}

/// Endless stream of synthetic episodes.
pub fn synthetic_stream(cfg: SynthEpisodeConfig, seed: u64) -> impl Iterator<Item = EpisodeSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    std::iter::repeat_with(move || synthetic_episode(&mut rng, &cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_low: f64,
    pub bin_high: f64,
    pub count: u64,
}

pub const HISTOGRAM_BINS: usize = 20;

/// Equal-width histogram over the variant's codomain; the top edge is
/// closed.
pub fn reward_histogram(rewards: &[f64], variant: RewardVariant, bins: usize) -> Vec<HistogramBin> {
    let lo = match variant {
        RewardVariant::Positive => 0.0,
        RewardVariant::Negative => -1.0,
    };
    let width = 1.0 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin { bin_low: lo + i as f64 * width, bin_high: lo + (i + 1) as f64 * width, count: 0 })
        .collect();
    for &r in rewards {
        let idx = (((r - lo) * bins as f64).floor().max(0.0) as usize).min(bins - 1);
        out[idx].count += 1;
    }
    out
}

/// Share of the histogram mass in the top quarter of its bins.
pub fn top_quartile_mass(hist: &[HistogramBin]) -> f64 {
    let total: u64 = hist.iter().map(|b| b.count).sum();
    if total == 0 {
        return 0.0;
    }
    let start = hist.len() - hist.len() / 4;
    hist[start..].iter().map(|b| b.count).sum::<u64>() as f64 / total as f64
}

pub fn write_reward_log(path: &std::path::Path, log: &[RewardRecord]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "step,episode,variant,reward")?;
    for r in log {
        writeln!(w, "{},{},{},{}", r.step, r.episode, r.variant.name(), r.reward)?;
    }
    w.flush()
}

pub fn write_histogram(path: &std::path::Path, hist: &[HistogramBin]) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "bin_low,bin_high,count")?;
    for b in hist {
        writeln!(w, "{},{},{}", b.bin_low, b.bin_high, b.count)?;
    }
    w.flush()
}
