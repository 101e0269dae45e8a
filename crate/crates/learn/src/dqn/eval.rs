//! Episode pools and greedy-policy evaluation.

use lmo_core::dataset::{DatasetSplit, MergeInstance, Subset};
use lmo_core::SafetyParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::env::{
    action_components, dataset_episode, synthetic_episode, EpisodeOutcome, EpisodeSpec, MergeEnv, SynthEpisodeConfig,
};
use super::network::DuelingNetwork;
use super::DqnError;

/// Episodes divided 70/20/10 into train, test and validation.
#[derive(Debug, Clone, Default)]
pub struct EpisodePool {
    pub train: Vec<EpisodeSpec>,
    pub test: Vec<EpisodeSpec>,
    pub validation: Vec<EpisodeSpec>,
}

impl EpisodePool {
    pub fn synthetic(n: usize, cfg: &SynthEpisodeConfig, seed: u64) -> Result<Self, DqnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let all: Vec<EpisodeSpec> = (0..n).map(|_| synthetic_episode(&mut rng, cfg)).collect();
        let ids: Vec<u64> = (0..n as u64).collect();
        let split = lmo_core::dataset::split_instances(&ids, seed).map_err(|e| DqnError::Model(e.to_string()))?;
        let pick = |s: Subset| split.ids(s).iter().map(|&i| all[i as usize].clone()).collect();
        Ok(Self { train: pick(Subset::Train), test: pick(Subset::Test), validation: pick(Subset::Validation) })
    }

    /// Uses the same instance-level split as the classifiers.
    pub fn from_instances(
        instances: &[MergeInstance],
        split: &DatasetSplit,
        lane_width: f64,
        safety: SafetyParams,
    ) -> Self {
        let mut pool = Self::default();
        for inst in instances {
            let ep = dataset_episode(inst, lane_width, safety);
            match split.subset_of(inst.instance_id) {
                Some(Subset::Train) => pool.train.push(ep),
                Some(Subset::Test) => pool.test.push(ep),
                Some(Subset::Validation) => pool.validation.push(ep),
                None => {}
            }
        }
        pool
    }

    /// Endless uniform draws from the training episodes.
    pub fn training_stream(&self, seed: u64) -> impl Iterator<Item = EpisodeSpec> + '_ {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        std::iter::from_fn(move || (!self.train.is_empty()).then(|| self.train[rng.random_range(0..self.train.len())].clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    /// Rollouts that reached the target lane inside a safe slot.
    pub safe_merges: usize,
    pub safe_merge_rate: f64,
    /// Outcome name to count.
    pub outcomes: BTreeMap<String, usize>,
    /// Over episodes starting at least `FAR_BEHIND_M` behind the slot: share
    /// of ticks on which the distance to the slot midpoint shrank.
    pub far_behind_episodes: usize,
    pub far_behind_decreasing_fraction: f64,
    /// Share of all greedy actions with acceleration in [0, 2] m/s^2.
    pub accel_in_0_2_fraction: f64,
    pub mean_reward_pos: f64,
}

pub const FAR_BEHIND_M: f64 = 10.0;

fn outcome_name(o: EpisodeOutcome) -> String {
    match o {
        EpisodeOutcome::Success => "success".into(),
        EpisodeOutcome::Horizon => "horizon".into(),
        EpisodeOutcome::Violation(v) => format!("violation_{}", serde_json::to_value(v).unwrap().as_str().unwrap()),
    }
}

/// Runs the greedy policy once on each episode the way a recommendation
/// rollout does: until M is in the target lane inside a safe slot, a
/// violation, or the horizon.
pub fn evaluate(net: &DuelingNetwork, episodes: &[EpisodeSpec]) -> Result<EvalReport, DqnError> {
    let mut outcomes = BTreeMap::new();
    let (mut merges, mut run) = (0, 0);
    let (mut far, mut far_ticks, mut far_dec) = (0, 0usize, 0usize);
    let (mut actions, mut gentle) = (0usize, 0usize);
    let (mut reward_sum, mut reward_n) = (0.0, 0usize);
    for spec in episodes {
        let Ok(mut env) = MergeEnv::reset(spec) else { continue };
        run += 1;
        let mid = EpisodeSpec::slot_mid(&spec.p, &spec.f);
        let is_far = mid - spec.m.s >= FAR_BEHIND_M;
        far += is_far as usize;
        let mut d_prev = env.distance_to_slot();
        loop {
            let action = net.greedy_action(&env.state());
            let accel = action_components(action).0;
            actions += 1;
            gentle += (0.0..=2.0).contains(&accel) as usize;
            let step = env.step(action)?;
            reward_sum += step.r_pos;
            reward_n += 1;
            let d = env.distance_to_slot();
            if is_far {
                far_ticks += 1;
                far_dec += (d < d_prev) as usize;
            }
            d_prev = d;
            let end = match step.outcome {
                Some(EpisodeOutcome::Violation(v)) => Some(EpisodeOutcome::Violation(v)),
                _ if env.in_safe_slot() => Some(EpisodeOutcome::Success),
                other => other,
            };
            if let Some(o) = end {
                merges += (o == EpisodeOutcome::Success) as usize;
                *outcomes.entry(outcome_name(o)).or_insert(0) += 1;
                break;
            }
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(EvalReport {
        episodes: run,
        safe_merges: merges,
        safe_merge_rate: ratio(merges, run),
        outcomes,
        far_behind_episodes: far,
        far_behind_decreasing_fraction: ratio(far_dec, far_ticks),
        accel_in_0_2_fraction: ratio(gentle, actions),
        mean_reward_pos: if reward_n == 0 { 0.0 } else { reward_sum / reward_n as f64 },
    })
}
