use rayon::prelude::*;

use crate::game::{run_episode, ActionMode, EpisodeRecord, LandmarkWorld, RewardMode};
use crate::model::TdmatPolicy;
use crate::stl::Spec;
use crate::Error;

/// One collected episode with what the policy reported while acting.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeData {
    pub record: EpisodeRecord,
    /// Agent decode order used for the whole episode.
    pub order: Vec<usize>,
    /// `log pi_old(a^i_t | ...)`, indexed `[t][i]`.
    pub log_probs: Vec<Vec<f64>>,
    /// `V^i(o_{0:t})` at collection time, `[t][i]`.
    pub values: Vec<Vec<f64>>,
    /// `V^i(o_{0:t+1})`, zero after the final step.
    pub next_values: Vec<Vec<f64>>,
}

impl EpisodeData {
    pub fn horizon(&self) -> usize {
        self.record.horizon()
    }

    /// Agent-averaged values `V_0 .. V_{T-1}` followed by the terminal 0.
    pub fn mean_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .chain(std::iter::once(0.0))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub episodes: Vec<EpisodeData>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Total number of (episode, step) rows.
    pub fn steps(&self) -> usize {
        self.episodes.iter().map(EpisodeData::horizon).sum()
    }
}

/// Rolls out one episode per seed against a frozen policy. `parallel` only
/// changes scheduling: results are returned in seed order either way.
pub fn collect_rollouts(
    world: &LandmarkWorld,
    specs: &[Spec],
    policy: &TdmatPolicy,
    seeds: &[u64],
    reward_mode: RewardMode,
    parallel: bool,
) -> Result<RolloutBuffer, Error> {
    let run = |(k, &seed): (usize, &u64)| {
        collect_one(world, specs, policy, seed, reward_mode)
            .map_err(|e| Error::Episode { episode: k, source: Box::new(e) })
    };
    let episodes = if parallel {
        seeds.par_iter().enumerate().map(run).collect::<Result<Vec<_>, _>>()?
    } else {
        seeds.iter().enumerate().map(run).collect::<Result<Vec<_>, _>>()?
    };
    Ok(RolloutBuffer { episodes })
}

fn collect_one(
    world: &LandmarkWorld,
    specs: &[Spec],
    policy: &TdmatPolicy,
    seed: u64,
    reward_mode: RewardMode,
) -> Result<EpisodeData, Error> {
    let (record, decisions) = run_episode(world, specs, policy, seed, ActionMode::Sample, reward_mode)?;
    let order = policy.decode_order(&record.observations);
    let values: Vec<Vec<f64>> = decisions.iter().map(|d| d.values.clone()).collect();
    let n = world.spec().n_agents;
    let next_values = values.iter().skip(1).cloned().chain(std::iter::once(vec![0.0; n])).collect();
    let log_probs = decisions.into_iter().map(|d| d.log_probs).collect();
    Ok(EpisodeData { record, order, log_probs, values, next_values })
}
