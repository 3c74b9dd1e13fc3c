use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EpisodeRecord, LandmarkWorld, ObservationSet, N_ACTIONS};
use crate::stl::{prefix_robustness_with_floor, Frame, Spec, Trajectory, DEFAULT_FLOOR};
use crate::Error;

/// Whether a policy samples its actions or takes the most likely one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    #[default]
    Sample,
    Greedy,
}

/// Per-step reward shaping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// `r_t = rho(s_{0:t+1}, phi)`.
    #[default]
    Robustness,
    /// `r_t = rho(s_{0:t+1}, phi) - rho(s_{0:t}, phi)`.
    Increment,
}

/// What a policy returns for one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct JointDecision {
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
}

/// A centralized policy over the full observation history.
pub trait JointPolicy: Sync {
    /// `history[t']` holds the observations at steps `0..=t`.
    fn decide(
        &self,
        history: &[ObservationSet],
        rng: &mut ChaCha8Rng,
        mode: ActionMode,
    ) -> Result<JointDecision, Error>;
}

/// Uniform over the five moves for every agent; values are zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformRandomPolicy;

impl JointPolicy for UniformRandomPolicy {
    fn decide(
        &self,
        history: &[ObservationSet],
        rng: &mut ChaCha8Rng,
        _mode: ActionMode,
    ) -> Result<JointDecision, Error> {
        let n = history.last().map_or(0, |o| o.n_agents());
        let actions = (0..n).map(|_| rng.random_range(0..N_ACTIONS)).collect();
        Ok(JointDecision {
            actions,
            log_probs: vec![-(N_ACTIONS as f64).ln(); n],
            values: vec![0.0; n],
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rewards {
    pub agents: Vec<f64>,
    pub team: f64,
}

/// Prefix robustness of every agent's formula; the team value is that of
/// their conjunction, i.e. the minimum.
pub fn reward(prefix: &[Frame], specs: &[Spec], floor: f64) -> Result<Rewards, Error> {
    let agents = specs
        .iter()
        .map(|s| prefix_robustness_with_floor(s, prefix, floor))
        .collect::<Result<Vec<_>, _>>()?;
    let team = team_reward(&agents);
    Ok(Rewards { agents, team })
}

/// Robustness of the joint formula over a whole trajectory, windows clipped
/// at its end. An episode satisfies the task iff this is positive.
pub fn episode_robustness(trajectory: &[Frame], specs: &[Spec]) -> Result<f64, Error> {
    Ok(reward(trajectory, specs, DEFAULT_FLOOR)?.team)
}

pub fn team_reward(agents: &[f64]) -> f64 {
    agents.iter().copied().fold(f64::INFINITY, f64::min)
}

/// SplitMix64 of `base + index`: well-spread, reproducible per-episode seeds.
pub fn episode_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Rolls out one full episode. The environment is reset with `seed`; the
/// policy draws from an independent stream of the same seed. Decisions are
/// returned alongside the record for the trainer's buffer.
pub fn run_episode(
    world: &LandmarkWorld,
    specs: &[Spec],
    policy: &dyn JointPolicy,
    seed: u64,
    mode: ActionMode,
    reward_mode: RewardMode,
) -> Result<(EpisodeRecord, Vec<JointDecision>), Error> {
    let n = world.spec().n_agents;
    if specs.len() != n {
        return Err(Error::Config(format!("{} formulas for {n} agents", specs.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut state = world.reset(seed);
    let mut trajectory = Trajectory::new();
    trajectory.push(state.frame());
    let mut observations = Vec::with_capacity(world.spec().horizon);
    let mut actions = Vec::new();
    let mut decisions = Vec::new();
    let mut agent_rewards = Vec::new();
    let mut team_rewards = Vec::new();
    let mut previous = reward(&trajectory, specs, DEFAULT_FLOOR)?;
    while !world.is_done(&state) {
        observations.push(world.observe(&state));
        let decision = policy.decide(&observations, &mut rng, mode)?;
        state = world.step(&state, &decision.actions)?;
        trajectory.push(state.frame());
        let literal = reward(&trajectory, specs, DEFAULT_FLOOR)?;
        let r = match reward_mode {
            RewardMode::Robustness => literal,
            RewardMode::Increment => {
                let agents = literal.agents.iter().zip(&previous.agents).map(|(a, b)| a - b).collect();
                let r = Rewards { agents, team: literal.team - previous.team };
                previous = literal;
                r
            }
        };
        actions.push(decision.actions.clone());
        agent_rewards.push(r.agents);
        team_rewards.push(r.team);
        decisions.push(decision);
    }
    let record = EpisodeRecord {
        seed,
        trajectory,
        observations,
        actions,
        agent_rewards,
        team_rewards,
    };
    Ok((record, decisions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{build_reach_task, build_task_1, Dynamics, GameSpec, TaskParams};
    use crate::stl::{conjoin, prefix_robustness};

    fn world(n: usize, horizon: usize) -> LandmarkWorld {
        LandmarkWorld::new(GameSpec { n_agents: n, horizon, gamma: 0.99 }, Dynamics::default())
            .unwrap()
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(episode_seed(3, 4), episode_seed(3, 4));
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|k| episode_seed(9, k)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn episode_is_deterministic_and_recomputable() {
        let w = world(3, 25);
        let specs = build_task_1(3, &TaskParams::default());
        let (a, da) =
            run_episode(&w, &specs, &UniformRandomPolicy, 42, ActionMode::Sample, RewardMode::Robustness)
                .unwrap();
        let (b, db) =
            run_episode(&w, &specs, &UniformRandomPolicy, 42, ActionMode::Sample, RewardMode::Robustness)
                .unwrap();
        assert_eq!(a, b);
        assert_eq!(da, db);
        assert_eq!(a.trajectory.len(), 26);
        assert_eq!(a.observations.len(), 25);
        assert_eq!(a.actions.len(), 25);
        assert_eq!(a.team_rewards.len(), 25);
        let joint = conjoin(specs.clone()).unwrap();
        for t in 0..25 {
            let prefix = a.trajectory.prefix(t + 1);
            for (i, s) in specs.iter().enumerate() {
                assert_eq!(a.agent_rewards[t][i], prefix_robustness(s, prefix).unwrap());
            }
            assert_eq!(a.team_rewards[t], prefix_robustness(&joint, prefix).unwrap());
        }
    }

    #[test]
    fn single_agent_team_reward_is_agent_reward() {
        let w = world(1, 10);
        let specs = build_reach_task(1, &TaskParams { window: 10, radius: 0.3 });
        let (rec, _) =
            run_episode(&w, &specs, &UniformRandomPolicy, 1, ActionMode::Sample, RewardMode::Robustness)
                .unwrap();
        for t in 0..10 {
            assert_eq!(rec.team_rewards[t], rec.agent_rewards[t][0]);
        }
    }

    #[test]
    fn increment_rewards_telescope() {
        let w = world(2, 10);
        let specs = build_reach_task(2, &TaskParams { window: 10, radius: 0.3 });
        let run = |m| {
            run_episode(&w, &specs, &UniformRandomPolicy, 5, ActionMode::Sample, m).unwrap().0
        };
        let lit = run(RewardMode::Robustness);
        let inc = run(RewardMode::Increment);
        let first = reward(lit.trajectory.prefix(0), &specs, DEFAULT_FLOOR).unwrap().team;
        let total: f64 = inc.team_rewards.iter().sum();
        assert!((first + total - lit.team_rewards[9]).abs() < 1e-12);
    }
}
