//! Landmark world: a partially observable Markov game with point-mass agents,
//! fixed landmarks and rewards given by prefix robustness of per-agent
//! formulas.

mod episode;
mod record;
mod tasks;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::{Frame, StlError};

pub use episode::{
    episode_robustness, episode_seed, reward, run_episode, team_reward, ActionMode, JointDecision, JointPolicy,
    RewardMode, Rewards, UniformRandomPolicy,
};
pub use record::EpisodeRecord;
pub use tasks::{build_reach_task, build_task_1, build_task_2, dist_atom, TaskParams};

/// Width of every per-agent observation vector.
pub const OBS_DIM: usize = 18;
/// UP, DOWN, LEFT, RIGHT, NOTHING.
pub const N_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Nothing = 4,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] =
        [Action::Up, Action::Down, Action::Left, Action::Right, Action::Nothing];

    pub fn from_id(id: usize) -> Option<Action> {
        Self::ALL.get(id).copied()
    }

    /// Unit direction of the acceleration impulse.
    pub fn direction(self) -> [f64; 2] {
        match self {
            Action::Up => [0.0, 1.0],
            Action::Down => [0.0, -1.0],
            Action::Left => [-1.0, 0.0],
            Action::Right => [1.0, 0.0],
            Action::Nothing => [0.0, 0.0],
        }
    }
}

#[derive(Debug, Error)]
pub enum GameError {
    #[error("invalid game spec: {0}")]
    InvalidSpec(String),
    #[error("agent {agent}: action id {action} is not in 0..{N_ACTIONS}")]
    InvalidAction { agent: usize, action: usize },
    #[error("expected {expected} actions, got {got}")]
    WrongActionCount { expected: usize, got: usize },
    #[error("episode already finished at step {0}")]
    EpisodeFinished(usize),
    #[error(transparent)]
    Stl(#[from] StlError),
}

/// The game tuple's static part: agent count, per-agent action sets,
/// discount and episode length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GameSpec {
    pub n_agents: usize,
    pub gamma: f64,
    pub horizon: usize,
}

impl Default for GameSpec {
    fn default() -> Self {
        GameSpec {
            // a joint observation of 54 values at 18 per agent
            n_agents: 3,
            gamma: 0.99,
            horizon: 25,
        }
    }
}

impl GameSpec {
    pub fn validate(&self) -> Result<(), GameError> {
        if self.n_agents == 0 {
            return Err(GameError::InvalidSpec("n_agents must be at least 1".into()));
        }
        // own vel + own pos + 2 per landmark + 2 per other agent must fit
        if 4 + 4 * self.n_agents - 2 > OBS_DIM {
            return Err(GameError::InvalidSpec(format!(
                "{} agents do not fit the {OBS_DIM}-wide observation (at most 4)",
                self.n_agents
            )));
        }
        if self.horizon == 0 {
            return Err(GameError::InvalidSpec("horizon must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(GameError::InvalidSpec(format!("gamma {} not in (0, 1]", self.gamma)));
        }
        Ok(())
    }

    /// Per-agent action sets; every agent has the same five moves.
    pub fn action_sets(&self) -> Vec<[Action; N_ACTIONS]> {
        vec![Action::ALL; self.n_agents]
    }
}

/// Double-integrator constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dynamics {
    pub dt: f64,
    pub accel: f64,
    /// Velocity is multiplied by this factor every step before the impulse.
    pub damping: f64,
    /// Positions are clamped to `[-arena, arena]` on both axes.
    pub arena: f64,
}

impl Default for Dynamics {
    fn default() -> Self {
        Dynamics { dt: 0.1, accel: 3.0, damping: 0.75, arena: 1.0 }
    }
}

impl Dynamics {
    pub fn validate(&self) -> Result<(), GameError> {
        let ok = self.dt > 0.0
            && self.accel.is_finite()
            && (0.0..=1.0).contains(&self.damping)
            && self.arena > 0.0
            && self.arena.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GameError::InvalidSpec(format!("invalid dynamics {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent_pos: Vec<[f64; 2]>,
    pub agent_vel: Vec<[f64; 2]>,
    pub landmark_pos: Vec<[f64; 2]>,
    pub step: usize,
}

impl WorldState {
    pub fn agent_name(i: usize) -> String {
        format!("agent{i}")
    }

    pub fn landmark_name(j: usize) -> String {
        format!("landmark{j}")
    }

    /// Entity table of this state for the monitor.
    pub fn frame(&self) -> Frame {
        let mut f = Frame::new();
        for (i, p) in self.agent_pos.iter().enumerate() {
            f.entities.insert(Self::agent_name(i), *p);
        }
        for (j, p) in self.landmark_pos.iter().enumerate() {
            f.entities.insert(Self::landmark_name(j), *p);
        }
        f
    }
}

/// Per-agent observation vectors, each exactly [`OBS_DIM`] wide.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet(pub Vec<[f64; OBS_DIM]>);

impl ObservationSet {
    pub fn n_agents(&self) -> usize {
        self.0.len()
    }

    pub fn agent(&self, i: usize) -> &[f64; OBS_DIM] {
        &self.0[i]
    }
}

/// Game spec plus dynamics; stateless apart from configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkWorld {
    spec: GameSpec,
    dynamics: Dynamics,
}

impl LandmarkWorld {
    pub fn new(spec: GameSpec, dynamics: Dynamics) -> Result<Self, GameError> {
        spec.validate()?;
        dynamics.validate()?;
        Ok(LandmarkWorld { spec, dynamics })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn dynamics(&self) -> &Dynamics {
        &self.dynamics
    }

    /// Uniform placement of agents and landmarks inside the arena, at rest.
    pub fn reset(&self, seed: u64) -> WorldState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = self.dynamics.arena;
        let point = |rng: &mut ChaCha8Rng| [rng.random_range(-a..a), rng.random_range(-a..a)];
        let n = self.spec.n_agents;
        let agent_pos = (0..n).map(|_| point(&mut rng)).collect();
        let landmark_pos = (0..n).map(|_| point(&mut rng)).collect();
        WorldState { agent_pos, agent_vel: vec![[0.0; 2]; n], landmark_pos, step: 0 }
    }

    pub fn is_done(&self, state: &WorldState) -> bool {
        state.step >= self.spec.horizon
    }

    /// One transition. Velocity is damped, the action's impulse added, then
    /// position integrated and clamped; a clamped axis loses its velocity.
    pub fn step(&self, state: &WorldState, actions: &[usize]) -> Result<WorldState, GameError> {
        if self.is_done(state) {
            return Err(GameError::EpisodeFinished(state.step));
        }
        let n = self.spec.n_agents;
        if actions.len() != n {
            return Err(GameError::WrongActionCount { expected: n, got: actions.len() });
        }
        let d = &self.dynamics;
        let mut next = state.clone();
        for (i, &a) in actions.iter().enumerate() {
            let act = Action::from_id(a).ok_or(GameError::InvalidAction { agent: i, action: a })?;
            let dir = act.direction();
            for k in 0..2 {
                let v = d.damping * state.agent_vel[i][k] + d.accel * d.dt * dir[k];
                let p = state.agent_pos[i][k] + v * d.dt;
                let clamped = p.clamp(-d.arena, d.arena);
                next.agent_pos[i][k] = clamped;
                next.agent_vel[i][k] = if clamped != p { 0.0 } else { v };
            }
        }
        next.step += 1;
        Ok(next)
    }

    /// Per-agent layout: `[vel(2), pos(2), landmark_j - pos for every j,
    /// other_agent_k - pos for k != i in ascending order, zeros]`.
    pub fn observe(&self, state: &WorldState) -> ObservationSet {
        let n = state.agent_pos.len();
        let obs = (0..n)
            .map(|i| {
                let mut o = [0.0; OBS_DIM];
                let p = state.agent_pos[i];
                o[..2].copy_from_slice(&state.agent_vel[i]);
                o[2..4].copy_from_slice(&p);
                let mut k = 4;
                for l in &state.landmark_pos {
                    o[k] = l[0] - p[0];
                    o[k + 1] = l[1] - p[1];
                    k += 2;
                }
                for (j, q) in state.agent_pos.iter().enumerate() {
                    if j != i {
                        o[k] = q[0] - p[0];
                        o[k + 1] = q[1] - p[1];
                        k += 2;
                    }
                }
                o
            })
            .collect();
        ObservationSet(obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world(n: usize) -> LandmarkWorld {
        LandmarkWorld::new(GameSpec { n_agents: n, ..GameSpec::default() }, Dynamics::default())
            .unwrap()
    }

    #[test]
    fn reset_is_deterministic_and_seed_dependent() {
        let w = world(3);
        assert_eq!(w.reset(7), w.reset(7));
        assert_ne!(w.reset(0).agent_pos, w.reset(1).agent_pos);
        let s = w.reset(0);
        assert_eq!((s.agent_pos.len(), s.landmark_pos.len(), s.step), (3, 3, 0));
        for p in s.agent_pos.iter().chain(&s.landmark_pos) {
            assert!(p[0].abs() <= 1.0 && p[1].abs() <= 1.0);
        }
    }

    #[test]
    fn nothing_at_rest_is_a_fixed_point() {
        let w = world(3);
        let s = w.reset(3);
        let n = w.step(&s, &[4, 4, 4]).unwrap();
        assert_eq!(n.agent_pos, s.agent_pos);
        assert_eq!(n.step, 1);
    }

    #[test]
    fn up_then_down_matches_hand_integration() {
        let w = world(1);
        let mut s = w.reset(0);
        s.agent_pos[0] = [0.0, 0.0];
        // v1 = 0.3, y1 = 0.03; v2 = 0.75 * 0.3 - 0.3 = -0.075, y2 = 0.03 - 0.0075
        let up_down = w.step(&w.step(&s, &[0]).unwrap(), &[1]).unwrap();
        let down_up = w.step(&w.step(&s, &[1]).unwrap(), &[0]).unwrap();
        assert_eq!(up_down.agent_pos[0][0], 0.0);
        assert!((up_down.agent_pos[0][1] - 0.0225).abs() < 1e-15);
        assert!((up_down.agent_vel[0][1] + 0.075).abs() < 1e-15);
        assert_eq!(down_up.agent_pos[0][1], -up_down.agent_pos[0][1]);
    }

    #[test]
    fn episode_ends_after_horizon() {
        let w = world(2);
        let mut s = w.reset(1);
        for _ in 0..25 {
            assert!(!w.is_done(&s));
            s = w.step(&s, &[0, 3]).unwrap();
        }
        assert!(w.is_done(&s));
        assert!(matches!(w.step(&s, &[0, 0]), Err(GameError::EpisodeFinished(25))));
    }

    #[test]
    fn invalid_actions_are_rejected() {
        let w = world(2);
        let s = w.reset(1);
        assert!(matches!(w.step(&s, &[0, 5]), Err(GameError::InvalidAction { agent: 1, action: 5 })));
        assert!(matches!(w.step(&s, &[0]), Err(GameError::WrongActionCount { .. })));
    }

    #[test]
    fn positions_are_clamped_to_arena() {
        let w = world(1);
        let mut s = w.reset(0);
        for _ in 0..25 {
            s = w.step(&s, &[3]).unwrap();
        }
        assert_eq!(s.agent_pos[0][0], 1.0);
        assert_eq!(s.agent_vel[0][0], 0.0);
    }

    #[test]
    fn observation_layout() {
        let w = world(3);
        let s = w.reset(5);
        let o = w.observe(&s);
        assert_eq!(o.n_agents(), 3);
        assert_eq!(o.0.iter().map(|v| v.len()).sum::<usize>(), 54);
        let mut at = s.clone();
        at.agent_pos[1] = at.landmark_pos[2];
        let o = w.observe(&at);
        assert_eq!(&o.agent(1)[8..10], &[0.0, 0.0]);
        assert!(o.agent(0)[14..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn translation_moves_only_absolute_entries() {
        let w = world(3);
        let s = w.reset(11);
        let mut shifted = s.clone();
        for p in shifted.agent_pos.iter_mut().chain(shifted.landmark_pos.iter_mut()) {
            p[0] += 0.25;
            p[1] -= 0.125;
        }
        let (a, b) = (w.observe(&s), w.observe(&shifted));
        for i in 0..3 {
            for k in 0..OBS_DIM {
                let diff = b.agent(i)[k] - a.agent(i)[k];
                match k {
                    2 => assert!((diff - 0.25).abs() < 1e-12),
                    3 => assert!((diff + 0.125).abs() < 1e-12),
                    _ => assert!(diff.abs() < 1e-12, "agent {i} slot {k}"),
                }
            }
        }
    }

    #[test]
    fn spec_validation() {
        assert!(GameSpec { n_agents: 0, ..GameSpec::default() }.validate().is_err());
        assert!(GameSpec { n_agents: 5, ..GameSpec::default() }.validate().is_err());
        assert!(GameSpec { n_agents: 4, ..GameSpec::default() }.validate().is_ok());
        assert!(GameSpec { gamma: 0.0, ..GameSpec::default() }.validate().is_err());
        assert!(GameSpec { horizon: 0, ..GameSpec::default() }.validate().is_err());
    }
}
