use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{ObservationSet, OBS_DIM};
use crate::stl::{Frame, Trajectory};
use crate::Error;

/// A finished episode. `trajectory` holds `T + 1` states; every other
/// sequence holds `T` entries, one per action step. The rewards at step `t`
/// are those earned on reaching state `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub trajectory: Trajectory,
    pub observations: Vec<ObservationSet>,
    pub actions: Vec<Vec<usize>>,
    pub agent_rewards: Vec<Vec<f64>>,
    pub team_rewards: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct StepRewards {
    agents: Vec<f64>,
    team: f64,
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    t: usize,
    entities: BTreeMap<String, [f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    obs: Option<Vec<[f64; OBS_DIM]>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    actions: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    rewards: Option<StepRewards>,
}

impl EpisodeRecord {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// JSON Lines, one line per state `t = 0..=T`. The final line has only
    /// `t` and `entities`. Readable as a plain trace by the monitor.
    pub fn write_jsonl(&self, mut w: impl Write) -> std::io::Result<()> {
        for (t, frame) in self.trajectory.frames().iter().enumerate() {
            let acted = t < self.horizon();
            let line = StepLine {
                t,
                entities: frame.entities.clone(),
                obs: acted.then(|| self.observations[t].0.clone()),
                actions: acted.then(|| self.actions[t].clone()),
                rewards: acted.then(|| StepRewards {
                    agents: self.agent_rewards[t].clone(),
                    team: self.team_rewards[t],
                }),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(reader: impl BufRead, seed: u64) -> Result<Self, Error> {
        let mut rec = EpisodeRecord {
            seed,
            trajectory: Trajectory::new(),
            observations: Vec::new(),
            actions: Vec::new(),
            agent_rewards: Vec::new(),
            team_rewards: Vec::new(),
        };
        for (k, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step: StepLine = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("episode line {}: {e}", k + 1)))?;
            if step.t != rec.trajectory.len() {
                return Err(Error::Parse(format!("episode line {}: t out of order", k + 1)));
            }
            rec.trajectory.push(Frame { entities: step.entities });
            if let (Some(o), Some(a), Some(r)) = (step.obs, step.actions, step.rewards) {
                rec.observations.push(ObservationSet(o));
                rec.actions.push(a);
                rec.agent_rewards.push(r.agents);
                rec.team_rewards.push(r.team);
            }
        }
        Ok(rec)
    }
}
