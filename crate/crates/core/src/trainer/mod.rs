//! On-policy training: parallel rollouts, advantage estimation and clipped
//! policy-gradient updates of the decoder alongside Bellman-error updates of
//! the encoder and value head.

mod buffer;
mod gae;
mod loss;
mod optim;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::autodiff::{Gradients, Graph};
use crate::game::{episode_robustness, episode_seed, LandmarkWorld, RewardMode};
use crate::model::{Context, EncoderPass, ModelConfig, TdmatPolicy};
use crate::stl::Spec;
use crate::Error;

pub use buffer::{collect_rollouts, EpisodeData, RolloutBuffer};
pub use gae::{compute_gae, normalize};
pub use loss::{
    bellman_targets, episode_losses, loss_decoder, loss_encoder_value, ppo_surrogate, EpisodeLosses, Frozen,
};
pub use optim::{Optimizer, OptimizerKind};

#[derive(Debug, ThisError)]
pub enum TrainError {
    #[error("{rewards} rewards need {} values, got {values}", rewards + 1)]
    LengthMismatch { rewards: usize, values: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value in iteration {iteration}\n{snapshot}")]
    NonFinite { iteration: usize, snapshot: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Episodes collected per iteration.
    pub rollouts: usize,
    pub learning_rate: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub ppo_epochs: usize,
    /// Updates per epoch; the episodes are split into this many
    /// contiguous groups.
    pub minibatches: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub normalize_advantages: bool,
    pub encoder_pass: EncoderPass,
    pub reward_mode: RewardMode,
    /// Let the decoder loss backpropagate into the encoder. Off by default,
    /// which keeps the two losses on disjoint parameter groups.
    pub decoder_trains_encoder: bool,
    /// Collect rollouts and per-episode gradients on the thread pool.
    pub parallel: bool,
    /// Write a checkpoint every this many iterations; 0 disables.
    pub checkpoint_every: usize,
    /// Set from the run seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            rollouts: 8,
            learning_rate: 1e-3,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            ppo_epochs: 4,
            minibatches: 1,
            optimizer: OptimizerKind::Momentum,
            momentum: 0.9,
            normalize_advantages: true,
            encoder_pass: EncoderPass::PerStep,
            reward_mode: RewardMode::Robustness,
            decoder_trains_encoder: false,
            parallel: true,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if self.rollouts == 0 {
            return bad("rollouts must be at least 1");
        }
        if self.ppo_epochs == 0 {
            return bad("ppo_epochs must be at least 1");
        }
        if self.minibatches == 0 {
            return bad("minibatches must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }

    /// Seeds of the episodes collected in `iteration`.
    pub fn episode_seeds(&self, iteration: usize) -> Vec<u64> {
        (0..self.rollouts).map(|d| episode_seed(self.seed, (iteration * self.rollouts + d) as u64)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: usize,
    /// Environment steps taken so far, this iteration included.
    pub env_steps: usize,
    /// Mean joint robustness of the iteration's episodes.
    pub mean_robustness: f64,
    pub satisfaction_rate: f64,
    /// Losses over the first epoch, each minibatch measured just before
    /// its update.
    pub loss_enc_v: f64,
    pub loss_dec: f64,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iteration,env_steps,mean_robustness,satisfaction_rate,loss_enc_v,loss_dec";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.iteration, self.env_steps, self.mean_robustness, self.satisfaction_rate, self.loss_enc_v, self.loss_dec
        )
    }
}

/// Iterative driver; [`train`] runs it to completion.
pub struct Trainer<'w> {
    world: &'w LandmarkWorld,
    specs: Vec<Spec>,
    cfg: TrainConfig,
    policy: TdmatPolicy,
    opt_phi: Optimizer,
    opt_theta: Optimizer,
    iteration: usize,
    env_steps: usize,
}

struct EpisodeStep {
    enc_v: f64,
    dec: f64,
    grads: Gradients,
}

impl<'w> Trainer<'w> {
    pub fn new(world: &'w LandmarkWorld, specs: Vec<Spec>, policy: TdmatPolicy, cfg: TrainConfig) -> Result<Self, Error> {
        cfg.validate()?;
        if policy.config().n_agents != world.spec().n_agents {
            return Err(Error::Config(format!(
                "model has {} agents, game has {}",
                policy.config().n_agents,
                world.spec().n_agents
            )));
        }
        if policy.config().horizon < world.spec().horizon {
            return Err(Error::Config("model horizon is shorter than the episode".into()));
        }
        let opt = |names| Optimizer::new(cfg.optimizer, cfg.learning_rate, cfg.momentum, names);
        let opt_phi = opt(policy.phi_names());
        let opt_theta = opt(policy.theta_names());
        Ok(Trainer { world, specs, cfg, policy, opt_phi, opt_theta, iteration: 0, env_steps: 0 })
    }

    pub fn policy(&self) -> &TdmatPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> TdmatPolicy {
        self.policy
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Collects one wave of rollouts and runs the update epochs on it.
    pub fn step(&mut self) -> Result<IterationMetrics, Error> {
        let seeds = self.cfg.episode_seeds(self.iteration);
        let buffer =
            collect_rollouts(self.world, &self.specs, &self.policy, &seeds, self.cfg.reward_mode, self.cfg.parallel)?;
        self.env_steps += buffer.steps();

        let mut robustness = Vec::with_capacity(buffer.len());
        for ep in &buffer.episodes {
            robustness.push(episode_robustness(&ep.record.trajectory, &self.specs)?);
        }
        let gamma = self.world.spec().gamma;
        let mut advantages = Vec::with_capacity(buffer.len());
        for ep in &buffer.episodes {
            advantages.push(compute_gae(&ep.record.team_rewards, &ep.mean_values(), gamma, self.cfg.gae_lambda)?);
        }
        if self.cfg.normalize_advantages {
            let mut flat: Vec<f64> = advantages.iter().flatten().copied().collect();
            normalize(&mut flat);
            let mut it = flat.into_iter();
            for adv in &mut advantages {
                adv.iter_mut().for_each(|a| *a = it.next().unwrap());
            }
        }

        // episodes are split into contiguous minibatches, one update each
        let chunk = buffer.len().div_ceil(self.cfg.minibatches.min(buffer.len()));
        let (mut first_enc_v, mut first_dec) = (0.0, 0.0);
        for epoch in 0..self.cfg.ppo_epochs {
            for (b, (eps, advs)) in buffer.episodes.chunks(chunk).zip(advantages.chunks(chunk)).enumerate() {
                let results = self.episode_gradients(eps, advs, gamma);
                let mut grads: Option<Gradients> = None;
                let (mut enc_v, mut dec) = (0.0, 0.0);
                for (k, r) in results.into_iter().enumerate() {
                    let r = r.map_err(|e| self.non_finite(e, epoch, &seeds, b * chunk + k))?;
                    enc_v += r.enc_v;
                    dec += r.dec;
                    match grads.as_mut() {
                        None => grads = Some(r.grads),
                        Some(acc) => {
                            for (name, g) in r.grads {
                                acc.get_mut(&name).expect("same parameter set").add_assign(&g);
                            }
                        }
                    }
                }
                if !enc_v.is_finite() || !dec.is_finite() {
                    let e = Error::Config(format!("losses enc_v={enc_v} dec={dec}"));
                    return Err(self.non_finite(e, epoch, &seeds, usize::MAX));
                }
                if epoch == 0 {
                    first_enc_v += enc_v;
                    first_dec += dec;
                }
                let m = eps.len() as f64;
                let mut grads = grads.expect("non-empty minibatch");
                for g in grads.values_mut() {
                    g.data_mut().iter_mut().for_each(|v| *v /= m);
                }
                self.opt_phi.step(self.policy.params_mut(), &grads);
                self.opt_theta.step(self.policy.params_mut(), &grads);
            }
        }
        if let Some((name, _)) = self.policy.params().iter().find(|(_, t)| !t.is_finite()) {
            let e = Error::Config(format!("parameter {name} became non-finite"));
            return Err(self.non_finite(e, self.cfg.ppo_epochs, &seeds, usize::MAX));
        }

        let n = robustness.len() as f64;
        let (loss_enc_v, loss_dec) = (first_enc_v / n, first_dec / n);
        let metrics = IterationMetrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_robustness: robustness.iter().sum::<f64>() / n,
            satisfaction_rate: robustness.iter().filter(|&&r| r > 0.0).count() as f64 / n,
            loss_enc_v,
            loss_dec,
        };
        self.iteration += 1;
        Ok(metrics)
    }

    fn episode_gradients(
        &self,
        episodes: &[EpisodeData],
        advantages: &[Vec<f64>],
        gamma: f64,
    ) -> Vec<Result<EpisodeStep, Error>> {
        let one = |(ep, adv): (&EpisodeData, &Vec<f64>)| -> Result<EpisodeStep, Error> {
            let mut g = Graph::new(self.policy.params());
            let l = episode_losses(
                &mut g,
                self.policy.config(),
                ep,
                adv,
                gamma,
                self.cfg.clip_eps,
                self.cfg.encoder_pass,
                Frozen {
                    context: if self.cfg.decoder_trains_encoder { Context::Attached } else { Context::Detached },
                    ..Frozen::default()
                },
            )?;
            let total = g.add(l.enc_v, l.dec)?;
            let grads = g.backward(total)?;
            Ok(EpisodeStep { enc_v: g.value(l.enc_v).item(), dec: g.value(l.dec).item(), grads })
        };
        if self.cfg.parallel {
            episodes.par_iter().zip(advantages).map(one).collect()
        } else {
            episodes.iter().zip(advantages).map(one).collect()
        }
    }

    fn non_finite(&self, cause: Error, epoch: usize, seeds: &[u64], episode: usize) -> Error {
        let mut s = format!("cause: {cause}\nepoch: {epoch}\nenv_steps: {}\n", self.env_steps);
        if episode < seeds.len() {
            s.push_str(&format!("episode: {episode} (seed {})\n", seeds[episode]));
        }
        s.push_str("parameter max |w|:\n");
        for (name, t) in self.policy.params().iter() {
            let m = t.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            s.push_str(&format!("  {name} {m}\n"));
        }
        TrainError::NonFinite { iteration: self.iteration, snapshot: s }.into()
    }
}

pub struct TrainOutcome {
    pub policy: TdmatPolicy,
    pub metrics: Vec<IterationMetrics>,
}

/// Initializes a policy from `cfg.seed` and trains it for `cfg.iterations`.
pub fn train(
    world: &LandmarkWorld,
    specs: &[Spec],
    model: ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, Error> {
    let policy = TdmatPolicy::new(model, cfg.seed)?;
    let mut trainer = Trainer::new(world, specs.to_vec(), policy, cfg.clone())?;
    let mut metrics = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        metrics.push(trainer.step()?);
    }
    Ok(TrainOutcome { policy: trainer.into_policy(), metrics })
}
