use super::EpisodeData;
use crate::autodiff::{Graph, Tensor, Var};
use crate::model::{episode_forward, Context, EncoderPass, ModelConfig, TdmatPolicy};
use crate::Error;

/// Quantities held constant while differentiating. By default the Bellman
/// targets come from the current forward pass and the decoder context is a
/// detached copy of the current encoder output.
#[derive(Clone, Copy, Debug, Default)]
pub struct Frozen<'a> {
    /// `r_t + gamma * V^i(o_{0:t+1})`, `TN` entries, row `t * N + i`.
    pub value_targets: Option<&'a [f64]>,
    pub context: Context<'a>,
}

pub struct EpisodeLosses {
    pub enc_v: Var,
    pub dec: Var,
    pub values: Var,
    pub context: Var,
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn ppo_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// Bellman targets from a flat `TN` value vector; zero bootstrap after the
/// last step.
pub fn bellman_targets(rewards: &[f64], values: &[f64], n_agents: usize, gamma: f64) -> Vec<f64> {
    let steps = rewards.len();
    let mut out = Vec::with_capacity(steps * n_agents);
    for (t, r) in rewards.iter().enumerate() {
        for i in 0..n_agents {
            let next = if t + 1 < steps { values[(t + 1) * n_agents + i] } else { 0.0 };
            out.push(r + gamma * next);
        }
    }
    out
}

/// Both losses of one episode on a shared forward pass.
///
/// `enc_v = (1/N) sum_{i,t} (target^i_t - V^i_t)^2` and
/// `dec = -(1/N) sum_{i,t} min(r A_t, clip(r) A_t)` with
/// `r = exp(log pi(a^i_t) - log pi_old(a^i_t))`. With a detached or fixed
/// context the two depend on disjoint parameter groups, so one backward pass
/// over their sum yields both gradients.
#[allow(clippy::too_many_arguments)]
pub fn episode_losses(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    ep: &EpisodeData,
    advantages: &[f64],
    gamma: f64,
    clip_eps: f64,
    pass: EncoderPass,
    frozen: Frozen<'_>,
) -> Result<EpisodeLosses, Error> {
    let n = cfg.n_agents;
    let rec = &ep.record;
    let steps = rec.horizon();
    if advantages.len() != steps {
        return Err(super::TrainError::LengthMismatch { rewards: steps, values: advantages.len() }.into());
    }
    let out = episode_forward(g, cfg, &rec.observations, &rec.actions, &ep.order, pass, frozen.context)?;
    let rows = steps * n;

    let targets = match frozen.value_targets {
        Some(t) => t.to_vec(),
        None => bellman_targets(&rec.team_rewards, g.value(out.values).data(), n, gamma),
    };
    let targets = g.constant(Tensor::new(rows, 1, targets)?)?;
    let diff = g.sub(targets, out.values)?;
    let sq = g.square(diff)?;
    let s = g.sum(sq)?;
    let enc_v = g.scale(s, 1.0 / n as f64)?;

    let old: Vec<f64> = ep.log_probs.iter().flatten().copied().collect();
    let old = g.constant(Tensor::new(rows, 1, old)?)?;
    let adv: Vec<f64> = advantages.iter().flat_map(|&a| std::iter::repeat_n(a, n)).collect();
    let adv = g.constant(Tensor::new(rows, 1, adv)?)?;
    let log_ratio = g.sub(out.chosen, old)?;
    let ratio = g.exp(log_ratio)?;
    let unclipped = g.mul(ratio, adv)?;
    let clipped = g.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)?;
    let clipped = g.mul(clipped, adv)?;
    let surrogate = g.minimum(unclipped, clipped)?;
    let s = g.sum(surrogate)?;
    let dec = g.scale(s, -1.0 / n as f64)?;
    Ok(EpisodeLosses { enc_v, dec, values: out.values, context: out.context })
}

/// Encoder and value loss averaged over the buffer's episodes.
pub fn loss_encoder_value(
    policy: &TdmatPolicy,
    episodes: &[EpisodeData],
    gamma: f64,
    pass: EncoderPass,
) -> Result<f64, Error> {
    let mut total = 0.0;
    for ep in episodes {
        let mut g = Graph::new(policy.params());
        let zeros = vec![0.0; ep.horizon()];
        let l = episode_losses(&mut g, policy.config(), ep, &zeros, gamma, 0.2, pass, Frozen::default())?;
        total += g.value(l.enc_v).item();
    }
    Ok(total / episodes.len().max(1) as f64)
}

/// Clipped decoder loss averaged over episodes; `advantages[k]` belongs to
/// episode `k`.
pub fn loss_decoder(
    policy: &TdmatPolicy,
    episodes: &[EpisodeData],
    advantages: &[Vec<f64>],
    clip_eps: f64,
    pass: EncoderPass,
) -> Result<f64, Error> {
    let mut total = 0.0;
    for (ep, adv) in episodes.iter().zip(advantages) {
        let mut g = Graph::new(policy.params());
        let l = episode_losses(&mut g, policy.config(), ep, adv, 0.0, clip_eps, pass, Frozen::default())?;
        total += g.value(l.dec).item();
    }
    Ok(total / episodes.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surrogate_min_rule() {
        assert!((ppo_surrogate(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert_eq!(ppo_surrogate(1.5, -1.0, 0.2), -1.5);
        assert!((ppo_surrogate(0.5, -2.0, 0.2) - (-1.6)).abs() < 1e-15);
        assert_eq!(ppo_surrogate(1.0, 0.7, 0.2), 0.7);
    }

    #[test]
    fn targets_bootstrap_zero_at_the_end() {
        let t = bellman_targets(&[1.0, 2.0], &[0.1, 0.2, 0.3, 0.4], 2, 0.5);
        assert_eq!(t, vec![1.0 + 0.15, 1.0 + 0.2, 2.0, 2.0]);
    }
}
