use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    decoder_forward, encode_positions, encoder_forward, value_forward, value_forward_rows, DecoderInput,
    EncoderOutput,
};
use super::{ModelConfig, ModelError};
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::game::{episode_seed, ActionMode, JointDecision, JointPolicy, ObservationSet, OBS_DIM};

/// How a training pass encodes an episode. Both give bit-identical results;
/// `Shared` runs the causal encoder once over the whole episode while
/// `PerStep` re-encodes every prefix separately, as at rollout time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderPass {
    #[default]
    PerStep,
    Shared,
}

#[derive(Clone, Copy)]
enum Init {
    Xavier,
    /// Xavier scaled down so initial outputs start near zero.
    Head,
    Zeros,
    Ones,
}

fn param_layout(cfg: &ModelConfig) -> Vec<(String, [usize; 2], Init)> {
    let d = cfg.embed_dim;
    let mut out = Vec::new();
    let mut push = |name: String, shape: [usize; 2], init: Init| out.push((name, shape, init));
    let attention = |push: &mut dyn FnMut(String, [usize; 2], Init), p: &str| {
        for m in ["q", "k", "v", "o"] {
            push(format!("{p}.w{m}"), [d, d], Init::Xavier);
            push(format!("{p}.b{m}"), [1, d], Init::Zeros);
        }
    };
    let norm = |push: &mut dyn FnMut(String, [usize; 2], Init), p: &str| {
        push(format!("{p}.g"), [1, d], Init::Ones);
        push(format!("{p}.b"), [1, d], Init::Zeros);
    };
    let ff = |push: &mut dyn FnMut(String, [usize; 2], Init), p: &str| {
        push(format!("{p}.w1"), [d, d], Init::Xavier);
        push(format!("{p}.b1"), [1, d], Init::Zeros);
        push(format!("{p}.w2"), [d, d], Init::Xavier);
        push(format!("{p}.b2"), [1, d], Init::Zeros);
    };

    push("enc.obs.w".into(), [OBS_DIM, d], Init::Xavier);
    push("enc.obs.b".into(), [1, d], Init::Zeros);
    for b in 0..cfg.n_encoder_blocks {
        attention(&mut push, &format!("enc.{b}.attn"));
        norm(&mut push, &format!("enc.{b}.ln1"));
        ff(&mut push, &format!("enc.{b}.ff"));
        norm(&mut push, &format!("enc.{b}.ln2"));
    }
    for b in 0..cfg.n_value_blocks {
        attention(&mut push, &format!("val.{b}.self"));
        norm(&mut push, &format!("val.{b}.ln1"));
        attention(&mut push, &format!("val.{b}.cross"));
        norm(&mut push, &format!("val.{b}.ln2"));
        ff(&mut push, &format!("val.{b}.ff"));
        norm(&mut push, &format!("val.{b}.ln3"));
    }
    push("val.head.w".into(), [d, 1], Init::Head);
    push("val.head.b".into(), [1, 1], Init::Zeros);
    push("dec.act_emb".into(), [cfg.n_actions + 1, d], Init::Xavier);
    for b in 0..cfg.n_decoder_blocks {
        attention(&mut push, &format!("dec.{b}.self"));
        norm(&mut push, &format!("dec.{b}.ln1"));
        attention(&mut push, &format!("dec.{b}.cross"));
        norm(&mut push, &format!("dec.{b}.ln2"));
        ff(&mut push, &format!("dec.{b}.ff"));
        norm(&mut push, &format!("dec.{b}.ln3"));
    }
    push("dec.head.w".into(), [d, cfg.n_actions], Init::Head);
    push("dec.head.b".into(), [1, cfg.n_actions], Init::Zeros);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Parameters and configuration of the policy. Names starting with `enc.`
/// or `val.` form the encoder and value group, `dec.` the decoder group.
#[derive(Clone, Debug, PartialEq)]
pub struct TdmatPolicy {
    config: ModelConfig,
    params: ParamStore,
}

impl TdmatPolicy {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, [r, c], init) in param_layout(&config) {
            let limit = (6.0 / (r + c) as f64).sqrt();
            let data = match init {
                Init::Zeros => vec![0.0; r * c],
                Init::Ones => vec![1.0; r * c],
                Init::Xavier => (0..r * c).map(|_| rng.random_range(-limit..limit)).collect(),
                Init::Head => (0..r * c).map(|_| 0.01 * rng.random_range(-limit..limit)).collect(),
            };
            params.insert(name, Tensor::new(r, c, data)?);
        }
        Ok(TdmatPolicy { config, params })
    }

    /// Wraps loaded parameters after checking names and shapes against the
    /// architecture `config` describes.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = param_layout(&config);
        if layout.len() != params.len() {
            let missing = layout.iter().find(|(n, ..)| params.get(n).is_none());
            let name = match missing {
                Some((n, ..)) => n.clone(),
                None => params.names().find(|n| !layout.iter().any(|(l, ..)| l == n)).unwrap_or("").to_string(),
            };
            return Err(ModelError::Params { name, msg: "does not match the architecture".into() });
        }
        for (name, shape, _) in &layout {
            match params.get(name) {
                None => return Err(ModelError::Params { name: name.clone(), msg: "missing".into() }),
                Some(t) if t.shape() != *shape => {
                    return Err(ModelError::Params {
                        name: name.clone(),
                        msg: format!("shape {:?}, expected {shape:?}", t.shape()),
                    })
                }
                Some(_) => {}
            }
        }
        Ok(TdmatPolicy { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    /// Whether `name` belongs to the encoder and value group.
    pub fn is_phi(name: &str) -> bool {
        name.starts_with("enc.") || name.starts_with("val.")
    }

    pub fn is_theta(name: &str) -> bool {
        name.starts_with("dec.")
    }

    pub fn phi_names(&self) -> Vec<String> {
        self.params.names().filter(|n| Self::is_phi(n)).map(String::from).collect()
    }

    pub fn theta_names(&self) -> Vec<String> {
        self.params.names().filter(|n| Self::is_theta(n)).map(String::from).collect()
    }

    /// Order in which agents are decoded. Ascending unless shuffling is
    /// enabled, in which case the permutation is a function of the
    /// episode's first observation and therefore fixed within an episode.
    pub fn decode_order(&self, history: &[ObservationSet]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.config.n_agents).collect();
        if self.config.shuffle_agent_order {
            if let Some(first) = history.first() {
                let seed = first.0.iter().flatten().fold(0u64, |h, v| episode_seed(h, v.to_bits()));
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            }
        }
        order
    }

    fn check_history(&self, history: &[ObservationSet]) -> Result<(), ModelError> {
        if history.is_empty() {
            return Err(ModelError::EmptyHistory);
        }
        for o in history {
            if o.n_agents() != self.config.n_agents {
                return Err(ModelError::AgentCount { expected: self.config.n_agents, got: o.n_agents() });
            }
        }
        Ok(())
    }

    /// Encoder output for the whole of `history`.
    pub fn encode_history(&self, g: &mut Graph<'_>, history: &[ObservationSet]) -> Result<EncoderOutput, ModelError> {
        self.check_history(history)?;
        encode_steps(g, &self.config, history)
    }

    /// Per-agent values `V^i(o_{0:t})` where `t` is the last step of `history`.
    pub fn values(&self, history: &[ObservationSet]) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_history(&mut g, history)?;
        let v = value_forward(&mut g, &self.config, &enc, history.len() - 1)?;
        Ok(g.value(v).data().to_vec())
    }

    /// Action probabilities of the agent at decode position `prev.len()`,
    /// given the actions `prev` already chosen by the agents before it.
    pub fn action_probs(&self, history: &[ObservationSet], prev: &[usize]) -> Result<Vec<f64>, ModelError> {
        let mut g = Graph::new(&self.params);
        let enc = self.encode_history(&mut g, history)?;
        let order = self.decode_order(history);
        let lp = decode_actions(&mut g, &self.config, &enc, history.len() - 1, &order, prev)?;
        Ok(g.value(lp).data().iter().map(|v| v.exp()).collect())
    }

    /// Encodes the history, evaluates the values and decodes the agents one
    /// after another, each conditioned on the actions drawn before it.
    pub fn sample_joint_action(
        &self,
        history: &[ObservationSet],
        rng: &mut ChaCha8Rng,
        mode: ActionMode,
    ) -> Result<JointDecision, ModelError> {
        let n = self.config.n_agents;
        let t = history.len().saturating_sub(1);
        let mut g = Graph::new(&self.params);
        let enc = self.encode_history(&mut g, history)?;
        let v = value_forward(&mut g, &self.config, &enc, t)?;
        let values = g.value(v).data().to_vec();
        let order = self.decode_order(history);
        let mut chosen = Vec::with_capacity(n);
        let mut actions = vec![0; n];
        let mut log_probs = vec![0.0; n];
        for &agent in &order {
            let lp = decode_actions(&mut g, &self.config, &enc, t, &order, &chosen)?;
            let lp = g.value(lp).data();
            let a = match mode {
                ActionMode::Greedy => argmax(lp),
                ActionMode::Sample => sample(lp, rng.random::<f64>()),
            };
            actions[agent] = a;
            log_probs[agent] = lp[a];
            chosen.push(a);
        }
        Ok(JointDecision { actions, log_probs, values })
    }
}

impl JointPolicy for TdmatPolicy {
    fn decide(
        &self,
        history: &[ObservationSet],
        rng: &mut ChaCha8Rng,
        mode: ActionMode,
    ) -> Result<JointDecision, crate::Error> {
        Ok(self.sample_joint_action(history, rng, mode)?)
    }
}

/// First index of the largest entry.
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from log-probabilities with uniform `u` in `[0, 1)`.
fn sample(log_probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, lp) in log_probs.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return i;
        }
    }
    log_probs.len() - 1
}

fn encode_steps(g: &mut Graph<'_>, cfg: &ModelConfig, steps: &[ObservationSet]) -> Result<EncoderOutput, ModelError> {
    let mut obs = Vec::new();
    let mut agents = Vec::new();
    let mut times = Vec::new();
    for (t, o) in steps.iter().enumerate() {
        for (i, row) in o.0.iter().enumerate() {
            obs.push(*row);
            agents.push(i);
            times.push(t);
        }
    }
    let batch = encode_positions(g, cfg, &obs, &agents, &times)?;
    encoder_forward(g, cfg, &batch)
}

/// Log-probabilities (`1 x n_actions`) for the agent `order[prev.len()]` at
/// step `t`, conditioned on the actions `prev` of the agents before it.
pub fn decode_actions(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    enc: &EncoderOutput,
    t: usize,
    order: &[usize],
    prev: &[usize],
) -> Result<Var, ModelError> {
    let k = prev.len();
    if k >= order.len() {
        return Err(ModelError::AgentCount { expected: order.len(), got: k + 1 });
    }
    let rows = enc.rows_at(t);
    if rows.len() != cfg.n_agents {
        return Err(ModelError::AgentCount { expected: cfg.n_agents, got: rows.len() });
    }
    for (j, &a) in prev.iter().enumerate() {
        if a >= cfg.n_actions {
            return Err(ModelError::InvalidAction { agent: order[j], action: a, n_actions: cfg.n_actions });
        }
    }
    let ctx_rows: Vec<usize> = order[..=k].iter().map(|&i| rows[i]).collect();
    let context = g.select_rows(enc.rep, &ctx_rows)?;
    let input = std::iter::once(cfg.n_actions).chain(prev.iter().copied()).collect();
    let d = DecoderInput { context, group: vec![0; k + 1], pos: (0..=k).collect(), agent: order[..=k].to_vec(), input };
    let lp = decoder_forward(g, cfg, &d)?;
    Ok(g.select_rows(lp, &[k])?)
}

/// Everything the losses need from one episode, rows indexed `t * N + i`.
pub struct EpisodeOutputs {
    /// `V^i(o_{0:t})`, `TN x 1`.
    pub values: Var,
    /// Full action log-distributions, `TN x n_actions`.
    pub log_probs: Var,
    /// Log-probabilities of the taken actions, `TN x 1`.
    pub chosen: Var,
    /// Encoder rows the decoder attended to, `TN x embed_dim`.
    pub context: Var,
}

/// What the decoder attends to in `episode_forward`.
#[derive(Clone, Copy, Debug, Default)]
pub enum Context<'a> {
    /// A detached copy of the encoder output, so decoder losses never reach
    /// encoder parameters.
    #[default]
    Detached,
    /// The encoder output itself, so decoder losses also train the encoder.
    Attached,
    /// A fixed tensor of the encoder output's shape.
    Fixed(&'a Tensor),
}

/// Evaluates values and decoder log-probabilities for a stored episode.
pub fn episode_forward(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    observations: &[ObservationSet],
    actions: &[Vec<usize>],
    order: &[usize],
    pass: EncoderPass,
    context: Context<'_>,
) -> Result<EpisodeOutputs, ModelError> {
    let n = cfg.n_agents;
    let steps = observations.len();
    if steps == 0 {
        return Err(ModelError::EmptyHistory);
    }
    if actions.len() != steps {
        return Err(ModelError::InvalidConfig(format!("{steps} observation steps but {} action steps", actions.len())));
    }
    for (o, a) in observations.iter().zip(actions) {
        if o.n_agents() != n || a.len() != n {
            return Err(ModelError::AgentCount { expected: n, got: o.n_agents().min(a.len()) });
        }
        if let Some((agent, &action)) = a.iter().enumerate().find(|(_, &x)| x >= cfg.n_actions) {
            return Err(ModelError::InvalidAction { agent, action, n_actions: cfg.n_actions });
        }
    }

    let (values, rep) = match pass {
        EncoderPass::Shared => {
            let enc = encode_steps(g, cfg, observations)?;
            let rows: Vec<usize> = (0..steps * n).collect();
            (value_forward_rows(g, cfg, &enc, &rows)?, enc.rep)
        }
        EncoderPass::PerStep => {
            let mut vals = Vec::with_capacity(steps);
            let mut reps = Vec::with_capacity(steps);
            for t in 0..steps {
                let enc = encode_steps(g, cfg, &observations[..=t])?;
                let rows = enc.rows_at(t);
                vals.push(value_forward_rows(g, cfg, &enc, &rows)?);
                reps.push(g.select_rows(enc.rep, &rows)?);
            }
            (g.concat_rows(&vals)?, g.concat_rows(&reps)?)
        }
    };

    // decoder positions in decode order; row t * N + k holds order[k]
    let rep = match context {
        Context::Fixed(c) if c.shape() == g.value(rep).shape() => g.constant(c.clone())?,
        Context::Fixed(c) => {
            return Err(ModelError::InvalidConfig(format!(
                "context of shape {:?}, expected {:?}",
                c.shape(),
                g.value(rep).shape()
            )))
        }
        Context::Attached => rep,
        Context::Detached => g.detach(rep),
    };
    let mut ctx_rows = Vec::with_capacity(steps * n);
    let mut d = DecoderInput { context: rep, group: vec![], pos: vec![], agent: vec![], input: vec![] };
    for (t, a) in actions.iter().enumerate() {
        for (k, &agent) in order.iter().enumerate() {
            ctx_rows.push(t * n + agent);
            d.group.push(t);
            d.pos.push(k);
            d.agent.push(agent);
            d.input.push(if k == 0 { cfg.n_actions } else { a[order[k - 1]] });
        }
    }
    d.context = g.select_rows(rep, &ctx_rows)?;
    let lp_decode = decoder_forward(g, cfg, &d)?;
    // back to agent order
    let mut back = vec![0; steps * n];
    for t in 0..steps {
        for (k, &agent) in order.iter().enumerate() {
            back[t * n + agent] = t * n + k;
        }
    }
    let log_probs = g.select_rows(lp_decode, &back)?;
    let picked: Vec<usize> = actions.iter().flatten().copied().collect();
    let chosen = g.gather(log_probs, &picked)?;
    Ok(EpisodeOutputs { values, log_probs, chosen, context: rep })
}
