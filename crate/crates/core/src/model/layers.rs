use super::{ModelConfig, ModelError};
use crate::autodiff::{Graph, Mask, Tensor, Var};
use crate::game::OBS_DIM;

/// Embedded tokens plus the (agent, time) pair each one carries.
#[derive(Clone, Debug)]
pub struct TokenBatch {
    pub tokens: Var,
    pub agent_ids: Vec<usize>,
    pub time_ids: Vec<usize>,
}

/// One representation row per input token, in input order.
#[derive(Clone, Debug)]
pub struct EncoderOutput {
    pub rep: Var,
    pub agent_ids: Vec<usize>,
    pub time_ids: Vec<usize>,
}

impl EncoderOutput {
    pub fn len(&self) -> usize {
        self.time_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_ids.is_empty()
    }

    /// Rows holding step `t`, in ascending agent order.
    pub fn rows_at(&self, t: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = (0..self.len()).filter(|&r| self.time_ids[r] == t).collect();
        rows.sort_by_key(|&r| self.agent_ids[r]);
        rows
    }
}

pub struct AttentionOutput {
    pub out: Var,
    /// Attention weights of every head, `queries x keys`.
    pub weights: Vec<Var>,
}

/// Sinusoidal code of `(agent, time)`: the time axis fills the first half of
/// the embedding and the agent axis the second. Within each half, pair `k`
/// is `(sin(x w_k), cos(x w_k))` with `w_k = 10000^(-2k / half)`.
pub fn positional_encoding(embed_dim: usize, agent: usize, time: usize) -> Vec<f64> {
    let half = embed_dim / 2;
    let mut pe = vec![0.0; embed_dim];
    for (offset, pos) in [(0, time), (half, agent)] {
        for k in 0..half / 2 {
            let w = 10000f64.powf(-((2 * k) as f64) / half as f64);
            let x = pos as f64 * w;
            pe[offset + 2 * k] = x.sin();
            pe[offset + 2 * k + 1] = x.cos();
        }
    }
    pe
}

/// The agent half of [`positional_encoding`]; the time half is zero.
pub(crate) fn agent_encoding(embed_dim: usize, agent: usize) -> Vec<f64> {
    let mut pe = positional_encoding(embed_dim, agent, 0);
    pe[..embed_dim / 2].iter_mut().for_each(|v| *v = 0.0);
    pe
}

/// Linear observation embedding plus the two-axis positional term.
pub fn encode_positions(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    observations: &[[f64; OBS_DIM]],
    agent_ids: &[usize],
    time_ids: &[usize],
) -> Result<TokenBatch, ModelError> {
    let n = observations.len();
    if agent_ids.len() != n || time_ids.len() != n {
        return Err(ModelError::InvalidConfig(format!(
            "{n} observations but {} agent ids and {} time ids",
            agent_ids.len(),
            time_ids.len()
        )));
    }
    let mut pe = Vec::with_capacity(n * cfg.embed_dim);
    for (&a, &t) in agent_ids.iter().zip(time_ids) {
        if a >= cfg.n_agents {
            return Err(ModelError::AgentOutOfRange { id: a, n_agents: cfg.n_agents });
        }
        if t >= cfg.horizon {
            return Err(ModelError::TimeOutOfRange { id: t, horizon: cfg.horizon });
        }
        pe.extend(positional_encoding(cfg.embed_dim, a, t));
    }
    let obs = g.constant(Tensor::from_rows(observations)?)?;
    let emb = g.linear(obs, "enc.obs.w", "enc.obs.b")?;
    let pe = g.constant(Tensor::new(n, cfg.embed_dim, pe)?)?;
    let tokens = g.add(emb, pe)?;
    Ok(TokenBatch { tokens, agent_ids: agent_ids.to_vec(), time_ids: time_ids.to_vec() })
}

/// `softmax(q k^T / sqrt(d_k)) v` for a single head.
pub fn scaled_dot_product(
    g: &mut Graph<'_>,
    q: Var,
    k: Var,
    v: Var,
    mask: &Mask,
) -> Result<(Var, Var), ModelError> {
    let d_k = g.value(q).cols() as f64;
    let scores = g.matmul_bt(q, k)?;
    let scores = g.scale(scores, 1.0 / d_k.sqrt())?;
    let w = g.masked_softmax(scores, mask)?;
    let out = g.matmul(w, v)?;
    Ok((out, w))
}

/// Multi-head attention with parameters `{prefix}.{wq,bq,wk,bk,wv,bv,wo,bo}`.
/// Queries come from `q_in`, keys and values from `kv_in`.
pub fn multi_head_attention(
    g: &mut Graph<'_>,
    prefix: &str,
    n_heads: usize,
    q_in: Var,
    kv_in: Var,
    mask: &Mask,
) -> Result<AttentionOutput, ModelError> {
    let q = g.linear(q_in, &format!("{prefix}.wq"), &format!("{prefix}.bq"))?;
    let k = g.linear(kv_in, &format!("{prefix}.wk"), &format!("{prefix}.bk"))?;
    let v = g.linear(kv_in, &format!("{prefix}.wv"), &format!("{prefix}.bv"))?;
    let d = g.value(q).cols();
    let dh = d / n_heads;
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi)?;
        let kh = g.slice_cols(k, lo, hi)?;
        let vh = g.slice_cols(v, lo, hi)?;
        let (o, w) = scaled_dot_product(g, qh, kh, vh, mask)?;
        heads.push(o);
        weights.push(w);
    }
    let cat = if n_heads == 1 { heads[0] } else { g.concat_cols(&heads)? };
    let out = g.linear(cat, &format!("{prefix}.wo"), &format!("{prefix}.bo"))?;
    Ok(AttentionOutput { out, weights })
}

/// Position-wise two-layer network with a GELU in between.
pub fn feed_forward(g: &mut Graph<'_>, prefix: &str, x: Var) -> Result<Var, ModelError> {
    let h = g.linear(x, &format!("{prefix}.w1"), &format!("{prefix}.b1"))?;
    let h = g.gelu(h)?;
    Ok(g.linear(h, &format!("{prefix}.w2"), &format!("{prefix}.b2"))?)
}

fn add_norm(g: &mut Graph<'_>, prefix: &str, x: Var, y: Var) -> Result<Var, ModelError> {
    let s = g.add(x, y)?;
    let gain = g.param(&format!("{prefix}.g"))?;
    let bias = g.param(&format!("{prefix}.b"))?;
    Ok(g.layer_norm(s, gain, bias)?)
}

/// Mask for queries at `q_times` over keys at `k_times`: key time <= query time.
pub fn attention_mask(q_times: &[usize], k_times: &[usize]) -> Mask {
    Mask::from_fn(q_times.len(), k_times.len(), |i, j| k_times[j] <= q_times[i])
}

pub fn encoder_forward(g: &mut Graph<'_>, cfg: &ModelConfig, batch: &TokenBatch) -> Result<EncoderOutput, ModelError> {
    let mask = attention_mask(&batch.time_ids, &batch.time_ids);
    let mut x = batch.tokens;
    for b in 0..cfg.n_encoder_blocks {
        let p = format!("enc.{b}");
        let a = multi_head_attention(g, &format!("{p}.attn"), cfg.n_heads, x, x, &mask)?;
        x = add_norm(g, &format!("{p}.ln1"), x, a.out)?;
        let f = feed_forward(g, &format!("{p}.ff"), x)?;
        x = add_norm(g, &format!("{p}.ln2"), x, f)?;
    }
    Ok(EncoderOutput { rep: x, agent_ids: batch.agent_ids.clone(), time_ids: batch.time_ids.clone() })
}

/// Values for the encoder rows `query_rows`, one per row. Each query attends
/// to the queries of its own step and, across, to every history row no later
/// than its step.
pub fn value_forward_rows(
    g: &mut Graph<'_>,
    cfg: &ModelConfig,
    enc: &EncoderOutput,
    query_rows: &[usize],
) -> Result<Var, ModelError> {
    let q_times: Vec<usize> = query_rows.iter().map(|&r| enc.time_ids[r]).collect();
    let self_mask = Mask::from_fn(q_times.len(), q_times.len(), |i, j| q_times[i] == q_times[j]);
    let cross_mask = attention_mask(&q_times, &enc.time_ids);
    let mut x = g.select_rows(enc.rep, query_rows)?;
    for b in 0..cfg.n_value_blocks {
        let p = format!("val.{b}");
        let a = multi_head_attention(g, &format!("{p}.self"), cfg.n_heads, x, x, &self_mask)?;
        x = add_norm(g, &format!("{p}.ln1"), x, a.out)?;
        let c = multi_head_attention(g, &format!("{p}.cross"), cfg.n_heads, x, enc.rep, &cross_mask)?;
        x = add_norm(g, &format!("{p}.ln2"), x, c.out)?;
        let f = feed_forward(g, &format!("{p}.ff"), x)?;
        x = add_norm(g, &format!("{p}.ln3"), x, f)?;
    }
    Ok(g.linear(x, "val.head.w", "val.head.b")?)
}

/// The `n_agents x 1` values at step `t`, ascending agent order.
pub fn value_forward(g: &mut Graph<'_>, cfg: &ModelConfig, enc: &EncoderOutput, t: usize) -> Result<Var, ModelError> {
    let rows = enc.rows_at(t);
    if rows.len() != cfg.n_agents {
        return Err(ModelError::AgentCount { expected: cfg.n_agents, got: rows.len() });
    }
    value_forward_rows(g, cfg, enc, &rows)
}

/// Decoder positions, possibly for several steps at once. Position `r`
/// belongs to sequence `group[r]` at index `pos[r]`; it predicts the action of
/// `agent[r]` from the action token `input[r]` (the previous agent's action or
/// the start token) and the encoder row `context` row `r`.
#[derive(Clone, Debug)]
pub struct DecoderInput {
    pub context: Var,
    pub group: Vec<usize>,
    pub pos: Vec<usize>,
    pub agent: Vec<usize>,
    pub input: Vec<usize>,
}

/// Log-probabilities over actions, one row per decoder position.
pub fn decoder_forward(g: &mut Graph<'_>, cfg: &ModelConfig, d: &DecoderInput) -> Result<Var, ModelError> {
    let n = d.group.len();
    let mask = Mask::from_fn(n, n, |i, j| d.group[i] == d.group[j] && d.pos[j] <= d.pos[i]);
    let table = g.param("dec.act_emb")?;
    let emb = g.embedding(table, &d.input)?;
    let mut pe = Vec::with_capacity(n * cfg.embed_dim);
    for &a in &d.agent {
        pe.extend(agent_encoding(cfg.embed_dim, a));
    }
    let pe = g.constant(Tensor::new(n, cfg.embed_dim, pe)?)?;
    let mut x = g.add(emb, pe)?;
    for b in 0..cfg.n_decoder_blocks {
        let p = format!("dec.{b}");
        let a = multi_head_attention(g, &format!("{p}.self"), cfg.n_heads, x, x, &mask)?;
        x = add_norm(g, &format!("{p}.ln1"), x, a.out)?;
        let c = multi_head_attention(g, &format!("{p}.cross"), cfg.n_heads, d.context, x, &mask)?;
        x = add_norm(g, &format!("{p}.ln2"), d.context, c.out)?;
        let f = feed_forward(g, &format!("{p}.ff"), x)?;
        x = add_norm(g, &format!("{p}.ln3"), x, f)?;
    }
    let logits = g.linear(x, "dec.head.w", "dec.head.b")?;
    Ok(g.log_softmax(logits)?)
}
