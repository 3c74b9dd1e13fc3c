//! Transformer policy over the joint observation history.
//!
//! Tokens are indexed time-major, `t * n_agents + i`. The encoder is causal
//! in time only: a token sees every agent at its own and earlier steps. The
//! value decoder produces one value per agent. The action decoder runs
//! autoregressively over agents in a fixed order.

mod layers;
mod policy;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::TensorError;

pub use layers::{
    attention_mask, decoder_forward, encode_positions, encoder_forward, feed_forward,
    multi_head_attention, positional_encoding, scaled_dot_product, value_forward,
    value_forward_rows, AttentionOutput, DecoderInput, EncoderOutput, TokenBatch,
};
pub use policy::{decode_actions, episode_forward, Context, EncoderPass, EpisodeOutputs, TdmatPolicy};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("agent id {id} out of range for {n_agents} agents")]
    AgentOutOfRange { id: usize, n_agents: usize },
    #[error("time id {id} out of range for horizon {horizon}")]
    TimeOutOfRange { id: usize, horizon: usize },
    #[error("history is empty")]
    EmptyHistory,
    #[error("expected {expected} agents per step, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("action {action} of agent {agent} is not in [0, {n_actions})")]
    InvalidAction { agent: usize, action: usize, n_actions: usize },
    #[error("parameter '{name}': {msg}")]
    Params { name: String, msg: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_heads: usize,
    pub n_encoder_blocks: usize,
    pub n_value_blocks: usize,
    pub n_decoder_blocks: usize,
    pub n_actions: usize,
    pub n_agents: usize,
    /// Largest admissible time id plus one.
    pub horizon: usize,
    /// Decode agents in a per-episode random order instead of ascending ids.
    pub shuffle_agent_order: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            n_heads: 4,
            n_encoder_blocks: 2,
            n_value_blocks: 1,
            n_decoder_blocks: 2,
            n_actions: crate::game::N_ACTIONS,
            n_agents: 3,
            horizon: 25,
            shuffle_agent_order: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.embed_dim == 0 || !self.embed_dim.is_multiple_of(4) {
            return bad(format!("embed_dim {} must be a positive multiple of 4", self.embed_dim));
        }
        if self.n_heads == 0 || !self.embed_dim.is_multiple_of(self.n_heads) {
            return bad(format!("embed_dim {} is not divisible by n_heads {}", self.embed_dim, self.n_heads));
        }
        for (name, v) in [
            ("n_encoder_blocks", self.n_encoder_blocks),
            ("n_value_blocks", self.n_value_blocks),
            ("n_decoder_blocks", self.n_decoder_blocks),
            ("n_agents", self.n_agents),
            ("horizon", self.horizon),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.n_actions != crate::game::N_ACTIONS {
            return bad(format!("n_actions must be {}", crate::game::N_ACTIONS));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }
}
