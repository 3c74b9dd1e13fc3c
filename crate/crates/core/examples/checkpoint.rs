//! Save a policy to the binary checkpoint format and load it back.

use tdmat::autodiff::ParamStore;
use tdmat::model::{ModelConfig, TdmatPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = ModelConfig { embed_dim: 16, n_heads: 2, ..ModelConfig::default() };
    let policy = TdmatPolicy::new(cfg.clone(), 42)?;
    let mut bytes = Vec::new();
    policy.params().write_checkpoint("example metadata", &mut bytes)?;
    println!("checkpoint: {} bytes for {} scalars", bytes.len(), policy.params().scalar_count());

    let (params, meta) = ParamStore::read_checkpoint(bytes.as_slice())?;
    let restored = TdmatPolicy::from_params(cfg, params)?;
    println!("metadata {meta:?}, identical: {}", restored == policy);
    Ok(())
}
