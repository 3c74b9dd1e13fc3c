//! Train a small policy on the two-agent reach task and print the metrics
//! of every tenth iteration. Pass an iteration count to run longer.

use tdmat::game::{build_reach_task, Dynamics, GameSpec, LandmarkWorld, RewardMode, TaskParams};
use tdmat::model::{EncoderPass, ModelConfig, TdmatPolicy};
use tdmat::trainer::{IterationMetrics, OptimizerKind, TrainConfig, Trainer};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let iterations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(40);
    let (n, horizon) = (2, 10);
    let world = LandmarkWorld::new(GameSpec { n_agents: n, gamma: 0.99, horizon }, Dynamics::default())?;
    let specs = build_reach_task(n, &TaskParams { window: horizon, radius: 0.3 });
    let model = ModelConfig {
        embed_dim: 32,
        n_heads: 2,
        n_encoder_blocks: 1,
        n_value_blocks: 1,
        n_decoder_blocks: 1,
        n_agents: n,
        horizon,
        ..ModelConfig::default()
    };
    let cfg = TrainConfig {
        iterations,
        rollouts: 16,
        optimizer: OptimizerKind::Adam,
        reward_mode: RewardMode::Increment,
        encoder_pass: EncoderPass::Shared,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut trainer = Trainer::new(&world, specs, TdmatPolicy::new(model, cfg.seed)?, cfg)?;
    println!("{}", IterationMetrics::CSV_HEADER);
    for i in 0..iterations {
        let m = trainer.step()?;
        if i % 10 == 0 || i + 1 == iterations {
            println!("{}", m.csv_row());
        }
    }
    Ok(())
}
