//! Query a freshly initialized transformer policy: per-agent values, the
//! autoregressive action distributions and a sampled joint action.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tdmat::game::{ActionMode, Dynamics, GameSpec, LandmarkWorld};
use tdmat::model::{ModelConfig, TdmatPolicy};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = LandmarkWorld::new(GameSpec::default(), Dynamics::default())?;
    let policy = TdmatPolicy::new(ModelConfig::default(), 0)?;
    println!(
        "{} tensors, {} scalars ({} encoder/value, {} decoder)",
        policy.params().len(),
        policy.params().scalar_count(),
        policy.phi_names().len(),
        policy.theta_names().len()
    );

    let mut state = world.reset(3);
    let mut history = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in 0..3 {
        history.push(world.observe(&state));
        let decision = policy.sample_joint_action(&history, &mut rng, ActionMode::Sample)?;
        println!("t={t} values {:+.4?} actions {:?}", decision.values, decision.actions);
        // agent 1's distribution given agent 0's choice
        let p = policy.action_probs(&history, &decision.actions[..1])?;
        println!("     agent 1 | agent 0 = {}: {:.3?}", decision.actions[0], p);
        state = world.step(&state, &decision.actions)?;
    }
    Ok(())
}
