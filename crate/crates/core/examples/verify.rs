//! Statistical verification: estimate how often the uniform random policy
//! satisfies the reach task, and show how the interval narrows with n.

use tdmat::game::{build_reach_task, ActionMode, Dynamics, GameSpec, LandmarkWorld, TaskParams, UniformRandomPolicy};
use tdmat::statverify::{estimate_satisfaction, wald_half_width, z_value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = LandmarkWorld::new(GameSpec { n_agents: 1, gamma: 0.99, horizon: 10 }, Dynamics::default())?;
    let specs = build_reach_task(1, &TaskParams { window: 10, radius: 0.3 });
    for n in [100, 400, 1600] {
        let (est, _) = estimate_satisfaction(&world, &specs, &UniformRandomPolicy, n, 0.90, 1, ActionMode::Sample, true)?;
        println!(
            "n = {n:>4}: p = {:.3}, 90% interval [{:.3}, {:.3}]",
            est.p_hat, est.interval.0, est.interval.1
        );
    }
    let z = z_value(0.90)?;
    println!("half-width at p = 0.688, n = 2560: {:.4}", wald_half_width(0.688, 2560, z));
    Ok(())
}
