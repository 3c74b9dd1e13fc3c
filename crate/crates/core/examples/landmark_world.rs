//! Roll out the landmark world by hand and score the trajectory against the
//! two built-in tasks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdmat::game::{build_task_1, build_task_2, episode_robustness, Dynamics, GameSpec, LandmarkWorld, TaskParams};
use tdmat::stl::Trajectory;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = LandmarkWorld::new(GameSpec::default(), Dynamics::default())?;
    let mut state = world.reset(7);
    println!("agents    {:.2?}", state.agent_pos);
    println!("landmarks {:.2?}", state.landmark_pos);
    let obs = world.observe(&state);
    println!("agent 0 observes {:.2?}", obs.agent(0));

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut trajectory = Trajectory::new();
    trajectory.push(state.frame());
    while !world.is_done(&state) {
        let actions: Vec<usize> = (0..world.spec().n_agents).map(|_| rng.random_range(0..5)).collect();
        state = world.step(&state, &actions)?;
        trajectory.push(state.frame());
    }
    println!("after {} steps agents are at {:.2?}", state.step, state.agent_pos);

    let p = TaskParams::default();
    println!("task 1 robustness {:+.3}", episode_robustness(&trajectory, &build_task_1(3, &p))?);
    println!("task 2 robustness {:+.3}", episode_robustness(&trajectory, &build_task_2(3, &p))?);
    Ok(())
}
