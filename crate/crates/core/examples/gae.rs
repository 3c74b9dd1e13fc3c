//! Generalized advantage estimates for a short reward sequence at a few
//! settings of lambda.

use tdmat::trainer::{compute_gae, normalize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let rewards = [-0.8, -0.6, -0.3, 0.1, 0.2];
    // one value per step plus the terminal bootstrap
    let values = [-1.5, -1.0, -0.5, 0.0, 0.1, 0.0];
    for lambda in [0.0, 0.5, 0.95, 1.0] {
        let adv = compute_gae(&rewards, &values, 0.99, lambda)?;
        println!("lambda {lambda:<4} {adv:+.4?}");
    }
    let mut adv = compute_gae(&rewards, &values, 0.99, 0.95)?;
    normalize(&mut adv);
    println!("normalized  {adv:+.4?}");
    Ok(())
}
