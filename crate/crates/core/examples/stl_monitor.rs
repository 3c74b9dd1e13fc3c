//! Parse a formula, then score a hand-written trace with the strict monitor,
//! the boolean semantics and the clipped prefix monitor.

use tdmat::stl::{
    evaluate_boolean, parse_spec, prefix_robustness, robustness, robustness_trace, Frame, Predicate,
    PredicateRegistry,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // named atoms can be registered next to the built-in distance atoms
    let mut reg = PredicateRegistry::new();
    reg.register(Predicate::custom("left_half", |f: &Frame| Ok(-f.position("robot")?[0])));
    let phi = parse_spec("F[0,3] dist(robot, goal) < 0.5 and not left_half", &reg)?;
    println!("formula: {phi}  (horizon {})", phi.horizon());

    let trace: Vec<Frame> = [0.1, 0.4, 0.7, 0.9, 1.0, 1.0]
        .iter()
        .map(|&x| Frame::new().with("robot", [x, 0.0]).with("goal", [1.0, 0.0]))
        .collect();

    println!("rho(s, 0)         = {:+.3}", robustness(&phi, &trace, 0)?);
    println!("satisfied at 0    = {}", evaluate_boolean(&phi, &trace, 0)?);
    println!("rho over time     = {:.3?}", robustness_trace(&phi, &trace)?);
    for t in 0..trace.len() {
        println!("prefix s_0..s_{t}   = {:+.3}", prefix_robustness(&phi, &trace[..=t])?);
    }
    Ok(())
}
