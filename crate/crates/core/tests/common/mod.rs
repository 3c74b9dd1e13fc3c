//! Test-side reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdmat::stl::{Frame, Predicate, Spec};

/// Entities that random traces place and random atoms refer to.
pub const ENTITIES: [&str; 3] = ["a", "b", "c"];

/// Direct recursion on the textbook robustness definition; no sliding
/// windows, no memoization.
pub fn oracle_rho(spec: &Spec, s: &[Frame], t: usize) -> f64 {
    match spec {
        Spec::True => f64::INFINITY,
        Spec::Atom(p) => oracle_margin(p, &s[t]),
        Spec::Not(c) => -oracle_rho(c, s, t),
        Spec::And(l, r) => oracle_rho(l, s, t).min(oracle_rho(r, s, t)),
        Spec::Or(l, r) => oracle_rho(l, s, t).max(oracle_rho(r, s, t)),
        Spec::Eventually { lo, hi, child } => {
            let mut best = f64::NEG_INFINITY;
            for k in t + lo..=t + hi {
                best = best.max(oracle_rho(child, s, k));
            }
            best
        }
    }
}

/// Boolean satisfaction by the same recursion.
pub fn oracle_sat(spec: &Spec, s: &[Frame], t: usize) -> bool {
    match spec {
        Spec::True => true,
        Spec::Atom(p) => oracle_margin(p, &s[t]) > 0.0,
        Spec::Not(c) => !oracle_sat(c, s, t),
        Spec::And(l, r) => oracle_sat(l, s, t) && oracle_sat(r, s, t),
        Spec::Or(l, r) => oracle_sat(l, s, t) || oracle_sat(r, s, t),
        Spec::Eventually { lo, hi, child } => (t + lo..=t + hi).any(|k| oracle_sat(child, s, k)),
    }
}

fn oracle_margin(p: &Predicate, f: &Frame) -> f64 {
    match p.kind() {
        tdmat::stl::PredicateKind::Distance { a, b, threshold } => {
            let pa = f.entities[a];
            let pb = f.entities[b];
            threshold - ((pa[0] - pb[0]).powi(2) + (pa[1] - pb[1]).powi(2)).sqrt()
        }
        tdmat::stl::PredicateKind::Custom(_) => p.margin(f).unwrap(),
    }
}

/// Random formula of depth at most `depth` with windows up to `max_hi`.
pub fn random_spec(rng: &mut ChaCha8Rng, depth: usize, max_hi: usize) -> Spec {
    if depth <= 1 || rng.random_bool(0.25) {
        return if rng.random_bool(0.08) { Spec::True } else { random_atom(rng) };
    }
    let sub = |rng: &mut ChaCha8Rng| random_spec(rng, depth - 1, max_hi);
    match rng.random_range(0..4) {
        0 => Spec::not(sub(rng)),
        1 => Spec::and(sub(rng), sub(rng)),
        2 => Spec::or(sub(rng), sub(rng)),
        _ => {
            let lo = rng.random_range(0..=max_hi);
            let hi = rng.random_range(lo..=max_hi);
            Spec::eventually(lo, hi, sub(rng)).unwrap()
        }
    }
}

fn random_atom(rng: &mut ChaCha8Rng) -> Spec {
    let i = rng.random_range(0..ENTITIES.len());
    let j = (i + rng.random_range(1..ENTITIES.len())) % ENTITIES.len();
    let r = rng.random_range(1..=8) as f64 * 0.125;
    Spec::atom(Predicate::distance(ENTITIES[i], ENTITIES[j], r))
}

/// Random walk of the named entities inside `[-1, 1]^2`.
pub fn random_trace(rng: &mut ChaCha8Rng, len: usize) -> Vec<Frame> {
    let mut pos: Vec<[f64; 2]> = ENTITIES.iter().map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
    (0..len)
        .map(|_| {
            let mut f = Frame::new();
            for (name, p) in ENTITIES.iter().zip(pos.iter_mut()) {
                f = f.with(*name, *p);
                p[0] = (p[0] + rng.random_range(-0.3..0.3)).clamp(-1.0, 1.0);
                p[1] = (p[1] + rng.random_range(-0.3..0.3)).clamp(-1.0, 1.0);
            }
            f
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// GAE as the explicit double sum `sum_l (gamma lambda)^l delta_{t+l}`.
pub fn gae_double_sum(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * values[t + 1] - values[t]).collect();
    (0..n).map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum()).collect()
}
