use serde::{Deserialize, Serialize};

use super::WorldState;
use crate::stl::{conjoin, Predicate, Spec};

/// Window and radius shared by the built-in landmark tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskParams {
    /// Upper bound `b` of every `F[0,b]`.
    pub window: usize,
    /// Agent must be strictly closer than this to count as visiting.
    pub radius: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams { window: 25, radius: 0.3 }
    }
}

/// `dist(agent_i, landmark_j) < radius`.
pub fn dist_atom(agent: usize, landmark: usize, radius: f64) -> Spec {
    Spec::Atom(Predicate::distance(
        WorldState::agent_name(agent),
        WorldState::landmark_name(landmark),
        radius,
    ))
}

fn eventually(window: usize, child: Spec) -> Spec {
    Spec::Eventually { lo: 0, hi: window, child: Box::new(child) }
}

/// Each agent `k` visits landmark `k` and landmark `(k + 1) mod n`.
pub fn build_task_1(n_agents: usize, p: &TaskParams) -> Vec<Spec> {
    (0..n_agents)
        .map(|k| {
            let next = (k + 1) % n_agents;
            Spec::and(
                eventually(p.window, dist_atom(k, k, p.radius)),
                eventually(p.window, dist_atom(k, next, p.radius)),
            )
        })
        .collect()
}

/// All agents meet at landmark 0 at a common step, and agent `i` visits
/// landmark `i` at some step.
pub fn build_task_2(n_agents: usize, p: &TaskParams) -> Vec<Spec> {
    (0..n_agents)
        .map(|i| {
            let meet = conjoin((0..n_agents).map(|k| dist_atom(k, 0, p.radius)))
                .expect("at least one agent");
            Spec::and(eventually(p.window, meet), eventually(p.window, dist_atom(i, i, p.radius)))
        })
        .collect()
}

/// Each agent `i` reaches landmark `i` at some step.
pub fn build_reach_task(n_agents: usize, p: &TaskParams) -> Vec<Spec> {
    (0..n_agents).map(|i| eventually(p.window, dist_atom(i, i, p.radius))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{robustness, Frame, PredicateKind};

    fn landmarks_of(spec: &Spec, out: &mut Vec<(String, String)>) {
        match spec {
            Spec::Atom(p) => {
                if let PredicateKind::Distance { a, b, .. } = p.kind() {
                    out.push((a.clone(), b.clone()));
                }
            }
            Spec::Not(c) | Spec::Eventually { child: c, .. } => landmarks_of(c, out),
            Spec::And(l, r) | Spec::Or(l, r) => {
                landmarks_of(l, out);
                landmarks_of(r, out);
            }
            Spec::True => {}
        }
    }

    fn atoms(spec: &Spec) -> Vec<(String, String)> {
        let mut v = Vec::new();
        landmarks_of(spec, &mut v);
        v
    }

    fn pair(a: usize, l: usize) -> (String, String) {
        (format!("agent{a}"), format!("landmark{l}"))
    }

    #[test]
    fn task1_targets_own_and_next_landmark() {
        let specs = build_task_1(3, &TaskParams::default());
        assert_eq!(atoms(&specs[0]), vec![pair(0, 0), pair(0, 1)]);
        assert_eq!(atoms(&specs[2]), vec![pair(2, 2), pair(2, 0)]);
        let single = build_task_1(1, &TaskParams::default());
        assert_eq!(atoms(&single[0]), vec![pair(0, 0), pair(0, 0)]);
        let Spec::And(l, _) = &specs[1] else { panic!() };
        assert!(matches!(**l, Spec::Eventually { lo: 0, hi: 25, .. }));
    }

    #[test]
    fn task2_shares_rendezvous_conjunct() {
        let specs = build_task_2(3, &TaskParams::default());
        for (i, s) in specs.iter().enumerate() {
            assert_eq!(atoms(s), vec![pair(0, 0), pair(1, 0), pair(2, 0), pair(i, i)]);
        }
        let single = build_task_2(1, &TaskParams::default());
        assert_eq!(atoms(&single[0]), vec![pair(0, 0), pair(0, 0)]);
    }

    fn frames(steps: &[Vec<[f64; 2]>], landmarks: &[[f64; 2]], len: usize) -> Vec<Frame> {
        (0..len)
            .map(|t| {
                let mut f = Frame::new();
                let agents = &steps[t.min(steps.len() - 1)];
                for (i, p) in agents.iter().enumerate() {
                    f.entities.insert(format!("agent{i}"), *p);
                }
                for (j, p) in landmarks.iter().enumerate() {
                    f.entities.insert(format!("landmark{j}"), *p);
                }
                f
            })
            .collect()
    }

    #[test]
    fn task1_trace_touching_both_landmarks_is_positive() {
        let lm = [[-0.5, 0.0], [0.5, 0.0], [0.0, 0.8]];
        let far = [0.0, -0.9];
        let mut steps = vec![vec![far, far, far]; 26];
        steps[4][0] = [-0.45, 0.0];
        steps[20][0] = [0.52, 0.05];
        let tr = frames(&steps, &lm, 26);
        let specs = build_task_1(3, &TaskParams::default());
        let rho = robustness(&specs[0], &tr, 0).unwrap();
        assert!((rho - (0.3 - (0.02f64 * 0.02 + 0.05 * 0.05).sqrt())).abs() < 1e-12);
        assert!(robustness(&specs[1], &tr, 0).unwrap() < 0.0);
    }

    #[test]
    fn task2_trace_with_rendezvous_is_positive_for_all() {
        let lm = [[0.0, 0.0], [0.6, 0.6], [-0.6, 0.6]];
        let start = vec![[0.0, -0.8], [0.5, -0.8], [-0.5, -0.8]];
        let mut steps = vec![start; 26];
        steps[5] = vec![[0.05, 0.0], [0.0, 0.1], [-0.1, 0.0]];
        steps[12] = vec![[0.0, 0.05], [0.6, 0.55], [-0.65, 0.6]];
        let tr = frames(&steps, &lm, 26);
        for s in build_task_2(3, &TaskParams::default()) {
            assert!(robustness(&s, &tr, 0).unwrap() > 0.0);
        }
    }
}
