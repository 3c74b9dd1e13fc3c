use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Gradient descent with heavy-ball momentum.
    #[default]
    Momentum,
    Adam,
}

/// First-order optimizer over a fixed subset of parameters.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    names: Vec<String>,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
    steps: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, names: Vec<String>) -> Self {
        Optimizer { kind, lr, momentum, names, first: BTreeMap::new(), second: BTreeMap::new(), steps: 0 }
    }

    /// Applies one update to the parameters this optimizer owns. Gradients
    /// of other parameters are ignored.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.steps += 1;
        for name in &self.names {
            let (Some(p), Some(g)) = (params.get_mut(name), grads.get(name)) else { continue };
            let m = self.first.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            match self.kind {
                OptimizerKind::Momentum => {
                    for ((w, v), gv) in p.data_mut().iter_mut().zip(m.data_mut()).zip(g.data()) {
                        *v = self.momentum * *v + gv;
                        *w -= self.lr * *v;
                    }
                }
                OptimizerKind::Adam => {
                    let s = self.second.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
                    let c1 = 1.0 - BETA1.powi(self.steps);
                    let c2 = 1.0 - BETA2.powi(self.steps);
                    for (((w, m1), m2), gv) in p.data_mut().iter_mut().zip(m.data_mut()).zip(s.data_mut()).zip(g.data()) {
                        *m1 = BETA1 * *m1 + (1.0 - BETA1) * gv;
                        *m2 = BETA2 * *m2 + (1.0 - BETA2) * gv * gv;
                        *w -= self.lr * (*m1 / c1) / ((*m2 / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}
