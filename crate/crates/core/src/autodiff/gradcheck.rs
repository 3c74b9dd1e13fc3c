use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, TensorError, Var};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub epsilon: f64,
    /// Coordinates to probe; all of them when the model is smaller.
    pub max_coords: usize,
    /// Denominator floor of the relative error, so coordinates whose true
    /// gradient is ~0 are judged by absolute error instead.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { epsilon: 1e-5, max_coords: 256, floor: 1e-7, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: (String, usize),
    pub checked: usize,
    /// Coordinates whose analytic gradient is nonzero.
    pub nonzero: usize,
}

/// Compares reverse-mode gradients of `loss_fn` against central differences
/// `(L(p + e) - L(p - e)) / 2e`, one coordinate at a time. The relative error
/// of a coordinate is `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F, E>(params: &ParamStore, loss_fn: F, opts: &GradCheckOptions) -> Result<GradCheckReport, E>
where
    F: Fn(&mut Graph<'_>) -> Result<Var, E>,
    E: From<TensorError>,
{
    let analytic = {
        let mut g = Graph::new(params);
        let loss = loss_fn(&mut g)?;
        g.backward(loss)?
    };
    let coords: Vec<(String, usize)> = params
        .iter()
        .flat_map(|(name, t)| (0..t.len()).map(move |k| (name.clone(), k)))
        .collect();
    let chosen: Vec<(String, usize)> = if coords.len() <= opts.max_coords {
        coords
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut picked = std::collections::BTreeSet::new();
        while picked.len() < opts.max_coords {
            picked.insert(rng.random_range(0..coords.len()));
        }
        picked.into_iter().map(|i| coords[i].clone()).collect()
    };

    let mut probe = params.clone();
    let eval = |p: &ParamStore| -> Result<f64, E> {
        let mut g = Graph::new(p);
        let loss = loss_fn(&mut g)?;
        let v = g.value(loss).item();
        if !v.is_finite() {
            return Err(TensorError::NonFinite("grad_check probe").into());
        }
        Ok(v)
    };
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (String::new(), 0), checked: 0, nonzero: 0 };
    for (name, k) in chosen {
        let orig = params.get(&name).expect("coordinate from params").data()[k];
        probe.get_mut(&name).unwrap().data_mut()[k] = orig + opts.epsilon;
        let up = eval(&probe)?;
        probe.get_mut(&name).unwrap().data_mut()[k] = orig - opts.epsilon;
        let down = eval(&probe)?;
        probe.get_mut(&name).unwrap().data_mut()[k] = orig;
        let numeric = (up - down) / (2.0 * opts.epsilon);
        let a = analytic[&name].data()[k];
        if a != 0.0 {
            report.nonzero += 1;
        }
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        if rel > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = rel;
            report.worst = (name.clone(), k);
        }
        report.checked += 1;
    }
    Ok(report)
}
