//! Boolean and quantitative semantics over discrete-time traces.
//!
//! Both semantics are computed bottom-up as whole signals (one value per time
//! index) rather than by recursing per time point. Bounded eventually uses a
//! monotone-deque sliding maximum, so a formula is evaluated in time linear in
//! the trace length per operator.

use std::collections::VecDeque;

use super::ast::Spec;
use super::trace::Frame;
use super::StlError;

/// Robustness returned by the prefix monitor when a clipped window is empty.
pub const DEFAULT_FLOOR: f64 = -10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
enum Windows {
    /// Windows must lie inside the trace; the signal shrinks accordingly.
    Strict,
    /// Windows are clipped to the trace end; empty windows yield `floor`.
    Clipped { floor: f64 },
}

fn sliding_max(child: &[f64], lo: usize, hi: usize, out_len: usize, floor: f64) -> Vec<f64> {
    let n = child.len();
    let mut out = Vec::with_capacity(out_len);
    let mut dq: VecDeque<usize> = VecDeque::new();
    let mut next = 0usize;
    for t in 0..out_len {
        let start = t + lo;
        let end = (t + hi).min(n.saturating_sub(1));
        if start >= n {
            out.push(floor);
            continue;
        }
        while next <= end {
            while dq.back().is_some_and(|&j| child[j] <= child[next]) {
                dq.pop_back();
            }
            dq.push_back(next);
            next += 1;
        }
        while dq.front().is_some_and(|&j| j < start) {
            dq.pop_front();
        }
        out.push(child[*dq.front().expect("window is nonempty")]);
    }
    out
}

fn robustness_signal(spec: &Spec, frames: &[Frame], w: Windows) -> Result<Vec<f64>, StlError> {
    Ok(match spec {
        Spec::True => vec![f64::INFINITY; frames.len()],
        Spec::Atom(p) => frames.iter().map(|f| p.margin(f)).collect::<Result<_, _>>()?,
        Spec::Not(c) => robustness_signal(c, frames, w)?.into_iter().map(|v| -v).collect(),
        Spec::And(l, r) => {
            let (a, b) = (robustness_signal(l, frames, w)?, robustness_signal(r, frames, w)?);
            a.iter().zip(&b).map(|(x, y)| x.min(*y)).collect()
        }
        Spec::Or(l, r) => {
            let (a, b) = (robustness_signal(l, frames, w)?, robustness_signal(r, frames, w)?);
            a.iter().zip(&b).map(|(x, y)| x.max(*y)).collect()
        }
        Spec::Eventually { lo, hi, child } => {
            let c = robustness_signal(child, frames, w)?;
            match w {
                Windows::Strict => {
                    let len = c.len().saturating_sub(*hi);
                    sliding_max(&c, *lo, *hi, len, f64::NEG_INFINITY)
                }
                Windows::Clipped { floor } => sliding_max(&c, *lo, *hi, c.len(), floor),
            }
        }
    })
}

fn boolean_signal(spec: &Spec, frames: &[Frame]) -> Result<Vec<bool>, StlError> {
    Ok(match spec {
        Spec::True => vec![true; frames.len()],
        Spec::Atom(p) => frames.iter().map(|f| p.margin(f).map(|m| m > 0.0)).collect::<Result<_, _>>()?,
        Spec::Not(c) => boolean_signal(c, frames)?.into_iter().map(|v| !v).collect(),
        Spec::And(l, r) => {
            let (a, b) = (boolean_signal(l, frames)?, boolean_signal(r, frames)?);
            a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
        }
        Spec::Or(l, r) => {
            let (a, b) = (boolean_signal(l, frames)?, boolean_signal(r, frames)?);
            a.iter().zip(&b).map(|(x, y)| *x || *y).collect()
        }
        Spec::Eventually { lo, hi, child } => {
            let c = boolean_signal(child, frames)?;
            // Count of true values in c[..k], so a window query is O(1).
            let mut ones = vec![0usize; c.len() + 1];
            for (k, v) in c.iter().enumerate() {
                ones[k + 1] = ones[k] + *v as usize;
            }
            let len = c.len().saturating_sub(*hi);
            (0..len).map(|t| ones[t + hi + 1] - ones[t + lo] > 0).collect()
        }
    })
}

fn check_time(spec: &Spec, frames: &[Frame], t: usize) -> Result<(), StlError> {
    if t >= frames.len() {
        return Err(StlError::TimeOutOfRange { t, len: frames.len() });
    }
    let need = t + spec.horizon();
    if need >= frames.len() {
        return Err(StlError::WindowPastEnd { t, needed: need, len: frames.len() });
    }
    Ok(())
}

/// Boolean satisfaction `(s, t) |= spec`. Every window, shifted by `t`,
/// must fit inside the trace.
pub fn evaluate_boolean(spec: &Spec, frames: &[Frame], t: usize) -> Result<bool, StlError> {
    check_time(spec, frames, t)?;
    Ok(boolean_signal(spec, frames)?[t])
}

/// Quantitative robustness `rho(s, spec, t)`, same domain as [`evaluate_boolean`].
pub fn robustness(spec: &Spec, frames: &[Frame], t: usize) -> Result<f64, StlError> {
    check_time(spec, frames, t)?;
    Ok(robustness_signal(spec, frames, Windows::Strict)?[t])
}

/// Robustness of the whole strict-mode signal, one value per admissible `t`.
pub fn robustness_trace(spec: &Spec, frames: &[Frame]) -> Result<Vec<f64>, StlError> {
    robustness_signal(spec, frames, Windows::Strict)
}

/// Robustness at `t = 0` of a partial trace with every window clipped to the
/// observed steps. Empty windows evaluate to `floor`.
pub fn prefix_robustness_with_floor(
    spec: &Spec,
    prefix: &[Frame],
    floor: f64,
) -> Result<f64, StlError> {
    if prefix.is_empty() {
        return Err(StlError::EmptyPrefix);
    }
    Ok(robustness_signal(spec, prefix, Windows::Clipped { floor })?[0])
}

/// [`prefix_robustness_with_floor`] with [`DEFAULT_FLOOR`].
pub fn prefix_robustness(spec: &Spec, prefix: &[Frame]) -> Result<f64, StlError> {
    prefix_robustness_with_floor(spec, prefix, DEFAULT_FLOOR)
}
