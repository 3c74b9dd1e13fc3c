//! Statistical verification: treat each rollout as a Bernoulli trial that
//! succeeds when the trajectory satisfies the joint formula, and report the
//! point estimate with a Wald confidence interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{episode_robustness, episode_seed, run_episode, ActionMode, JointPolicy, LandmarkWorld, RewardMode};
use crate::stl::Spec;

/// Largest confidence level accepted by [`z_value`].
pub const MAX_CONFIDENCE: f64 = 0.9999;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("confidence {0} must lie in (0, {MAX_CONFIDENCE}]")]
    Confidence(f64),
    #[error("need at least one trial")]
    NoTrials,
    #[error("{successes} successes out of {trials} trials")]
    Count { successes: u64, trials: u64 },
}

/// Standard normal quantile by Acklam's rational approximation (relative
/// error below 1.2e-9 over the open unit interval).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const LOW: f64 = 0.024_25;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Two-sided critical value `z_{alpha/2}` for `alpha = 1 - confidence`.
pub fn z_value(confidence: f64) -> Result<f64, VerifyError> {
    if !(confidence > 0.0 && confidence <= MAX_CONFIDENCE) {
        return Err(VerifyError::Confidence(confidence));
    }
    Ok(normal_quantile(1.0 - (1.0 - confidence) / 2.0))
}

/// `z * sqrt(p (1 - p) / n)`.
pub fn wald_half_width(p_hat: f64, n: u64, z: f64) -> f64 {
    z * (p_hat * (1.0 - p_hat) / n as f64).sqrt()
}

/// Wald interval `p_hat +- z sqrt(p_hat (1 - p_hat) / n)` clamped to `[0, 1]`.
pub fn wald_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64), VerifyError> {
    Ok(BernoulliEstimate::new(successes, trials, confidence)?.interval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BernoulliEstimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub confidence: f64,
    pub z: f64,
    pub interval: (f64, f64),
}

impl BernoulliEstimate {
    pub fn new(successes: u64, trials: u64, confidence: f64) -> Result<Self, VerifyError> {
        if trials == 0 {
            return Err(VerifyError::NoTrials);
        }
        if successes > trials {
            return Err(VerifyError::Count { successes, trials });
        }
        let z = z_value(confidence)?;
        let p_hat = successes as f64 / trials as f64;
        let h = wald_half_width(p_hat, trials, z);
        let interval = ((p_hat - h).max(0.0), (p_hat + h).min(1.0));
        Ok(BernoulliEstimate { successes, trials, p_hat, confidence, z, interval })
    }

    pub fn half_width(&self) -> f64 {
        wald_half_width(self.p_hat, self.trials, self.z)
    }
}

/// Outcome of one verification episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub seed: u64,
    pub robustness: f64,
    pub satisfied: bool,
}

/// Rolls out `n` episodes with seeds `episode_seed(seed, k)` and counts those
/// whose joint robustness is strictly positive.
#[allow(clippy::too_many_arguments)]
pub fn estimate_satisfaction(
    world: &LandmarkWorld,
    specs: &[Spec],
    policy: &dyn JointPolicy,
    n: u64,
    confidence: f64,
    seed: u64,
    mode: ActionMode,
    parallel: bool,
) -> Result<(BernoulliEstimate, Vec<EpisodeOutcome>), crate::Error> {
    if n == 0 {
        return Err(VerifyError::NoTrials.into());
    }
    z_value(confidence)?;
    let run = |k: u64| -> Result<EpisodeOutcome, crate::Error> {
        let s = episode_seed(seed, k);
        let wrap = |e| crate::Error::Episode { episode: k as usize, source: Box::new(e) };
        let (rec, _) = run_episode(world, specs, policy, s, mode, RewardMode::Robustness).map_err(wrap)?;
        let robustness = episode_robustness(&rec.trajectory, specs).map_err(wrap)?;
        Ok(EpisodeOutcome { seed: s, robustness, satisfied: robustness > 0.0 })
    };
    let outcomes = if parallel {
        (0..n).into_par_iter().map(run).collect::<Result<Vec<_>, _>>()?
    } else {
        (0..n).map(run).collect::<Result<Vec<_>, _>>()?
    };
    let x = outcomes.iter().filter(|o| o.satisfied).count() as u64;
    Ok((BernoulliEstimate::new(x, n, confidence)?, outcomes))
}

/// The verification summary written as JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub confidence: f64,
    pub z: f64,
    pub interval: [f64; 2],
    pub half_width: f64,
    pub mode: ActionMode,
    /// Episode `k` uses `episode_seed(seed, k)`.
    pub seed: u64,
    /// SHA-256 of the checkpoint file, hex.
    pub checkpoint_id: String,
    pub mean_robustness: f64,
}

impl VerificationReport {
    pub fn new(
        est: &BernoulliEstimate,
        outcomes: &[EpisodeOutcome],
        mode: ActionMode,
        seed: u64,
        checkpoint_id: String,
    ) -> Self {
        let mean_robustness = outcomes.iter().map(|o| o.robustness).sum::<f64>() / outcomes.len().max(1) as f64;
        VerificationReport {
            successes: est.successes,
            trials: est.trials,
            p_hat: est.p_hat,
            confidence: est.confidence,
            z: est.z,
            interval: [est.interval.0, est.interval.1],
            half_width: est.half_width(),
            mode,
            seed,
            checkpoint_id,
            mean_robustness,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn critical_values() {
        assert!((z_value(0.90).unwrap() - 1.644_853_626_951_472).abs() < 1e-8);
        assert!((z_value(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((z_value(0.99).unwrap() - 2.575_829_303_548_901).abs() < 1e-8);
        assert!(z_value(0.99995).is_err());
        assert!(z_value(0.0).is_err());
        assert!(z_value(f64::NAN).is_err());
    }

    #[test]
    fn quantile_is_odd_and_covers_tails() {
        for p in [1e-10, 0.001, 0.02, 0.3] {
            assert!((normal_quantile(p) + normal_quantile(1.0 - p)).abs() < 1e-6 * normal_quantile(p).abs().max(1.0));
        }
        assert_eq!(normal_quantile(0.5), 0.0);
    }

    #[test]
    fn interval_examples() {
        let e = BernoulliEstimate::new(50, 100, 0.90).unwrap();
        assert!((e.half_width() - 1.644_853_626_951_472 * 0.05).abs() < 1e-9);
        let zero = BernoulliEstimate::new(0, 10, 0.90).unwrap();
        assert_eq!(zero.interval, (0.0, 0.0));
        let one = BernoulliEstimate::new(1, 1, 0.90).unwrap();
        assert_eq!(one.interval, (1.0, 1.0));
        assert!(BernoulliEstimate::new(3, 2, 0.9).is_err());
        assert!(wald_interval(0, 0, 0.9).is_err());
        let clamped = wald_interval(1, 40, 0.99).unwrap();
        assert_eq!(clamped.0, 0.0);
    }

    #[test]
    fn half_width_shrinks_with_n() {
        let mut prev = f64::INFINITY;
        for n in [10u64, 100, 1000, 10000] {
            let h = wald_half_width(0.3, n, 1.645);
            assert!(h < prev);
            prev = h;
        }
    }
}
