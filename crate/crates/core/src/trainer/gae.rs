use super::TrainError;

/// Generalized advantage estimates by the backward recursion
/// `A_t = delta_t + gamma * lambda * A_{t+1}` with
/// `delta_t = r_t + gamma * V_{t+1} - V_t`.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap
/// value of the state after the final step.
pub fn compute_gae(rewards: &[f64], values: &[f64], gamma: f64, lambda: f64) -> Result<Vec<f64>, TrainError> {
    if values.len() != rewards.len() + 1 {
        return Err(TrainError::LengthMismatch { rewards: rewards.len(), values: values.len() });
    }
    let mut adv = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        let delta = rewards[t] + gamma * values[t + 1] - values[t];
        acc = delta + gamma * lambda * acc;
        adv[t] = acc;
    }
    Ok(adv)
}

/// Zero mean and unit variance; only centred when the spread is negligible.
pub fn normalize(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 1e-8 {
            *a /= std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_zero_is_the_td_error() {
        let r = [1.0, -0.5, 2.0];
        let v = [0.3, 0.1, -0.2, 0.0];
        let a = compute_gae(&r, &v, 0.9, 0.0).unwrap();
        for t in 0..3 {
            assert_eq!(a[t], r[t] + 0.9 * v[t + 1] - v[t]);
        }
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(compute_gae(&[1.0], &[0.0], 0.9, 0.9).is_err());
    }

    #[test]
    fn normalized_has_zero_mean_unit_variance() {
        let mut a = vec![1.0, 2.0, 4.0, -3.0];
        normalize(&mut a);
        let m = a.iter().sum::<f64>() / 4.0;
        let v = a.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-15 && (v - 1.0).abs() < 1e-12);
        let mut flat = vec![2.0; 3];
        normalize(&mut flat);
        assert_eq!(flat, vec![0.0; 3]);
    }
}
