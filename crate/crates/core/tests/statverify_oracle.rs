use statrs::distribution::{ContinuousCDF, Normal};
use tdmat::statverify::{normal_quantile, wald_interval, z_value};

#[test]
fn quantile_matches_reference_distribution() {
    let n = Normal::standard();
    for k in 1..2000 {
        let p = k as f64 / 2000.0;
        let want = n.inverse_cdf(p);
        assert!((normal_quantile(p) - want).abs() < 2e-9 * want.abs() + 1e-15, "p={p}");
    }
    for p in [1e-10, 1e-6, 0.02425, 0.97575, 1.0 - 1e-6] {
        assert!((normal_quantile(p) - n.inverse_cdf(p)).abs() < 2e-9 * n.inverse_cdf(p).abs(), "p={p}");
    }
}

#[test]
fn wald_interval_matches_reference_formula() {
    let n = Normal::standard();
    for &(s, t, c) in &[(5u64, 500u64, 0.9), (68, 500, 0.9), (250, 1000, 0.95), (999, 1000, 0.99)] {
        let z = n.inverse_cdf(1.0 - (1.0 - c) / 2.0);
        assert!((z_value(c).unwrap() - z).abs() < 1e-8);
        let p = s as f64 / t as f64;
        let h = z * (p * (1.0 - p) / t as f64).sqrt();
        let (lo, hi) = wald_interval(s, t, c).unwrap();
        assert!((lo - (p - h).max(0.0)).abs() < 1e-8 && (hi - (p + h).min(1.0)).abs() < 1e-8, "{s}/{t}");
    }
}
