//! Shared statistics helpers for the integration suites.

#![allow(dead_code)]

/// Two-sided Kolmogorov-Smirnov statistic of `samples` (sorted in place)
/// against a reference CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in samples.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// 1% critical value of the KS statistic (asymptotic).
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

/// Chi-square upper 1% critical value for 19 degrees of freedom
/// (20 uniformity bins).
pub const CHI2_99PCT_19DOF: f64 = 36.191;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc_neg_half(x)
}

fn erfc_neg_half(x: f64) -> f64 {
    // 1 + erf(x/sqrt(2)) via Abramowitz-Stegun 7.1.26 rational fit
    let z = x / std::f64::consts::SQRT_2;
    let (sign, z) = if z < 0.0 { (-1.0, -z) } else { (1.0, z) };
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t
        * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    1.0 + sign * erf
}

/// Sample mean and (n−1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
