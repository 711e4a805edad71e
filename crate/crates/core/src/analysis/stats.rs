//! Small statistics helpers shared by the ensemble reductions.

use serde::Serialize;

use crate::quadrature::compensated_sum;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub standard_error: f64,
    pub count: usize,
}

/// Mean with compensated summation, so the result does not depend on
/// the order of `values` beyond the last bit.
pub fn mean_estimate(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            standard_error: f64::NAN,
            count: 0,
        };
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    let standard_error = if n < 2 {
        f64::NAN
    } else {
        let ss = compensated_sum(values.iter().map(|v| (v - mean).powi(2)));
        (ss / (n - 1) as f64 / n as f64).sqrt()
    };
    MeanEstimate {
        mean,
        standard_error,
        count: n,
    }
}

/// Wilson score interval for `successes` out of `trials` at level `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // The endpoints are exactly 0 or 1 at the extremes; avoid rounding.
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, se_b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let se = if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (a, b, se)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_matches_reference_values() {
        // 10 of 100 at 95%: (0.0552, 0.1744) to four places.
        let (lo, hi) = wilson_interval(10, 100, Z95);
        assert!((lo - 0.0552).abs() < 1e-4 && (hi - 0.1744).abs() < 1e-4, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 200, Z95);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.018_845).abs() < 1e-5, "{hi}");
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 1.5 - 0.25 * v).collect();
        let (a, b, se) = linear_fit(&x, &y);
        assert!((a - 1.5).abs() < 1e-14 && (b + 0.25).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn mean_and_error() {
        let m = mean_estimate(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.standard_error - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }
}
