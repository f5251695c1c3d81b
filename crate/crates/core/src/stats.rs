//! Small statistics helpers shared by the samplers and estimators.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

/// Means of `batches` contiguous, equally sized batches (a trailing remainder
/// is dropped).
pub fn batch_means(xs: &[f64], batches: usize) -> Vec<f64> {
    let len = xs.len() / batches.max(1);
    if len == 0 {
        return Vec::new();
    }
    xs.chunks_exact(len).take(batches).map(mean).collect()
}

/// Standard error of the mean of an autocorrelated series, from batch means.
pub fn batch_standard_error(xs: &[f64], batches: usize) -> f64 {
    let bm = batch_means(xs, batches);
    (variance(&bm) / bm.len() as f64).sqrt()
}

/// Effective sample size `n * var(x) / (L * var(batch means))` with `sqrt(n)`
/// batches of length `L`.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    let batches = ((n as f64).sqrt() as usize).max(2);
    let bm = batch_means(xs, batches);
    let len = n / batches;
    let var = variance(xs);
    let var_bm = variance(&bm);
    if var_bm <= 0.0 || !var_bm.is_finite() {
        return n as f64;
    }
    (n as f64 * var / (len as f64 * var_bm)).min(n as f64)
}

/// Ordinary least squares fit `y = intercept + slope * x`, optionally weighted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
}

pub fn fit_line(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Option<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        sw += w(i);
        sx += w(i) * x[i];
        sy += w(i) * y[i];
    }
    let (mx, my) = (sx / sw, sy / sw);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for i in 0..x.len() {
        sxx += w(i) * (x[i] - mx) * (x[i] - mx);
        sxy += w(i) * (x[i] - mx) * (y[i] - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(LineFit { intercept: my - slope * mx, slope })
}

/// Linear-interpolated empirical quantile of already sorted data.
pub fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SequentialRng, StreamKey};

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: std::vec::Vec<f64> = x.iter().map(|t| 2.0 - 0.5 * t).collect();
        let fit = fit_line(&x, &y, None).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-15 && (fit.intercept - 2.0).abs() < 1e-15);
    }

    #[test]
    fn ess_of_ar1_matches_theory() {
        // AR(1) with coefficient phi has IAT (1 + phi) / (1 - phi).
        let phi: f64 = 0.8;
        let mut rng = SequentialRng::new(StreamKey::new(3, 0));
        let mut x = 0.0;
        let xs: std::vec::Vec<f64> = (0..400_000)
            .map(|_| {
                x = phi * x + (1.0 - phi * phi).sqrt() * rng.normal();
                x
            })
            .collect();
        let iat = xs.len() as f64 / effective_sample_size(&xs);
        assert!((iat - 9.0).abs() < 1.2, "iat {iat}");
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(sorted_quantile(&[0.0, 1.0, 2.0], 0.25), 0.5);
    }
}
