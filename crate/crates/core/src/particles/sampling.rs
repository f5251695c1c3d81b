//! Equilibrium sampling of the Gibbs measure `exp(-H_N) / Z_N`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{check_finite, drift, hamiltonian};
use crate::potentials::MeanFieldModel;
use crate::rng::StreamKey;
use crate::stats;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampler {
    Ula,
    Mala,
}

/// `samples` configurations of `N x d` coordinates, stored back to back.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsSampleSet {
    pub n: usize,
    pub dim: usize,
    pub samples: Vec<f64>,
    pub sampler: Sampler,
    pub acceptance_rate: Option<f64>,
}

impl GibbsSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len() / (self.n * self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn configuration(&self, s: usize) -> &[f64] {
        let w = self.n * self.dim;
        &self.samples[s * w..(s + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MalaOptions {
    pub samples: usize,
    pub dt: f64,
    pub burn_in: usize,
    /// Keep every `thin`-th state after burn-in.
    pub thin: usize,
    pub seed: u64,
    pub stream: u64,
    /// Starting configuration; zeros when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for MalaOptions {
    fn default() -> Self {
        Self { samples: 10_000, dt: 0.1, burn_in: 1_000, thin: 1, seed: 0, stream: 0, init: None }
    }
}

fn initial_state(model: &MeanFieldModel, n: usize, opts: &MalaOptions) -> Result<Vec<f64>> {
    let w = n * model.dim;
    match &opts.init {
        Some(x) if x.len() != w => Err(Error::DimensionMismatch { expected: w, actual: x.len() }),
        Some(x) => Ok(x.clone()),
        None => Ok(vec![0.0; w]),
    }
}

fn validate(n: usize, opts: &MalaOptions) -> Result<()> {
    if n < 2 {
        return Err(Error::InvalidParameter { name: "N", reason: "need at least two particles".into() });
    }
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must be positive".into() });
    }
    if opts.thin == 0 {
        return Err(Error::InvalidParameter { name: "thin", reason: "must be at least 1".into() });
    }
    Ok(())
}

/// Metropolis-adjusted Langevin chain on the full configuration.
///
/// Proposals are `y = x + dt b(x) + sqrt(2 dt) xi` with `b = -grad H_N`; the
/// acceptance ratio uses differences of `H_N` only.
pub fn sample_mala(model: &MeanFieldModel, n: usize, opts: &MalaOptions) -> Result<GibbsSampleSet> {
    validate(n, opts)?;
    let key = StreamKey::new(opts.seed, opts.stream);
    let d = model.dim;
    let w = n * d;
    let mut x = initial_state(model, n, opts)?;
    let mut hx = hamiltonian(model, &x, n);
    if !hx.is_finite() {
        return Err(Error::InvalidParameter { name: "init", reason: "H_N is not finite at the initial state".into() });
    }
    let mut bx = drift(model, &x, n);
    let sigma = (2.0 * opts.dt).sqrt();
    let total = opts.burn_in + opts.samples * opts.thin;
    let mut out = Vec::with_capacity(opts.samples * w);
    let mut y = vec![0.0; w];
    let mut xi = vec![0.0; d];
    let mut accepted = 0usize;
    for step in 0..total {
        let k = step as u64;
        for i in 0..n {
            key.fill_normals(k, i as u32, &mut xi);
            for c in 0..d {
                let idx = i * d + c;
                y[idx] = x[idx] + opts.dt * bx[idx] + sigma * xi[c];
            }
        }
        if check_finite(&y, k).is_ok() {
            let hy = hamiltonian(model, &y, n);
            let by = drift(model, &y, n);
            let mut forward = 0.0;
            let mut backward = 0.0;
            for idx in 0..w {
                let f = y[idx] - x[idx] - opts.dt * bx[idx];
                let b = x[idx] - y[idx] - opts.dt * by[idx];
                forward += f * f;
                backward += b * b;
            }
            let log_alpha = hx - hy + (forward - backward) / (4.0 * opts.dt);
            let u = key.uniform(k, u32::MAX - 1, 0);
            if log_alpha.is_finite() && u.ln() < log_alpha {
                x.copy_from_slice(&y);
                hx = hy;
                bx = by;
                accepted += 1;
            }
        }
        if step >= opts.burn_in && (step - opts.burn_in) % opts.thin == opts.thin - 1 {
            out.extend_from_slice(&x);
        }
    }
    let rate = accepted as f64 / total.max(1) as f64;
    if rate < 0.01 {
        return Err(Error::DegenerateAcceptance { rate });
    }
    Ok(GibbsSampleSet { n, dim: d, samples: out, sampler: Sampler::Mala, acceptance_rate: Some(rate) })
}

/// Unadjusted Langevin chain (plain Euler–Maruyama); biased by `O(dt)`.
pub fn sample_ula(model: &MeanFieldModel, n: usize, opts: &MalaOptions) -> Result<GibbsSampleSet> {
    validate(n, opts)?;
    let key = StreamKey::new(opts.seed, opts.stream);
    let d = model.dim;
    let mut ens = super::ParticleEnsemble::new(initial_state(model, n, opts)?, n, d, opts.dt, key)?;
    let mut out = Vec::with_capacity(opts.samples * n * d);
    super::run_euler_maruyama(&mut ens, model, opts.burn_in as u64)?;
    for _ in 0..opts.samples {
        super::run_euler_maruyama(&mut ens, model, opts.thin as u64)?;
        out.extend_from_slice(&ens.positions);
    }
    Ok(GibbsSampleSet { n, dim: d, samples: out, sampler: Sampler::Ula, acceptance_rate: None })
}

/// Sample covariance of all `N d` coordinates with batch-means standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub size: usize,
    pub mean: Vec<f64>,
    /// Row-major `size x size`.
    pub covariance: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Smallest effective sample size over the entries.
    pub min_ess: f64,
}

pub fn sample_covariance(set: &GibbsSampleSet) -> CovarianceEstimate {
    let p = set.n * set.dim;
    let m = set.len();
    let mut mean = vec![0.0; p];
    for s in 0..m {
        for (a, v) in mean.iter_mut().zip(set.configuration(s)) {
            *a += v;
        }
    }
    for a in &mut mean {
        *a /= m as f64;
    }
    let batches = ((m as f64).sqrt() as usize).clamp(20, 1000);
    let mut covariance = vec![0.0; p * p];
    let mut standard_errors = vec![0.0; p * p];
    let mut min_ess = f64::INFINITY;
    let mut series = vec![0.0; m];
    for a in 0..p {
        for b in a..p {
            for (s, v) in series.iter_mut().enumerate() {
                let c = set.configuration(s);
                *v = (c[a] - mean[a]) * (c[b] - mean[b]);
            }
            let est = stats::mean(&series) * m as f64 / (m as f64 - 1.0);
            let se = stats::batch_standard_error(&series, batches);
            covariance[a * p + b] = est;
            covariance[b * p + a] = est;
            standard_errors[a * p + b] = se;
            standard_errors[b * p + a] = se;
            min_ess = min_ess.min(stats::effective_sample_size(&series));
        }
    }
    CovarianceEstimate { size: p, mean, covariance, standard_errors, min_ess }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCovariance {
    pub estimate: f64,
    pub standard_error: f64,
}

/// `Cov(f(x_i), g(x_j))` for `i != j`, pooled over all ordered pairs of an
/// exchangeable sample, with a block-jackknife standard error.
pub fn estimate_pair_covariance(
    set: &GibbsSampleSet,
    f: &dyn Fn(&[f64]) -> f64,
    g: &dyn Fn(&[f64]) -> f64,
) -> PairCovariance {
    let (n, d) = (set.n, set.dim);
    let m = set.len();
    let blocks = 100.min(m).max(2);
    let len = m / blocks;
    // Per-block sums of the pair average, of mean f and of mean g.
    let mut sums = vec![[0.0f64; 3]; blocks];
    for (b, acc) in sums.iter_mut().enumerate() {
        for s in b * len..(b + 1) * len {
            let c = set.configuration(s);
            let (mut sf, mut sg, mut sfg) = (0.0, 0.0, 0.0);
            for i in 0..n {
                let p = &c[i * d..(i + 1) * d];
                let (fi, gi) = (f(p), g(p));
                sf += fi;
                sg += gi;
                sfg += fi * gi;
            }
            acc[0] += (sf * sg - sfg) / (n * (n - 1)) as f64;
            acc[1] += sf / n as f64;
            acc[2] += sg / n as f64;
        }
    }
    let total = sums.iter().fold([0.0; 3], |t, s| [t[0] + s[0], t[1] + s[1], t[2] + s[2]]);
    let count = (blocks * len) as f64;
    let theta = |t: [f64; 3], c: f64| t[0] / c - (t[1] / c) * (t[2] / c);
    let estimate = theta(total, count);
    let leave_out: Vec<f64> = sums
        .iter()
        .map(|s| theta([total[0] - s[0], total[1] - s[1], total[2] - s[2]], count - len as f64))
        .collect();
    let mean_lo = stats::mean(&leave_out);
    let var = leave_out.iter().map(|v| (v - mean_lo) * (v - mean_lo)).sum::<f64>() * (blocks - 1) as f64 / blocks as f64;
    PairCovariance { estimate, standard_error: var.sqrt() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::{gaussian_precision, spd_inverse};
    use crate::potentials::{builtin_model, ModelFamily};
    use crate::quadrature::{integrate, AdaptiveOptions};

    #[test]
    fn independent_case_has_zero_mean() {
        let g = builtin_model(ModelFamily::Gaussian, &[0.0]).unwrap();
        let set = sample_mala(&g, 3, &MalaOptions { samples: 40_000, dt: 0.8, seed: 2, ..Default::default() }).unwrap();
        assert_eq!(set.len(), 40_000);
        let rate = set.acceptance_rate.unwrap();
        assert!(rate > 0.0 && rate < 1.0);
        let cov = sample_covariance(&set);
        for i in 0..3 {
            let xs: Vec<f64> = (0..set.len()).map(|s| set.configuration(s)[i]).collect();
            let ess = stats::effective_sample_size(&xs);
            assert!(cov.mean[i].abs() < 3.0 / ess.sqrt(), "mean {} ess {ess}", cov.mean[i]);
        }
    }

    #[test]
    fn gaussian_covariance_matches_precision_inverse() {
        let (beta, n) = (0.5, 4);
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let set = sample_mala(&g, n, &MalaOptions { samples: 100_000, dt: 0.7, seed: 5, ..Default::default() }).unwrap();
        let est = sample_covariance(&set);
        let exact = spd_inverse(&gaussian_precision(beta, n), n).unwrap();
        for k in 0..n * n {
            assert!((est.covariance[k] - exact[k]).abs() < 4.0 * est.standard_errors[k], "entry {k}");
        }
    }

    #[test]
    fn curie_weiss_mean_vanishes_by_symmetry() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let set = sample_mala(&cw, 8, &MalaOptions { samples: 40_000, dt: 0.3, seed: 9, ..Default::default() }).unwrap();
        let xs: Vec<f64> = (0..set.len()).map(|s| set.configuration(s)[0]).collect();
        let se = stats::batch_standard_error(&xs, 100);
        assert!(stats::mean(&xs).abs() < 3.0 * se);
    }

    #[test]
    fn two_particle_marginal_matches_quadrature() {
        // 50-bin chi-square test of the single-site marginal of exp(-H_2).
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.5]).unwrap();
        let thin = 5;
        let set = sample_mala(&cw, 2, &MalaOptions { samples: 300_000, dt: 0.5, thin, seed: 4, ..Default::default() }).unwrap();
        let xs: Vec<f64> = (0..set.len()).map(|s| set.configuration(s)[0]).collect();
        let ess = stats::effective_sample_size(&xs);
        assert!(ess >= 1e5, "ess {ess}");
        let density = |x: f64, y: f64| (-crate::particles::hamiltonian(&cw, &[x, y], 2)).exp();
        let opts = AdaptiveOptions { abs_tol: 1e-11, ..Default::default() };
        let marginal = |x: f64| integrate(&|y| density(x, y), -6.0, 6.0, &opts).unwrap().value;
        let z = integrate(&marginal, -6.0, 6.0, &opts).unwrap().value;
        let (lo, hi, bins) = (-2.5, 2.5, 50);
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0; bins];
        for &x in &xs {
            if x >= lo && x < hi {
                counts[((x - lo) / width) as usize] += 1.0;
            }
        }
        // Autocorrelation inflates the variance of bin counts by n / ess.
        let inflation = xs.len() as f64 / ess;
        let mut chi2 = 0.0;
        for (b, c) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let p = integrate(&marginal, a, a + width, &opts).unwrap().value / z;
            let e = p * xs.len() as f64;
            chi2 += (c - e) * (c - e) / e;
        }
        chi2 /= inflation.max(1.0);
        // 99th percentile of chi-square with 49 degrees of freedom.
        assert!(chi2 < 74.9, "chi2 {chi2}");
    }

    #[test]
    fn product_measure_pair_covariance_vanishes() {
        let g = builtin_model(ModelFamily::Gaussian, &[0.0]).unwrap();
        let set = sample_mala(&g, 4, &MalaOptions { samples: 50_000, dt: 0.8, seed: 3, ..Default::default() }).unwrap();
        let id = |p: &[f64]| p[0];
        let pc = estimate_pair_covariance(&set, &id, &id);
        assert!(pc.estimate.abs() < 3.0 * pc.standard_error);
    }

    #[test]
    fn gaussian_pair_covariance_matches_exact() {
        let (beta, n) = (0.5, 5);
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let set = sample_mala(&g, n, &MalaOptions { samples: 100_000, dt: 0.7, seed: 8, ..Default::default() }).unwrap();
        let id = |p: &[f64]| p[0];
        let pc = estimate_pair_covariance(&set, &id, &id);
        let exact = spd_inverse(&gaussian_precision(beta, n), n).unwrap()[1];
        assert!((pc.estimate - exact).abs() < 4.0 * pc.standard_error, "{} vs {exact}", pc.estimate);
    }

    #[test]
    fn degenerate_step_is_rejected() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let res = sample_mala(&cw, 16, &MalaOptions { samples: 200, dt: 20.0, init: Some(vec![1.0; 16]), ..Default::default() });
        assert!(matches!(res, Err(Error::DegenerateAcceptance { .. })));
    }
}
