//! Finite-N identities that connect the particle system with the limit functionals.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::cell::Cell;

#[allow(unused_imports)]
use num_traits::Float;

use super::functionals::free_energy;
use super::grid::{convolve_density, reference_measure, Grid, GridMeasure, InverseCdf};
use crate::potentials::MeanFieldModel;
use crate::quadrature::{integrate, AdaptiveOptions};
use crate::rng::{SequentialRng, StreamKey};
use crate::{Error, Result};

type Scalar = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth 1-D density on `[lo, hi]`, given by its unnormalized log-density
/// and score `d/dx log p`.
#[derive(Clone)]
pub struct Density1d {
    log_pdf: Scalar,
    score: Scalar,
    pub lo: f64,
    pub hi: f64,
}

impl core::fmt::Debug for Density1d {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Density1d").field("lo", &self.lo).field("hi", &self.hi).finish_non_exhaustive()
    }
}

impl Density1d {
    pub fn new(log_pdf: Scalar, score: Scalar, lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::InvalidParameter { name: "support", reason: "need hi > lo".into() });
        }
        Ok(Self { log_pdf, score, lo, hi })
    }

    pub fn gaussian(mean: f64, variance: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return Err(Error::InvalidParameter { name: "variance", reason: "must be positive".into() });
        }
        Self::new(
            Arc::new(move |x| -(x - mean) * (x - mean) / (2.0 * variance)),
            Arc::new(move |x| -(x - mean) / variance),
            lo,
            hi,
        )
    }

    /// Piecewise-linear interpolation of the log of a grid density between
    /// cell centres; the score is the slope of that interpolant.
    pub fn from_grid(measure: &GridMeasure) -> Result<Self> {
        let grid = measure.grid;
        if measure.density.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::SupportTooRough);
        }
        let logs: Arc<Vec<f64>> = Arc::new(measure.density.iter().map(|d| d.ln()).collect());
        let locate = move |x: f64| -> (usize, f64) {
            let s = ((x - grid.x_min) / grid.dx() - 0.5).clamp(0.0, (grid.n_cells - 1) as f64);
            let k = (s as usize).min(grid.n_cells - 2);
            (k, s - k as f64)
        };
        let l = logs.clone();
        let log_pdf = Arc::new(move |x: f64| {
            let (k, t) = locate(x);
            l[k] + t * (l[k + 1] - l[k])
        });
        let score = Arc::new(move |x: f64| {
            let (k, _) = locate(x);
            (logs[k + 1] - logs[k]) / grid.dx()
        });
        Self::new(log_pdf, score, grid.center(0), grid.center(grid.n_cells - 1))
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        (self.log_pdf)(x)
    }

    pub fn score(&self, x: f64) -> f64 {
        (self.score)(x)
    }
}

/// Integrates `f` over `[lo, hi]^2` by nested adaptive Gauss–Kronrod.
fn integrate_2d(f: &dyn Fn(f64, f64) -> f64, lo: f64, hi: f64, opts: &AdaptiveOptions) -> Result<f64> {
    let failure: Cell<Option<Error>> = Cell::new(None);
    let inner_opts = AdaptiveOptions { abs_tol: opts.abs_tol / (hi - lo), ..*opts };
    let outer = |x: f64| match integrate(&|y| f(x, y), lo, hi, &inner_opts) {
        Ok(e) => e.value,
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    let value = integrate(&outer, lo, hi, opts)?.value;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

fn require_1d(model: &MeanFieldModel) -> Result<()> {
    if model.dim == 1 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: 1, actual: model.dim })
    }
}

/// Normalized density closure `p / Z` and `log Z`.
fn normalized<'a>(density: &'a Density1d, opts: &AdaptiveOptions) -> Result<(impl Fn(f64) -> f64 + 'a, f64)> {
    // Shift by the value at the midpoint to keep exp in range.
    let shift = density.log_pdf(0.5 * (density.lo + density.hi));
    let z = integrate(&|x| (density.log_pdf(x) - shift).exp(), density.lo, density.hi, opts)?.value;
    let log_z = z.ln() + shift;
    Ok((move |x: f64| (density.log_pdf(x) - log_z).exp(), log_z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyCheck {
    /// `(1/2) H(nu x nu | mu^(2))` by 2-D quadrature.
    pub lhs: f64,
    /// `H(nu | alpha) + 1/2 int int W dnu dnu + 1/2 log Z~_2` from grid functionals.
    pub rhs: f64,
    pub difference: f64,
    /// `log Z~_2` with `Z~_2 = int int exp(-W) dalpha dalpha`.
    pub log_z2_tilde: f64,
}

/// Checks the per-particle entropy identity for two particles,
/// `(1/2) H(nu x nu | mu^(2)) = H(nu | alpha) + 1/2 int int W dnu dnu + 1/2 log Z~_2`.
///
/// The left side integrates the analytic density over the square; the right
/// side uses midpoint grid functionals on `grid`. The two share no code path
/// beyond the model itself.
pub fn finite_n_entropy_check(model: &MeanFieldModel, density: &Density1d, grid: Grid, opts: &AdaptiveOptions) -> Result<EntropyCheck> {
    require_1d(model)?;
    let (lo, hi) = (density.lo, density.hi);
    let (pdf, log_z) = normalized(density, opts)?;
    let v = |x: f64| model.v(&[x]);
    let w = |x: f64, y: f64| model.w(&[x], &[y]);
    // Z_2 = int int exp(-V(x) - V(y) - W(x, y)), shifted by 2 min V.
    let v_min = v(0.5 * (lo + hi)).min(v(lo)).min(v(hi));
    let z2 = integrate_2d(&|x, y| (2.0 * v_min - v(x) - v(y) - w(x, y)).exp(), lo, hi, opts)?;
    let log_z2 = z2.ln() - 2.0 * v_min;
    let log_nu = |x: f64| density.log_pdf(x) - log_z;
    let integrand = |x: f64, y: f64| {
        let p = pdf(x) * pdf(y);
        if p > 0.0 {
            p * (log_nu(x) + log_nu(y) + v(x) + v(y) + w(x, y))
        } else {
            0.0
        }
    };
    let lhs = 0.5 * (integrate_2d(&integrand, lo, hi, opts)? + log_z2);

    let nu = GridMeasure::from_fn(grid, |x| density.log_pdf(x).exp())?;
    let alpha = reference_measure(model, grid)?;
    let dx = grid.dx();
    let xs = grid.centers();
    let mut z2_tilde = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            z2_tilde += (-w(x, y)).exp() * alpha.density[i] * alpha.density[j];
        }
    }
    let log_z2_tilde = (z2_tilde * dx * dx).ln();
    let rhs = free_energy(model, &nu)? + 0.5 * log_z2_tilde;
    Ok(EntropyCheck { lhs, rhs, difference: lhs - rhs, log_z2_tilde })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherCheckOptions {
    /// Monte Carlo samples for `N >= 3`.
    pub samples: usize,
    pub seed: u64,
    /// Cells of the tabulation used for sampling and for `grad_x W * nu`.
    pub table_cells: usize,
    pub quadrature: AdaptiveOptions,
}

impl Default for FisherCheckOptions {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            seed: 0,
            table_cells: 8192,
            quadrature: AdaptiveOptions { abs_tol: 1e-11, rel_tol: 0.0, max_intervals: 2000 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherCheck {
    pub n: usize,
    /// `(1/N) I(nu^{xN} | mu^(N))`.
    pub lhs: f64,
    /// `I_W(nu)`.
    pub rhs_limit: f64,
    pub gap: f64,
    /// Monte Carlo standard error of `gap`; zero for quadrature.
    pub standard_error: f64,
}

/// Compares the per-particle Fisher information of `nu^{xN}` relative to the
/// N-particle Gibbs measure,
/// `(1/4) E |grad log(dnu/dalpha)(x_1) + (1/(N-1)) sum_j grad_x W(x_1, x_j)|^2`,
/// with its limit `I_W(nu)`.
///
/// `N = 2` is integrated by 2-D quadrature. Larger `N` uses Monte Carlo over
/// `nu^{xN}`; the gap is estimated from per-sample differences against the
/// limit integrand at the same `x_1`, which removes most of the variance.
pub fn finite_n_fisher_check(model: &MeanFieldModel, density: &Density1d, n: usize, opts: &FisherCheckOptions) -> Result<FisherCheck> {
    require_1d(model)?;
    if n < 2 {
        return Err(Error::InvalidParameter { name: "n", reason: "need at least two particles".into() });
    }
    let q = &opts.quadrature;
    let (lo, hi) = (density.lo, density.hi);
    let (pdf, _) = normalized(density, q)?;
    let drift = |x: f64| density.score(x) + model.v_prime(x);
    let failure: Cell<Option<Error>> = Cell::new(None);
    let mean_field = |x: f64| match integrate(&|y| model.w_prime(x, y) * pdf(y), lo, hi, q) {
        Ok(e) => e.value,
        Err(e) => {
            failure.set(Some(e));
            0.0
        }
    };
    let rhs_limit = 0.25 * integrate(&|x| (drift(x) + mean_field(x)).powi(2) * pdf(x), lo, hi, q)?.value;
    if let Some(e) = failure.take() {
        return Err(e);
    }

    if n == 2 {
        let lhs = 0.25 * integrate_2d(&|x, y| (drift(x) + model.w_prime(x, y)).powi(2) * pdf(x) * pdf(y), lo, hi, q)?;
        return Ok(FisherCheck { n, lhs, rhs_limit, gap: lhs - rhs_limit, standard_error: 0.0 });
    }

    let grid = Grid::new(lo, hi, opts.table_cells)?;
    let table = GridMeasure::from_fn(grid, pdf)?;
    let inverse = InverseCdf::new(&table);
    let mf_table = convolve_density(model, &grid, &table.density).derivative;
    let mean_field_at = |x: f64| {
        let s = ((x - grid.x_min) / grid.dx() - 0.5).clamp(0.0, (grid.n_cells - 1) as f64);
        let k = (s as usize).min(grid.n_cells - 2);
        let t = s - k as f64;
        mf_table[k] + t * (mf_table[k + 1] - mf_table[k])
    };
    let mut rng = SequentialRng::new(StreamKey::new(opts.seed, 0xf15 + n as u64));
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..opts.samples {
        let x1 = inverse.eval(rng.uniform());
        let mut pair = 0.0;
        for _ in 1..n {
            pair += model.w_prime(x1, inverse.eval(rng.uniform()));
        }
        let a = drift(x1);
        let finite = a + pair / (n - 1) as f64;
        let limit = a + mean_field_at(x1);
        let d = 0.25 * (finite * finite - limit * limit);
        sum += d;
        sum_sq += d * d;
    }
    let m = opts.samples as f64;
    let gap = sum / m;
    let standard_error = ((sum_sq / m - gap * gap).max(0.0) / (m - 1.0)).sqrt();
    Ok(FisherCheck { n, lhs: rhs_limit + gap, rhs_limit, gap, standard_error })
}

/// `true` when the gaps do not increase along the list by more than `z`
/// combined standard errors.
pub fn fisher_gap_decreasing(checks: &[FisherCheck], z: f64) -> bool {
    checks.windows(2).all(|w| {
        let noise = z * (w[0].standard_error.powi(2) + w[1].standard_error.powi(2)).sqrt();
        w[1].gap <= w[0].gap + noise
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{builtin_model, ModelFamily};

    fn tight() -> AdaptiveOptions {
        AdaptiveOptions { abs_tol: 1e-11, rel_tol: 0.0, max_intervals: 2000 }
    }

    #[test]
    fn entropy_identity_without_interaction_is_plain_entropy() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let g = Grid::new(-12.0, 12.0, 1200).unwrap();
        let nu = Density1d::gaussian(0.5, 1.0, -12.0, 12.0).unwrap();
        let check = finite_n_entropy_check(&free, &nu, g, &tight()).unwrap();
        assert!(check.log_z2_tilde.abs() < 1e-12);
        assert!((check.lhs - 0.125).abs() < 1e-8, "{check:?}");
        assert!(check.difference.abs() < 1e-8);
    }

    #[test]
    fn entropy_identity_for_gaussian_coupling() {
        let g_model = builtin_model(ModelFamily::Gaussian, &[0.3]).unwrap();
        let g = Grid::new(-12.0, 12.0, 1200).unwrap();
        let nu = Density1d::gaussian(0.5, 1.0, -12.0, 12.0).unwrap();
        let check = finite_n_entropy_check(&g_model, &nu, g, &tight()).unwrap();
        // Z~_2 = E exp(-beta x y) over independent standard normals.
        assert!((check.log_z2_tilde + 0.5 * (1.0 - 0.09f64).ln()).abs() < 1e-9, "{check:?}");
        assert!(check.difference.abs() < 1e-6, "{check:?}");
    }

    #[test]
    fn fisher_lhs_matches_gaussian_closed_form() {
        let beta = 0.3;
        let m = 0.5;
        let g_model = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let nu = Density1d::gaussian(m, 1.0, -12.0, 12.0).unwrap();
        let check = finite_n_fisher_check(&g_model, &nu, 2, &FisherCheckOptions::default()).unwrap();
        let limit = 0.25 * (m * (1.0 + beta)).powi(2);
        assert!((check.rhs_limit - limit).abs() < 1e-9, "{check:?}");
        assert!((check.lhs - (limit + beta * beta / 4.0)).abs() < 1e-6, "{check:?}");
    }

    #[test]
    fn fisher_gap_shrinks_like_one_over_n_minus_one() {
        let beta = 0.3;
        let g_model = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let nu = Density1d::gaussian(0.5, 1.0, -12.0, 12.0).unwrap();
        let opts = FisherCheckOptions { samples: 200_000, seed: 3, ..Default::default() };
        let checks: Vec<FisherCheck> = (2..=4).map(|n| finite_n_fisher_check(&g_model, &nu, n, &opts).unwrap()).collect();
        for c in &checks[1..] {
            let exact = beta * beta / (4.0 * (c.n - 1) as f64);
            assert!((c.gap - exact).abs() < 4.0 * c.standard_error + 1e-5, "{c:?}");
        }
        assert!(fisher_gap_decreasing(&checks, 2.0));
    }

    #[test]
    fn no_interaction_means_no_gap() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let nu = Density1d::gaussian(0.7, 1.5, -12.0, 12.0).unwrap();
        let opts = FisherCheckOptions { samples: 10_000, ..Default::default() };
        for n in 2..=4 {
            let c = finite_n_fisher_check(&free, &nu, n, &opts).unwrap();
            assert!(c.gap.abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn grid_density_round_trips() {
        let g = Grid::new(-8.0, 8.0, 800).unwrap();
        let m = GridMeasure::gaussian(g, 0.0, 1.0).unwrap();
        let d = Density1d::from_grid(&m).unwrap();
        assert!((d.score(1.0) + 1.0).abs() < 1e-2);
        assert!((d.log_pdf(g.center(10)) - m.density[10].ln()).abs() < 1e-12);
    }
}
