//! Finite-volume McKean–Vlasov evolution and the decay checks along it.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::functionals::{fisher_information, free_energy, mean_field_entropy, wasserstein2_1d};
use super::grid::{effective_potential, GridMeasure};
use crate::potentials::MeanFieldModel;
use crate::{stats, Error, Result};

/// Largest relative renormalization a step may apply before it is treated as a leak.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Absolute floor added to every bound comparison; below it values are rounding noise.
pub const CHECK_FLOOR: f64 = 1e-12;

/// Bernoulli function `z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// One step, returning the new measure and the relative mass correction applied.
fn step_with_correction(model: &MeanFieldModel, nu: &GridMeasure, dt: f64) -> Result<(GridMeasure, f64)> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must be positive".into() });
    }
    let grid = nu.grid;
    let n = grid.n_cells;
    let h2 = grid.dx() * grid.dx();
    let u = effective_potential(model, nu)?;
    // Interface i sits between cells i and i+1.
    // Flux J = (B(d) nu_i - B(-d) nu_{i+1}) / dx vanishes on nu ~ exp(-U).
    let mut right = vec![0.0; n - 1];
    let mut left = vec![0.0; n - 1];
    for i in 0..n - 1 {
        let d = u[i + 1] - u[i];
        right[i] = bernoulli(d) / h2;
        left[i] = bernoulli(-d) / h2;
    }
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    let mut lower = vec![0.0; n];
    for i in 0..n {
        if i + 1 < n {
            diag[i] += dt * right[i];
            upper[i] = -dt * left[i];
        }
        if i > 0 {
            diag[i] += dt * left[i - 1];
            lower[i] = -dt * right[i - 1];
        }
    }
    // Thomas algorithm. All pivots stay positive for this M-matrix, so the
    // solution of a nonnegative right-hand side is nonnegative.
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = upper[0] / diag[0];
    dp[0] = nu.density[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * cp[i - 1];
        cp[i] = upper[i] / m;
        dp[i] = (nu.density[i] - lower[i] * dp[i - 1]) / m;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = dp[i] - cp[i] * out[i + 1];
    }
    if let Some((cell, &value)) = out.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeDensity { cell, value });
    }
    let before = nu.mass();
    let after = out.iter().sum::<f64>() * grid.dx();
    let correction = (after / before - 1.0).abs();
    if !(correction < MASS_TOLERANCE) {
        return Err(Error::MassLeak { mass: after });
    }
    let scale = 1.0 / (after);
    for v in &mut out {
        *v *= scale;
    }
    let next = GridMeasure { grid, density: out };
    next.check_boundary()?;
    Ok((next, correction))
}

/// One implicit step of the McKean–Vlasov equation.
///
/// The nonlocal potential `W * nu` is frozen at the start of the step. The
/// drift-diffusion part uses exponentially fitted fluxes with zero flux at the
/// domain ends. Mass is conserved and positivity kept; the frozen Boltzmann
/// density `exp(-V - W * nu) / Z` is an exact steady state of the step.
pub fn mckv_step(model: &MeanFieldModel, nu: &GridMeasure, dt: f64) -> Result<GridMeasure> {
    step_with_correction(model, nu, dt).map(|(m, _)| m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Steps between recorded trace points.
    pub record_every: usize,
    /// Log-Sobolev constant used in the bound checks; no checks without it.
    pub rho_ls: Option<f64>,
    /// Relative numerical slack in the bound checks.
    pub slack: f64,
    /// Whether `nu_inf` is known to be the unique minimiser of the free energy.
    pub certified: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { t_end: 10.0, dt: 1e-3, record_every: 100, rho_ls: None, slack: 5e-2, certified: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    pub h_w: f64,
    pub i_w: f64,
    pub w2: f64,
    pub e_f: f64,
    pub mean: f64,
    pub variance: f64,
    /// `H_W(t) <= exp(-t rho/2) H_W(0) (1 + slack)`.
    pub decay_check: Option<bool>,
    /// `rho W_2^2 <= 2 H_W (1 + slack)`.
    pub t2_check: Option<bool>,
    /// `rho H_W <= 2 I_W (1 + slack)`.
    pub lsi_check: Option<bool>,
}

/// Exponential fit `H_W ~ exp(-rate t)` over a window of the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    pub points: Vec<TracePoint>,
    /// Fit over the points with `H_W` in `[1e-8, H_W(0)/2]`.
    pub fitted_rate: Option<RateFit>,
    /// Largest step-to-step increase of the free energy.
    pub max_free_energy_increase: f64,
    /// Largest relative mass correction applied by a step.
    pub max_mass_correction: f64,
    pub certified: bool,
}

impl DecayTrace {
    /// `true` when every evaluated check holds at every point.
    pub fn all_checks_pass(&self) -> bool {
        self.points.iter().all(|p| [p.decay_check, p.t2_check, p.lsi_check].iter().all(|c| c.unwrap_or(true)))
    }

    /// Finite-difference ratio `-(dH_W/dt) / (4 I_W)` between consecutive points.
    ///
    /// The continuous flow has ratio 1; the discrete one only approximately.
    pub fn dissipation_ratios(&self) -> Vec<(f64, f64)> {
        self.points
            .windows(2)
            .filter_map(|w| {
                let i = 0.5 * (w[0].i_w + w[1].i_w);
                (i > 0.0).then(|| (0.5 * (w[0].t + w[1].t), -(w[1].h_w - w[0].h_w) / (w[1].t - w[0].t) / (4.0 * i)))
            })
            .collect()
    }
}

/// Rounding-level negatives of `H_W` are reported as zero.
fn clamp_small_negative(h: f64) -> f64 {
    if h < 0.0 && h > -CHECK_FLOOR {
        0.0
    } else {
        h
    }
}

/// Evolves `nu0` to `t_end`, recording the mean-field entropy, Fisher
/// information and `W_2` distance to `nu_inf`, and checking the decay bounds.
pub fn evolve_and_trace(model: &MeanFieldModel, nu0: &GridMeasure, nu_inf: &GridMeasure, opts: &EvolveOptions) -> Result<DecayTrace> {
    if opts.record_every == 0 {
        return Err(Error::InvalidParameter { name: "record_every", reason: "must be at least 1".into() });
    }
    if nu0.grid != nu_inf.grid {
        return Err(Error::InvalidParameter { name: "nu0", reason: "initial and limit measures live on different grids".into() });
    }
    let steps = (opts.t_end / opts.dt).round() as usize;
    let mut nu = nu0.clone();
    let mut points = Vec::new();
    let mut h0 = 0.0;
    let mut energy = free_energy(model, &nu)?;
    let mut max_increase = f64::NEG_INFINITY;
    let mut max_correction = 0.0f64;
    for step in 0..=steps {
        if step % opts.record_every == 0 || step == steps {
            let t = step as f64 * opts.dt;
            let h_w = clamp_small_negative(mean_field_entropy(model, &nu, nu_inf)?);
            let i_w = fisher_information(model, &nu)?.value;
            let w2 = wasserstein2_1d(&nu, nu_inf);
            if step == 0 {
                h0 = h_w;
            }
            let tol = |rhs: f64| rhs * (1.0 + opts.slack) + CHECK_FLOOR;
            let (decay_check, t2_check, lsi_check) = match opts.rho_ls {
                Some(rho) => (
                    Some(h_w <= tol((-t * rho / 2.0).exp() * h0)),
                    Some(rho * w2 * w2 <= tol(2.0 * h_w)),
                    Some(rho * h_w <= tol(2.0 * i_w)),
                ),
                None => (None, None, None),
            };
            points.push(TracePoint { t, h_w, i_w, w2, e_f: energy, mean: nu.mean(), variance: nu.variance(), decay_check, t2_check, lsi_check });
        }
        if step == steps {
            break;
        }
        let (next, correction) = step_with_correction(model, &nu, opts.dt)?;
        max_correction = max_correction.max(correction);
        let next_energy = free_energy(model, &next)?;
        max_increase = max_increase.max(next_energy - energy);
        energy = next_energy;
        nu = next;
    }
    let fitted_rate = fit_decay_rate(&points, h0);
    Ok(DecayTrace {
        points,
        fitted_rate,
        max_free_energy_increase: max_increase,
        max_mass_correction: max_correction,
        certified: opts.certified,
    })
}

fn fit_decay_rate(points: &[TracePoint], h0: f64) -> Option<RateFit> {
    let window: Vec<&TracePoint> = points.iter().filter(|p| p.h_w >= 1e-8 && p.h_w <= 0.5 * h0).collect();
    if window.len() < 3 {
        return None;
    }
    let x: Vec<f64> = window.iter().map(|p| p.t).collect();
    let y: Vec<f64> = window.iter().map(|p| p.h_w.ln()).collect();
    let fit = stats::fit_line(&x, &y, None)?;
    Some(RateFit { rate: -fit.slope, t_start: x[0], t_end: x[x.len() - 1], points: x.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{reference_measure, solve_invariant, Grid, InvariantOptions};
    use crate::potentials::{builtin_model, ModelFamily};

    fn ou() -> MeanFieldModel {
        builtin_model(ModelFamily::Free, &[]).unwrap()
    }

    #[test]
    fn bernoulli_is_smooth_through_zero() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(1e-9) - (1.0 - 0.5e-9)).abs() < 1e-15);
        assert!((bernoulli(2.0) - 2.0 / 2f64.exp_m1()).abs() < 1e-15);
        assert!((bernoulli(-2.0) - bernoulli(2.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn step_conserves_mass_and_positivity() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let g = Grid::new(-6.0, 6.0, 600).unwrap();
        let mut nu = GridMeasure::gaussian(g, 1.0, 0.5).unwrap();
        for _ in 0..200 {
            let (next, corr) = step_with_correction(&cw, &nu, 1e-2).unwrap();
            assert!(corr < MASS_TOLERANCE);
            assert!((next.mass() - 1.0).abs() < 1e-12);
            assert!(next.density.iter().all(|&d| d >= 0.0));
            nu = next;
        }
    }

    #[test]
    fn invariant_measure_is_stationary() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let g = Grid::new(-6.0, 6.0, 600).unwrap();
        let start = GridMeasure::gaussian(g, 1.0, 0.5).unwrap();
        let inf = solve_invariant(&cw, g, &InvariantOptions { init: Some(start), ..Default::default() }).unwrap().measure;
        let next = mckv_step(&cw, &inf, 1e-3).unwrap();
        assert!(next.l1_distance(&inf) < 1e-11, "{}", next.l1_distance(&inf));
    }

    #[test]
    fn ou_variance_follows_exact_solution() {
        let g = Grid::new(-12.0, 12.0, 1200).unwrap();
        let nu0 = GridMeasure::gaussian(g, 0.0, 4.0).unwrap();
        let alpha = reference_measure(&ou(), g).unwrap();
        let opts = EvolveOptions { t_end: 2.0, dt: 1e-3, record_every: 50, ..Default::default() };
        let trace = evolve_and_trace(&ou(), &nu0, &alpha, &opts).unwrap();
        for p in &trace.points {
            let exact = 1.0 + 3.0 * (-2.0 * p.t).exp();
            assert!((p.variance - exact).abs() / exact < 5e-3, "t={} {} vs {exact}", p.t, p.variance);
        }
        assert!(trace.max_mass_correction < MASS_TOLERANCE);
        assert!(trace.max_free_energy_increase <= 1e-10);
    }

    #[test]
    fn ou_entropy_decays_at_rate_two() {
        let g = Grid::new(-10.0, 12.0, 1100).unwrap();
        let nu0 = GridMeasure::gaussian(g, 2.0, 1.0).unwrap();
        let alpha = reference_measure(&ou(), g).unwrap();
        let opts = EvolveOptions { t_end: 10.0, dt: 1e-3, record_every: 100, rho_ls: Some(1.0), certified: true, ..Default::default() };
        let trace = evolve_and_trace(&ou(), &nu0, &alpha, &opts).unwrap();
        assert!((trace.points[0].h_w - 2.0).abs() < 1e-3);
        let fit = trace.fitted_rate.unwrap();
        assert!((fit.rate - 2.0).abs() < 0.05, "{fit:?}");
        assert!(trace.all_checks_pass());
        for (t, r) in trace.dissipation_ratios().into_iter().filter(|(t, _)| *t < 5.0) {
            assert!((r - 1.0).abs() < 0.02, "t={t} ratio {r}");
        }
    }

    #[test]
    fn starting_at_the_limit_stays_there() {
        let g = Grid::new(-8.0, 8.0, 400).unwrap();
        let alpha = reference_measure(&ou(), g).unwrap();
        let opts = EvolveOptions { t_end: 1.0, dt: 1e-2, record_every: 10, rho_ls: Some(1.0), ..Default::default() };
        let trace = evolve_and_trace(&ou(), &alpha, &alpha, &opts).unwrap();
        // W_2 is the square root of a rounding-level quantity here.
        for p in &trace.points {
            assert!(p.h_w.abs() < 1e-14 && p.i_w < 1e-14 && p.w2 < 1e-8, "{p:?}");
        }
        assert!(trace.all_checks_pass());
        assert!(trace.fitted_rate.is_none());
    }

    #[test]
    fn narrow_domain_reports_leak() {
        let g = Grid::new(-3.0, 3.0, 200).unwrap();
        let nu = GridMeasure::from_weights(g, vec![1.0; 200]);
        assert!(matches!(nu, Err(Error::MassLeak { .. })));
    }
}
