use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::functionals::wasserstein1_1d;
use super::grid::{phi_map, potential_on_grid, reference_measure, Grid, GridMeasure};
use crate::potentials::MeanFieldModel;
use crate::{Error, Result};

/// One application of `Phi` during [`solve_invariant`].
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `|Phi(nu_k) - nu_k|_1`.
    pub residual_l1: f64,
    /// `W_1(nu_{k+1}, nu_k)`.
    pub w1_step: f64,
    /// `w1_step / previous w1_step`, recorded while the previous step is large
    /// enough for the ratio to be meaningful.
    pub factor: Option<f64>,
}

/// Steps below this are dominated by rounding and give no contraction information.
pub const FACTOR_STEP_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Starting measure; the reference measure `alpha` when absent.
    pub init: Option<GridMeasure>,
    /// Zegarlinski coefficient of the model, used to certify uniqueness.
    pub gamma0: Option<f64>,
}

impl Default for InvariantOptions {
    fn default() -> Self {
        Self { tol: 1e-12, max_iter: 500, init: None, gamma0: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantSolution {
    pub measure: GridMeasure,
    pub history: Vec<IterationRecord>,
    /// `true` when `gamma0 < 1` was supplied, so the fixed point is the unique
    /// minimiser of the free energy.
    pub certified: bool,
}

impl InvariantSolution {
    pub fn max_factor(&self) -> Option<f64> {
        self.history.iter().filter_map(|r| r.factor).fold(None, |m, f| Some(m.map_or(f, |m: f64| m.max(f))))
    }
}

/// Iterates `nu <- Phi(nu)` until `|Phi(nu) - nu|_1 < tol`.
pub fn solve_invariant(model: &MeanFieldModel, grid: Grid, opts: &InvariantOptions) -> Result<InvariantSolution> {
    let mut nu = match &opts.init {
        Some(m) if m.grid == grid => m.clone(),
        Some(_) => return Err(Error::InvalidParameter { name: "init", reason: "initial measure lives on another grid".into() }),
        None => reference_measure(model, grid)?,
    };
    let mut history = Vec::new();
    let mut previous_step: Option<f64> = None;
    for iteration in 0..opts.max_iter {
        let next = phi_map(model, &nu)?;
        let residual_l1 = next.l1_distance(&nu);
        let w1_step = wasserstein1_1d(&next, &nu);
        let factor = previous_step.filter(|&p| p > FACTOR_STEP_FLOOR && w1_step > FACTOR_STEP_FLOOR).map(|p| w1_step / p);
        history.push(IterationRecord { iteration, residual_l1, w1_step, factor });
        previous_step = Some(w1_step);
        nu = next;
        if residual_l1 < opts.tol {
            let certified = opts.gamma0.is_some_and(|g| g < 1.0);
            return Ok(InvariantSolution { measure: nu, history, certified });
        }
    }
    let residual = history.last().map_or(f64::INFINITY, |r| r.residual_l1);
    Err(Error::NoConvergence { iterations: opts.max_iter, residual, history })
}

/// Fixed points reached from the symmetric start `alpha` and from starts
/// tilted by `exp(+-tilt x)`. Distinct results (by `W_1 > separation`) are
/// returned without ranking; starts that fail to converge are skipped.
pub fn find_fixed_points(
    model: &MeanFieldModel,
    grid: Grid,
    opts: &InvariantOptions,
    tilt: f64,
    separation: f64,
) -> Result<Vec<InvariantSolution>> {
    let v = potential_on_grid(model, &grid);
    let xs = grid.centers();
    let mut starts = vec![reference_measure(model, grid)?];
    for sign in [1.0, -1.0] {
        let u: Vec<f64> = v.iter().zip(&xs).map(|(v, x)| v - sign * tilt * x).collect();
        starts.push(GridMeasure::boltzmann(grid, &u)?);
    }
    let mut found: Vec<InvariantSolution> = Vec::new();
    for start in starts {
        let run = InvariantOptions { init: Some(start), ..opts.clone() };
        match solve_invariant(model, grid, &run) {
            Ok(sol) => {
                if found.iter().all(|f| wasserstein1_1d(&f.measure, &sol.measure) > separation) {
                    found.push(sol);
                }
            }
            Err(Error::NoConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{c_lip_m, cross_hessian_sup_norm, zegarlinski_gamma, QuadratureOptions};
    use crate::potentials::{builtin_model, dissipativity_profile, ModelFamily, SamplingBudget};

    fn grid() -> Grid {
        Grid::new(-8.0, 8.0, 1600).unwrap()
    }

    #[test]
    fn free_model_converges_immediately() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let sol = solve_invariant(&free, grid(), &InvariantOptions::default()).unwrap();
        assert_eq!(sol.history.len(), 1);
        let start = GridMeasure::gaussian(grid(), 2.0, 0.3).unwrap();
        let sol = solve_invariant(&free, grid(), &InvariantOptions { init: Some(start), ..Default::default() }).unwrap();
        assert_eq!(sol.history.len(), 2);
    }

    #[test]
    fn gaussian_mean_contracts_at_beta() {
        let beta = -0.6;
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let start = GridMeasure::gaussian(grid(), 1.5, 1.0).unwrap();
        let sol = solve_invariant(&g, grid(), &InvariantOptions { init: Some(start), ..Default::default() }).unwrap();
        assert!(sol.measure.mean().abs() < 1e-10);
        assert!((sol.measure.variance() - 1.0).abs() < 1e-6);
        // Late ratios of tiny steps carry rounding noise.
        for f in sol.history.iter().filter(|r| r.w1_step > 1e-7).filter_map(|r| r.factor) {
            assert!((f - beta.abs()).abs() < 1e-6, "{f}");
        }
    }

    #[test]
    fn curie_weiss_factors_stay_below_gamma0() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let c = c_lip_m(&dissipativity_profile(&cw, &SamplingBudget::default()), &QuadratureOptions::default()).unwrap();
        let gamma0 = zegarlinski_gamma(c, cross_hessian_sup_norm(&cw, &SamplingBudget::default()).value);
        let start = GridMeasure::gaussian(grid(), 1.0, 0.5).unwrap();
        let opts = InvariantOptions { init: Some(start), gamma0: Some(gamma0), ..Default::default() };
        let sol = solve_invariant(&cw, grid(), &opts).unwrap();
        assert!(sol.certified);
        assert!(sol.measure.mean().abs() < 1e-10);
        let worst = sol.max_factor().unwrap();
        assert!(worst <= gamma0 + 5e-3, "{worst} > {gamma0}");
    }

    #[test]
    fn low_temperature_ferromagnet_has_several_fixed_points() {
        // beta K Var_alpha(x) > 1 makes the symmetric state unstable.
        let cw = builtin_model(ModelFamily::CurieWeiss, &[4.0, 0.6]).unwrap();
        let opts = InvariantOptions { max_iter: 2000, ..Default::default() };
        let found = find_fixed_points(&cw, grid(), &opts, 1.0, 1e-6).unwrap();
        assert_eq!(found.len(), 3, "{:?}", found.iter().map(|f| f.measure.mean()).collect::<Vec<_>>());
        assert!(found.iter().all(|f| !f.certified));
        let means: Vec<f64> = found.iter().map(|f| f.measure.mean()).collect();
        assert!(means[0].abs() < 1e-10);
        assert!((means[1] + means[2]).abs() < 1e-8 && means[1] > 0.5);
    }

    #[test]
    fn divergent_iteration_reports_history() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[4.0, 0.6]).unwrap();
        let start = GridMeasure::gaussian(grid(), 0.3, 0.5).unwrap();
        let opts = InvariantOptions { max_iter: 3, init: Some(start), ..Default::default() };
        match solve_invariant(&cw, grid(), &opts) {
            Err(Error::NoConvergence { iterations, history, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 3);
            }
            other => panic!("{other:?}"),
        }
    }
}
