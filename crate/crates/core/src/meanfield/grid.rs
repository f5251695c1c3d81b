use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::potentials::{Interaction, MeanFieldModel, RadialKernel};
use crate::{Error, Result};

/// Boundary cells holding more than this fraction of the mass signal that the
/// domain is too small.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-8;

/// A uniform cell-centred grid on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self> {
        if !(x_max > x_min) || n_cells < 3 {
            return Err(Error::InvalidParameter { name: "grid", reason: "need x_max > x_min and at least 3 cells".into() });
        }
        Ok(Self { x_min, x_max, n_cells })
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    pub fn edge(&self, k: usize) -> f64 {
        self.x_min + k as f64 * self.dx()
    }

    /// The same interval with twice as many cells.
    pub fn refined(&self) -> Self {
        Self { n_cells: 2 * self.n_cells, ..*self }
    }
}

/// A probability density, piecewise constant on the cells of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    pub grid: Grid,
    pub density: Vec<f64>,
}

impl GridMeasure {
    /// Normalizes nonnegative cell weights into a probability density.
    pub fn from_weights(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.n_cells {
            return Err(Error::DimensionMismatch { expected: grid.n_cells, actual: weights.len() });
        }
        if let Some((cell, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::NegativeDensity { cell, value });
        }
        let total: f64 = weights.iter().sum::<f64>() * grid.dx();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter { name: "density", reason: "zero total mass".into() });
        }
        let density = weights.into_iter().map(|w| w / total).collect();
        let m = Self { grid, density };
        m.check_boundary()?;
        Ok(m)
    }

    /// Samples `f` at the cell centres and normalizes.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_weights(grid, grid.centers().into_iter().map(f).collect())
    }

    /// Normalized `exp(-u)`, shifted by `min u` to avoid underflow.
    pub fn boltzmann(grid: Grid, u: &[f64]) -> Result<Self> {
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        Self::from_weights(grid, u.iter().map(|v| (lo - v).exp()).collect())
    }

    pub fn gaussian(grid: Grid, mean: f64, variance: f64) -> Result<Self> {
        Self::from_fn(grid, |x| (-(x - mean) * (x - mean) / (2.0 * variance)).exp())
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.dx()
    }

    pub fn boundary_mass(&self) -> f64 {
        (self.density[0] + self.density[self.grid.n_cells - 1]) * self.grid.dx()
    }

    pub fn check_boundary(&self) -> Result<()> {
        let mass = self.boundary_mass();
        if mass < BOUNDARY_MASS_LIMIT {
            Ok(())
        } else {
            Err(Error::MassLeak { mass })
        }
    }

    /// `int x^k dnu`, using cell-centre values.
    pub fn moment(&self, k: i32) -> f64 {
        let dx = self.grid.dx();
        self.density.iter().enumerate().map(|(i, d)| d * self.grid.center(i).powi(k)).sum::<f64>() * dx
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Variance from the cell-centre values.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let dx = self.grid.dx();
        self.density.iter().enumerate().map(|(i, d)| d * (self.grid.center(i) - m).powi(2)).sum::<f64>() * dx
    }

    /// `sum |nu - other| dx`.
    pub fn l1_distance(&self, other: &GridMeasure) -> f64 {
        self.density.iter().zip(&other.density).map(|(a, b)| (a - b).abs()).sum::<f64>() * self.grid.dx()
    }

    /// Cumulative distribution at the cell edges (`n_cells + 1` values).
    pub fn edge_cdf(&self) -> Vec<f64> {
        let dx = self.grid.dx();
        let mut cdf = Vec::with_capacity(self.grid.n_cells + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        for d in &self.density {
            acc += d * dx;
            cdf.push(acc);
        }
        let total = acc;
        for v in &mut cdf {
            *v /= total;
        }
        cdf
    }

    /// Histogram of point samples with one bin per cell; samples outside the
    /// grid are counted in the boundary cells.
    pub fn histogram(grid: Grid, samples: &[f64]) -> Result<Self> {
        let mut counts = vec![0.0; grid.n_cells];
        let dx = grid.dx();
        for &x in samples {
            let k = ((x - grid.x_min) / dx).floor();
            let k = if k < 0.0 { 0 } else { (k as usize).min(grid.n_cells - 1) };
            counts[k] += 1.0;
        }
        let total: f64 = counts.iter().sum::<f64>() * dx;
        if !(total > 0.0) {
            return Err(Error::InvalidParameter { name: "samples", reason: "empty sample".into() });
        }
        Ok(Self { grid, density: counts.into_iter().map(|c| c / total).collect() })
    }

    /// Inverse CDF with linear interpolation inside cells.
    pub fn quantile(&self, u: f64) -> f64 {
        InverseCdf::new(self).eval(u)
    }
}

/// Precomputed inverse CDF of a [`GridMeasure`], for repeated sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseCdf {
    grid: Grid,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn new(measure: &GridMeasure) -> Self {
        Self { grid: measure.grid, cdf: measure.edge_cdf() }
    }

    pub fn eval(&self, u: f64) -> f64 {
        let cdf = &self.cdf;
        let k = cdf.partition_point(|&c| c <= u).clamp(1, self.grid.n_cells) - 1;
        let width = cdf[k + 1] - cdf[k];
        let t = if width > 0.0 { ((u - cdf[k]) / width).clamp(0.0, 1.0) } else { 0.5 };
        self.grid.edge(k) + t * self.grid.dx()
    }
}

fn require_1d(model: &MeanFieldModel) -> Result<()> {
    if model.dim == 1 {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: 1, actual: model.dim })
    }
}

/// `V` at the cell centres.
pub fn potential_on_grid(model: &MeanFieldModel, grid: &Grid) -> Vec<f64> {
    grid.centers().iter().map(|&x| model.v(&[x])).collect()
}

/// The reference measure `alpha = exp(-V) / C` on the grid.
pub fn reference_measure(model: &MeanFieldModel, grid: Grid) -> Result<GridMeasure> {
    require_1d(model)?;
    GridMeasure::boltzmann(grid, &potential_on_grid(model, &grid))
}

/// `(W * nu)(x_i)` and its derivative in `x` at every cell centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Convolution {
    pub value: Vec<f64>,
    pub derivative: Vec<f64>,
}

/// Convolution of `W` against a signed cell density on `grid` (midpoint rule).
///
/// Bilinear, quadratic radial and Fourier kernels reduce to a few moments of
/// the density; other kernels use the `O(n^2)` double sum.
pub fn convolve_density(model: &MeanFieldModel, grid: &Grid, density: &[f64]) -> Convolution {
    let dx = grid.dx();
    let xs = grid.centers();
    let moment = |f: &dyn Fn(f64) -> f64| -> f64 { xs.iter().zip(density).map(|(&x, d)| f(x) * d).sum::<f64>() * dx };
    let mass = moment(&|_| 1.0);
    match &model.interaction {
        Interaction::Bilinear { coupling } => {
            let j = coupling[0];
            let m = moment(&|x| x);
            Convolution { value: xs.iter().map(|x| j * m * x).collect(), derivative: vec![j * m; xs.len()] }
        }
        Interaction::Radial(RadialKernel::Quadratic { curvature }) => {
            let c = *curvature;
            let (m, s) = (moment(&|x| x), moment(&|x| x * x));
            Convolution {
                value: xs.iter().map(|x| 0.5 * c * (x * x * mass - 2.0 * m * x + s)).collect(),
                derivative: xs.iter().map(|x| c * (x * mass - m)).collect(),
            }
        }
        Interaction::Fourier { curvature, atoms } => {
            let c = *curvature;
            let (m, s) = (moment(&|x| x), moment(&|x| x * x));
            let mut value: Vec<f64> = xs.iter().map(|x| 0.5 * c * (x * x * mass - 2.0 * m * x + s)).collect();
            let mut derivative: Vec<f64> = xs.iter().map(|x| c * (x * mass - m)).collect();
            for atom in atoms {
                let y = atom.frequency[0];
                let cs = moment(&|z| (y * z).cos());
                let sn = moment(&|z| (y * z).sin());
                for (i, &x) in xs.iter().enumerate() {
                    let (sx, cx) = (y * x).sin_cos();
                    // cos(y(x - z)) = cos(yx) cos(yz) + sin(yx) sin(yz)
                    value[i] += 2.0 * atom.weight * (cx * cs + sx * sn);
                    derivative[i] += 2.0 * atom.weight * y * (-sx * cs + cx * sn);
                }
            }
            Convolution { value, derivative }
        }
        _ => {
            let n = xs.len();
            let mut value = vec![0.0; n];
            let mut derivative = vec![0.0; n];
            for i in 0..n {
                let (mut v, mut g) = (0.0, 0.0);
                for j in 0..n {
                    if density[j] != 0.0 {
                        v += model.w(&[xs[i]], &[xs[j]]) * density[j];
                        g += model.w_prime(xs[i], xs[j]) * density[j];
                    }
                }
                value[i] = v * dx;
                derivative[i] = g * dx;
            }
            Convolution { value, derivative }
        }
    }
}

/// `x -> int W(x, y) dnu(y)` at the cell centres, with its derivative.
pub fn interaction_convolution(model: &MeanFieldModel, nu: &GridMeasure) -> Result<Convolution> {
    require_1d(model)?;
    Ok(convolve_density(model, &nu.grid, &nu.density))
}

/// Effective potential `V + W * nu` at the cell centres.
pub fn effective_potential(model: &MeanFieldModel, nu: &GridMeasure) -> Result<Vec<f64>> {
    let conv = interaction_convolution(model, nu)?;
    Ok(potential_on_grid(model, &nu.grid).into_iter().zip(conv.value).map(|(v, w)| v + w).collect())
}

/// `Phi(nu) = exp(-V - W * nu) / Z'`.
pub fn phi_map(model: &MeanFieldModel, nu: &GridMeasure) -> Result<GridMeasure> {
    GridMeasure::boltzmann(nu.grid, &effective_potential(model, nu)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{builtin_model, ModelFamily};

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 2000).unwrap()
    }

    #[test]
    fn reference_of_quadratic_is_standard_normal() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let a = reference_measure(&free, grid()).unwrap();
        assert!(a.mean().abs() < 1e-12);
        assert!((a.variance() - 1.0).abs() < 1e-6, "{}", a.variance());
        assert!((a.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_is_invariant_under_constant_shift() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let a = reference_measure(&cw, grid()).unwrap();
        let u: Vec<f64> = potential_on_grid(&cw, &grid()).iter().map(|v| v + 123.0).collect();
        let b = GridMeasure::boltzmann(grid(), &u).unwrap();
        assert!(a.l1_distance(&b) < 1e-12);
        assert!(a.moment(1).abs() < 1e-10 && a.moment(3).abs() < 1e-10);
    }

    #[test]
    fn narrow_grid_leaks_mass() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        assert!(matches!(reference_measure(&free, Grid::new(-2.0, 2.0, 100).unwrap()), Err(Error::MassLeak { .. })));
    }

    #[test]
    fn convolution_examples() {
        let nu = GridMeasure::gaussian(grid(), 0.7, 1.3).unwrap();
        let (m, s) = (nu.moment(1), nu.moment(2));
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        assert!(interaction_convolution(&free, &nu).unwrap().value.iter().all(|v| *v == 0.0));
        let g = builtin_model(ModelFamily::Gaussian, &[0.4]).unwrap();
        let conv = interaction_convolution(&g, &nu).unwrap();
        for (i, x) in grid().centers().into_iter().enumerate() {
            assert!((conv.value[i] - 0.4 * m * x).abs() < 1e-12);
        }
        let r = builtin_model(ModelFamily::RadialQuadratic, &[1.0, 0.6]).unwrap();
        let conv = interaction_convolution(&r, &nu).unwrap();
        for (i, x) in grid().centers().into_iter().enumerate().step_by(97) {
            assert!((conv.value[i] - 0.3 * (x * x - 2.0 * m * x + s)).abs() < 1e-10);
        }
    }

    #[test]
    fn fast_fourier_convolution_matches_direct_sum() {
        let f = builtin_model(ModelFamily::Fourier, &[1.0, 0.3, 0.2, 1.3, 0.1, 0.4]).unwrap();
        let g = Grid::new(-6.0, 6.0, 300).unwrap();
        let nu = GridMeasure::gaussian(g, 0.4, 0.8).unwrap();
        let fast = interaction_convolution(&f, &nu).unwrap();
        let general = MeanFieldModel::new(1, f.confinement.clone(), Interaction::General(alloc::sync::Arc::new(AsPair(f.clone()))));
        let slow = interaction_convolution(&general, &nu).unwrap();
        for i in 0..300 {
            assert!((fast.value[i] - slow.value[i]).abs() < 1e-11);
            assert!((fast.derivative[i] - slow.derivative[i]).abs() < 1e-11);
        }
    }

    struct AsPair(MeanFieldModel);
    impl crate::potentials::PairPotential for AsPair {
        fn value(&self, x: &[f64], y: &[f64]) -> f64 {
            self.0.w(x, y)
        }
        fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
            self.0.grad_w_x(x, y, out)
        }
        fn cross_hessian(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
            self.0.cross_hessian_w(x, y, out)
        }
    }

    #[test]
    fn phi_examples() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let nu = GridMeasure::gaussian(grid(), 1.5, 0.5).unwrap();
        let a = reference_measure(&free, grid()).unwrap();
        assert!(phi_map(&free, &nu).unwrap().l1_distance(&a) < 1e-14);
        let beta = 0.6;
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let out = phi_map(&g, &nu).unwrap();
        assert!((out.mean() + beta * nu.mean()).abs() < 1e-10);
        assert!((out.variance() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let nu = GridMeasure::gaussian(grid(), 0.0, 1.0).unwrap();
        assert!(nu.quantile(0.5).abs() < 1e-10);
        assert!((nu.quantile(0.975) - 1.959_963_985).abs() < 1e-4);
    }
}
