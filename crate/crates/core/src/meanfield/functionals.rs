use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::grid::{convolve_density, effective_potential, interaction_convolution, potential_on_grid, reference_measure, GridMeasure};
use crate::potentials::MeanFieldModel;
use crate::{Error, Result};

/// Densities below this are treated as zero before taking logarithms.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `H(nu | alpha) = sum nu log(nu / alpha) dx` with `0 log 0 = 0`.
pub fn relative_entropy(nu: &GridMeasure, reference: &GridMeasure) -> Result<f64> {
    kl_divergence(nu, reference, None)
}

/// `log q_i = offset - potential_i` for a Gibbs density `q` stored on the grid.
///
/// Far in the tails `exp(-potential)` underflows while the density it stands
/// for is still positive, so the log is recovered from the potential there.
struct LogGibbs<'a> {
    potential: &'a [f64],
    offset: f64,
}

impl<'a> LogGibbs<'a> {
    fn new(density: &[f64], potential: &'a [f64]) -> Self {
        let peak = (0..density.len()).max_by(|&a, &b| density[a].total_cmp(&density[b])).unwrap_or(0);
        Self { potential, offset: density[peak].ln() + potential[peak] }
    }

    fn at(&self, i: usize) -> f64 {
        self.offset - self.potential[i]
    }
}

fn kl_divergence(nu: &GridMeasure, reference: &GridMeasure, log_tail: Option<&LogGibbs<'_>>) -> Result<f64> {
    let dx = nu.grid.dx();
    let mut acc = 0.0;
    for (i, (&p, &q)) in nu.density.iter().zip(&reference.density).enumerate() {
        if p <= DENSITY_FLOOR {
            // Cancels this cell's share of the mass correction below.
            acc += q;
            continue;
        }
        if q <= DENSITY_FLOOR {
            let log_q = log_tail.ok_or(Error::UnboundedEntropy { cell: i })?.at(i);
            acc += p * (p.ln() - log_q - 1.0) + q;
            continue;
        }
        // p log(p/q) - p + q is nonnegative termwise, which keeps the sum
        // accurate when nu is close to the reference. Far below q the ratio
        // form would round 1 + t to zero, so use logs there.
        let r = p / q;
        acc += if r < 0.5 {
            p * (p.ln() - q.ln()) - p + q
        } else {
            let t = r - 1.0;
            q * (r * t.ln_1p() - t)
        };
    }
    // Masses agree up to rounding; account for the difference anyway.
    Ok(acc * dx + (nu.mass() - reference.mass()))
}

/// `1/2 int int W dnu dnu`.
pub fn interaction_energy(model: &MeanFieldModel, nu: &GridMeasure) -> Result<f64> {
    let conv = interaction_convolution(model, nu)?;
    Ok(0.5 * nu.density.iter().zip(&conv.value).map(|(d, w)| d * w).sum::<f64>() * nu.grid.dx())
}

/// Free energy `E_f(nu) = H(nu | alpha) + 1/2 int int W dnu dnu`.
pub fn free_energy(model: &MeanFieldModel, nu: &GridMeasure) -> Result<f64> {
    let alpha = reference_measure(model, nu.grid)?;
    let v = potential_on_grid(model, &nu.grid);
    let kl = kl_divergence(nu, &alpha, Some(&LogGibbs::new(&alpha.density, &v)))?;
    Ok(kl + interaction_energy(model, nu)?)
}

/// Mean-field entropy `H_W(nu) = E_f(nu) - E_f(nu_inf)`.
///
/// Evaluated through the exact rearrangement
/// `H(nu | nu_inf) + 1/2 <nu - nu_inf, W * (nu - nu_inf)> + <nu - nu_inf, psi>`
/// with `psi = log nu_inf + V + W * nu_inf`. At a fixed point `psi` is constant
/// and the last term vanishes, so small values of `H_W` are computed without
/// cancellation.
pub fn mean_field_entropy(model: &MeanFieldModel, nu: &GridMeasure, nu_inf: &GridMeasure) -> Result<f64> {
    let grid = nu.grid;
    let dx = grid.dx();
    let u = effective_potential(model, nu_inf)?;
    let log_inf = LogGibbs::new(&nu_inf.density, &u);
    let kl = kl_divergence(nu, nu_inf, Some(&log_inf))?;
    let diff: Vec<f64> = nu.density.iter().zip(&nu_inf.density).map(|(a, b)| a - b).collect();
    let conv = convolve_density(model, &grid, &diff);
    let quadratic = 0.5 * diff.iter().zip(&conv.value).map(|(d, w)| d * w).sum::<f64>() * dx;
    let psi: Vec<f64> = nu_inf
        .density
        .iter()
        .zip(&u)
        .map(|(&d, &v)| if d > DENSITY_FLOOR { d.ln() + v } else { log_inf.offset })
        .collect();
    let center = psi.iter().zip(&nu_inf.density).map(|(p, d)| p * d).sum::<f64>() * dx;
    let linear: f64 = diff.iter().zip(&psi).map(|(d, p)| d * (p - center)).sum();
    Ok(kl + quadratic + linear * dx)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInformation {
    pub value: f64,
    /// Mass of the effective support cells left out of the sum.
    pub excluded_mass: f64,
    /// `true` when the excluded mass exceeds `1e-6`.
    pub flagged: bool,
}

/// `I_W(nu) = 1/4 int |grad log nu + grad V + grad_x W * nu|^2 dnu`.
///
/// The score residual is the central difference of `log nu + V + W * nu` on
/// interior cells of the effective support (cells above `1e-12` of the peak
/// density). It is exactly zero at a discrete fixed point of `Phi`.
pub fn fisher_information(model: &MeanFieldModel, nu: &GridMeasure) -> Result<FisherInformation> {
    let grid = nu.grid;
    let dx = grid.dx();
    let peak = nu.density.iter().copied().fold(0.0, f64::max);
    let support: Vec<usize> = (0..grid.n_cells).filter(|&i| nu.density[i] > 1e-12 * peak).collect();
    let (first, last) = (support[0], support[support.len() - 1]);
    if support.len() != last - first + 1 {
        return Err(Error::SupportTooRough);
    }
    if last - first < 2 {
        return Err(Error::SupportTooRough);
    }
    let v = potential_on_grid(model, &grid);
    let conv = interaction_convolution(model, nu)?;
    let psi: Vec<f64> = (0..grid.n_cells)
        .map(|i| if nu.density[i] > 0.0 { nu.density[i].ln() + v[i] + conv.value[i] } else { 0.0 })
        .collect();
    let mut value = 0.0;
    for i in (first + 1)..last {
        let g = (psi[i + 1] - psi[i - 1]) / (2.0 * dx);
        value += g * g * nu.density[i];
    }
    let included: f64 = nu.density[first + 1..last].iter().sum::<f64>() * dx;
    let excluded_mass = (nu.mass() - included).max(0.0);
    Ok(FisherInformation { value: 0.25 * value * dx, excluded_mass, flagged: excluded_mass > 1e-6 })
}

/// Breakpoints of the quantile function: `(u, x)` at every cell edge.
fn quantile_nodes(nu: &GridMeasure) -> (Vec<f64>, Vec<f64>) {
    let cdf = nu.edge_cdf();
    let edges = (0..=nu.grid.n_cells).map(|k| nu.grid.edge(k)).collect();
    (cdf, edges)
}

/// Quantile of the piecewise-linear CDF on the cell containing `u_mid`,
/// evaluated at `u`.
fn quantile_on_piece(cdf: &[f64], edges: &[f64], u_mid: f64, u: f64) -> f64 {
    let n = cdf.len() - 1;
    let k = cdf.partition_point(|&c| c <= u_mid).clamp(1, n) - 1;
    let width = cdf[k + 1] - cdf[k];
    if width <= 0.0 {
        return edges[k];
    }
    edges[k] + (u - cdf[k]) / width * (edges[k + 1] - edges[k])
}

/// Exact `(W_1, W_2^2)` between two piecewise-uniform densities, from the
/// merged breakpoints of their quantile functions (both quantiles are linear
/// between consecutive breakpoints).
fn quantile_distances(a: &GridMeasure, b: &GridMeasure) -> (f64, f64) {
    let (ca, ea) = quantile_nodes(a);
    let (cb, eb) = quantile_nodes(b);
    let mut us: Vec<f64> = ca.iter().chain(&cb).copied().collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    let (mut w1, mut w2) = (0.0, 0.0);
    for pair in us.windows(2) {
        let (u0, u1) = (pair[0], pair[1]);
        let len = u1 - u0;
        if len <= 0.0 {
            continue;
        }
        let mid = 0.5 * (u0 + u1);
        let d0 = quantile_on_piece(&ca, &ea, mid, u0) - quantile_on_piece(&cb, &eb, mid, u0);
        let d1 = quantile_on_piece(&ca, &ea, mid, u1) - quantile_on_piece(&cb, &eb, mid, u1);
        w2 += len * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
        w1 += if d0 * d1 >= 0.0 {
            0.5 * len * (d0.abs() + d1.abs())
        } else {
            0.5 * len * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
        };
    }
    (w1, w2)
}

/// `W_2` between two 1-D grid measures (grids may differ).
pub fn wasserstein2_1d(a: &GridMeasure, b: &GridMeasure) -> f64 {
    quantile_distances(a, b).1.max(0.0).sqrt()
}

/// `W_1 = int |F_a - F_b| dx`.
pub fn wasserstein1_1d(a: &GridMeasure, b: &GridMeasure) -> f64 {
    quantile_distances(a, b).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::grid::{Grid, GridMeasure};
    use crate::potentials::{builtin_model, ModelFamily};
    use crate::rng::{SequentialRng, StreamKey};

    fn grid() -> Grid {
        Grid::new(-10.0, 10.0, 2000).unwrap()
    }

    #[test]
    fn entropy_is_finite_when_nu_is_far_below_the_reference() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let a = reference_measure(&free, grid()).unwrap();
        let nu = GridMeasure::gaussian(grid(), 1.5, 0.7).unwrap();
        // KL(N(1.5, 0.7) | N(0, 1)) = (0.7 + 2.25 - 1 - ln 0.7) / 2.
        let exact = 0.5 * (0.7 + 2.25 - 1.0 - 0.7f64.ln());
        assert!((relative_entropy(&nu, &a).unwrap() - exact).abs() < 1e-9);
    }

    #[test]
    fn entropy_survives_reference_underflow() {
        // exp(-V) underflows near the edges of [-8, 8] for the double well,
        // where a Gaussian start still has representable mass.
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let wide = Grid::new(-8.0, 8.0, 1600).unwrap();
        let narrow = Grid::new(-6.0, 7.0, 1300).unwrap();
        assert!(reference_measure(&cw, wide).unwrap().density[0] == 0.0);
        let on = |g| {
            let nu = GridMeasure::gaussian(g, 1.0, 0.5).unwrap();
            let alpha = reference_measure(&cw, g).unwrap();
            (free_energy(&cw, &nu).unwrap(), mean_field_entropy(&cw, &nu, &alpha).unwrap())
        };
        let (a, b) = (on(wide), on(narrow));
        assert!((a.0 - b.0).abs() < 1e-9, "{a:?} {b:?}");
        assert!((a.1 - b.1).abs() < 1e-9, "{a:?} {b:?}");
        assert!(relative_entropy(&GridMeasure::gaussian(wide, 1.0, 0.5).unwrap(), &reference_measure(&cw, wide).unwrap()).is_err());
    }

    #[test]
    fn free_energy_of_reference_vanishes() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let a = reference_measure(&free, grid()).unwrap();
        assert!(free_energy(&free, &a).unwrap().abs() < 1e-14);
        assert!(mean_field_entropy(&free, &a, &a).unwrap().abs() < 1e-14);
    }

    #[test]
    fn gaussian_kl_and_interaction_energy() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let a = reference_measure(&free, grid()).unwrap();
        for m in [0.3, 1.0, 2.0] {
            let nu = GridMeasure::gaussian(grid(), m, 1.0).unwrap();
            assert!((free_energy(&free, &nu).unwrap() - m * m / 2.0).abs() < 1e-8);
            assert!((mean_field_entropy(&free, &nu, &a).unwrap() - m * m / 2.0).abs() < 1e-8);
        }
        let beta = 0.4;
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let nu = GridMeasure::gaussian(grid(), 0.8, 1.7).unwrap();
        let s2: f64 = 1.7;
        let kl = 0.5 * (s2 + 0.64 - 1.0 - s2.ln());
        assert!((free_energy(&g, &nu).unwrap() - (kl + beta * 0.64 / 2.0)).abs() < 1e-8);
    }

    #[test]
    fn stable_entropy_matches_free_energy_difference() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let g = Grid::new(-7.0, 7.0, 1000).unwrap();
        let alpha = reference_measure(&cw, g).unwrap();
        // alpha is the fixed point by symmetry.
        let nu = GridMeasure::gaussian(g, 1.0, 0.5).unwrap();
        let direct = free_energy(&cw, &nu).unwrap() - free_energy(&cw, &alpha).unwrap();
        let stable = mean_field_entropy(&cw, &nu, &alpha).unwrap();
        assert!((direct - stable).abs() < 1e-12, "{direct} vs {stable}");
        // The rearrangement is exact even away from a fixed point.
        let other = GridMeasure::gaussian(g, -0.5, 0.8).unwrap();
        let direct = free_energy(&cw, &nu).unwrap() - free_energy(&cw, &other).unwrap();
        assert!((direct - mean_field_entropy(&cw, &nu, &other).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn unbounded_entropy_is_reported() {
        let g = Grid::new(-10.0, 10.0, 200).unwrap();
        let mut narrow = GridMeasure::gaussian(g, 0.0, 0.01).unwrap();
        narrow.density.iter_mut().for_each(|d| {
            if *d < 1e-300 {
                *d = 0.0
            }
        });
        let mut wide = GridMeasure::gaussian(g, 0.0, 1.0).unwrap();
        wide.density[150] = 1e-3;
        assert!(matches!(relative_entropy(&wide, &narrow), Err(Error::UnboundedEntropy { .. })));
    }

    #[test]
    fn fisher_examples() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        let a = reference_measure(&free, grid()).unwrap();
        assert!(fisher_information(&free, &a).unwrap().value.abs() < 1e-20);
        for m in [0.5, 1.5] {
            let nu = GridMeasure::gaussian(grid(), m, 1.0).unwrap();
            let fi = fisher_information(&free, &nu).unwrap();
            assert!((fi.value - m * m / 4.0).abs() < 1e-8, "{fi:?}");
            assert!(!fi.flagged);
        }
    }

    #[test]
    fn fisher_converges_at_second_order() {
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let coarse = Grid::new(-6.0, 6.0, 300).unwrap();
        let exact_at = |g: Grid| {
            let nu = GridMeasure::from_fn(g, |x| (-(x - 0.7f64).powi(2) - 0.3 * x.powi(4)).exp()).unwrap();
            fisher_information(&cw, &nu).unwrap().value
        };
        let (a, b, c) = (exact_at(coarse), exact_at(coarse.refined()), exact_at(coarse.refined().refined()));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn disconnected_support_is_rejected() {
        let g = Grid::new(-10.0, 10.0, 200).unwrap();
        let nu = GridMeasure::from_fn(g, |x| if (x.abs() - 3.0).abs() < 1.0 { 1.0 } else { 0.0 }).unwrap();
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        assert!(matches!(fisher_information(&free, &nu), Err(Error::SupportTooRough)));
    }

    #[test]
    fn wasserstein_examples() {
        let a = GridMeasure::gaussian(grid(), 0.0, 1.0).unwrap();
        assert_eq!(wasserstein2_1d(&a, &a), 0.0);
        for m in [0.1, 0.5, 2.0] {
            let b = GridMeasure::gaussian(grid(), m, 1.0).unwrap();
            assert!((wasserstein2_1d(&a, &b) - m).abs() < 1e-4);
            assert!((wasserstein1_1d(&a, &b) - m).abs() < 1e-4);
        }
        let g = Grid::new(-5.0, 5.0, 100).unwrap();
        let point = |x: f64| {
            let mut w = alloc::vec![0.0; 100];
            w[((x + 5.0) / 0.1) as usize] = 1.0;
            GridMeasure { grid: g, density: w.into_iter().map(|v| v / 0.1).collect() }
        };
        assert!((wasserstein2_1d(&point(-1.23), &point(2.5)) - 3.73).abs() <= 0.1);
    }

    #[test]
    fn wasserstein_across_grids() {
        let a = GridMeasure::gaussian(grid(), 0.3, 1.0).unwrap();
        let b = GridMeasure::gaussian(Grid::new(-8.0, 9.0, 1300).unwrap(), 0.3, 1.0).unwrap();
        assert!(wasserstein2_1d(&a, &b) < 1e-3);
    }

    #[test]
    fn metric_axioms_on_random_measures() {
        let g = Grid::new(-5.0, 5.0, 64).unwrap();
        let mut rng = SequentialRng::new(StreamKey::new(77, 0));
        let mut random = || {
            let w: Vec<f64> = (0..64)
                .map(|i| if i == 0 || i == 63 { 0.0 } else { rng.uniform().powi(3) })
                .collect();
            GridMeasure::from_weights(g, w).unwrap()
        };
        for _ in 0..100 {
            let (a, b, c) = (random(), random(), random());
            let (ab, ba) = (wasserstein2_1d(&a, &b), wasserstein2_1d(&b, &a));
            assert_eq!(ab, ba);
            assert!(ab <= wasserstein2_1d(&a, &c) + wasserstein2_1d(&c, &b) + 1e-10);
            let w1 = wasserstein1_1d(&a, &b);
            assert!(w1 <= wasserstein1_1d(&a, &c) + wasserstein1_1d(&c, &b) + 1e-10);
            assert!(w1 <= ab + 1e-12);
        }
    }

    #[test]
    fn w1_equals_cdf_difference_integral() {
        let g = Grid::new(-20.0, 20.0, 400).unwrap();
        let a = GridMeasure::gaussian(g, -0.4, 0.6).unwrap();
        let b = GridMeasure::from_fn(g, |x| (-(x - 0.5f64).abs()).exp() * (-x * x / 8.0).exp()).unwrap();
        // Direct integral of |F_a - F_b| over the piecewise linear CDFs.
        let (fa, fb) = (a.edge_cdf(), b.edge_cdf());
        let dx = g.dx();
        let mut direct = 0.0;
        for k in 0..400 {
            let (d0, d1) = (fa[k] - fb[k], fa[k + 1] - fb[k + 1]);
            direct += if d0 * d1 >= 0.0 {
                0.5 * dx * (d0.abs() + d1.abs())
            } else {
                0.5 * dx * (d0 * d0 + d1 * d1) / (d0.abs() + d1.abs())
            };
        }
        assert!((wasserstein1_1d(&a, &b) - direct).abs() < 1e-12);
    }
}
