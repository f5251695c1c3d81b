//! The `N`-particle mean-field Langevin system and its Gibbs measure.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::potentials::{Interaction, MeanFieldModel, RadialKernel};
use crate::rng::StreamKey;
use crate::{Error, Result};

mod gap;
mod sampling;

pub use gap::{estimate_spectral_gap, GapEstimate, GapOptions, Observable, RateAtStep};
pub use sampling::{
    estimate_pair_covariance, sample_covariance, sample_mala, sample_ula, CovarianceEstimate, GibbsSampleSet, MalaOptions,
    PairCovariance, Sampler,
};

/// Coordinates larger than this in magnitude are reported as a blowup.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// `N` particles in `R^d` with the state of an Euler–Maruyama integration.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub n: usize,
    pub dim: usize,
    /// Row-major `N x d`.
    pub positions: Vec<f64>,
    pub time: f64,
    pub step: u64,
    pub dt: f64,
    pub key: StreamKey,
    /// Test hook: `false` integrates the deterministic drift only.
    pub noise: bool,
}

impl ParticleEnsemble {
    pub fn new(positions: Vec<f64>, n: usize, dim: usize, dt: f64, key: StreamKey) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter { name: "N", reason: "need at least two particles".into() });
        }
        if positions.len() != n * dim {
            return Err(Error::DimensionMismatch { expected: n * dim, actual: positions.len() });
        }
        if !(dt >= 0.0) {
            return Err(Error::InvalidParameter { name: "dt", reason: "must be nonnegative".into() });
        }
        Ok(Self { n, dim, positions, time: 0.0, step: 0, dt, key, noise: true })
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

/// Writes rows `rows` of the drift into `out` (length `rows.len() * d`).
///
/// Row `i` is `-grad V(x_i) - 1/(N-1) sum_{j != i} grad_x W(x_i, x_j)`. Bilinear
/// and quadratic radial interactions use `O(N)` sums over the configuration;
/// everything else uses the pair loop.
pub fn drift_rows(model: &MeanFieldModel, positions: &[f64], n: usize, rows: core::ops::Range<usize>, out: &mut [f64]) {
    let d = model.dim;
    let scale = 1.0 / (n - 1) as f64;
    let mut total = vec![0.0; d];
    let fast = matches!(
        model.interaction,
        Interaction::Bilinear { .. } | Interaction::Radial(RadialKernel::Quadratic { .. })
    );
    if fast {
        for j in 0..n {
            for k in 0..d {
                total[k] += positions[j * d + k];
            }
        }
    }
    let mut g = vec![0.0; d];
    for (row, i) in rows.enumerate() {
        let xi = &positions[i * d..(i + 1) * d];
        let o = &mut out[row * d..(row + 1) * d];
        model.grad_v(xi, o);
        for v in o.iter_mut() {
            *v = -*v;
        }
        match &model.interaction {
            Interaction::Bilinear { coupling } => {
                for k in 0..d {
                    let s: f64 = (0..d).map(|l| coupling[k * d + l] * (total[l] - xi[l])).sum();
                    o[k] -= scale * s;
                }
            }
            Interaction::Radial(RadialKernel::Quadratic { curvature }) => {
                for k in 0..d {
                    o[k] -= scale * curvature * (n as f64 * xi[k] - total[k]);
                }
            }
            _ => {
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    model.grad_w_x(xi, &positions[j * d..(j + 1) * d], &mut g);
                    for k in 0..d {
                        o[k] -= scale * g[k];
                    }
                }
            }
        }
    }
}

/// Full `N x d` drift.
pub fn drift(model: &MeanFieldModel, positions: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; positions.len()];
    drift_rows(model, positions, n, 0..n, &mut out);
    out
}

/// `H_N(x) = sum_i V(x_i) + 1/(N-1) sum_{i<j} W(x_i, x_j)`.
pub fn hamiltonian(model: &MeanFieldModel, positions: &[f64], n: usize) -> f64 {
    let d = model.dim;
    let confinement: f64 = (0..n).map(|i| model.v(&positions[i * d..(i + 1) * d])).sum();
    let pairs = match &model.interaction {
        Interaction::Bilinear { coupling } => {
            // sum_{i<j} x_i^T J x_j = (S^T J S - sum_i x_i^T J x_i) / 2
            let mut total = vec![0.0; d];
            for j in 0..n {
                for k in 0..d {
                    total[k] += positions[j * d + k];
                }
            }
            let quad = |a: &[f64]| -> f64 {
                let mut acc = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        acc += a[k] * coupling[k * d + l] * a[l];
                    }
                }
                acc
            };
            let diag: f64 = (0..n).map(|i| quad(&positions[i * d..(i + 1) * d])).sum();
            0.5 * (quad(&total) - diag)
        }
        _ => {
            let mut acc = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    acc += model.w(&positions[i * d..(i + 1) * d], &positions[j * d..(j + 1) * d]);
                }
            }
            acc
        }
    };
    confinement + pairs / (n - 1) as f64
}

fn check_finite(positions: &[f64], step: u64) -> Result<()> {
    if positions.iter().all(|x| x.abs() <= BLOWUP_THRESHOLD) {
        Ok(())
    } else {
        Err(Error::Blowup { step })
    }
}

/// One Euler–Maruyama step `x <- x + b(x) dt + sqrt(2 dt) xi`.
///
/// The normals for particle `i` at step `k` come from `(key, k, i)`, so the
/// trajectory does not depend on how the work is split.
pub fn step_euler_maruyama(ens: &mut ParticleEnsemble, model: &MeanFieldModel) -> Result<()> {
    let mut b = drift(model, &ens.positions, ens.n);
    let d = ens.dim;
    let sigma = (2.0 * ens.dt).sqrt();
    let mut xi = vec![0.0; d];
    for i in 0..ens.n {
        if ens.noise {
            ens.key.fill_normals(ens.step, i as u32, &mut xi);
        }
        for k in 0..d {
            let idx = i * d + k;
            b[idx] = ens.positions[idx] + ens.dt * b[idx] + if ens.noise { sigma * xi[k] } else { 0.0 };
        }
    }
    ens.positions = b;
    ens.step += 1;
    ens.time += ens.dt;
    check_finite(&ens.positions, ens.step)
}

/// Advances `steps` Euler–Maruyama steps.
pub fn run_euler_maruyama(ens: &mut ParticleEnsemble, model: &MeanFieldModel, steps: u64) -> Result<()> {
    for _ in 0..steps {
        step_euler_maruyama(ens, model)?;
    }
    Ok(())
}

/// Dense inverse of a small symmetric positive definite matrix (Cholesky).
/// Used to form exact Gaussian covariances from precision matrices.
pub fn spd_inverse(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i * n + j] - (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut inv = vec![0.0; n * n];
    for col in 0..n {
        // Solve L L^T x = e_col.
        let mut y = vec![0.0; n];
        for i in 0..n {
            let rhs = if i == col { 1.0 } else { 0.0 };
            y[i] = (rhs - (0..i).map(|k| l[i * n + k] * y[k]).sum::<f64>()) / l[i * n + i];
        }
        for i in (0..n).rev() {
            let v = (y[i] - ((i + 1)..n).map(|k| l[k * n + i] * inv[k * n + col]).sum::<f64>()) / l[i * n + i];
            inv[i * n + col] = v;
        }
    }
    Some(inv)
}

/// Precision matrix `I + (beta/(N-1)) (1_{i != j})` of the 1-D Gaussian model.
pub fn gaussian_precision(beta: f64, n: usize) -> Vec<f64> {
    let mut a = vec![beta / (n - 1) as f64; n * n];
    for i in 0..n {
        a[i * n + i] = 1.0;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::{builtin_model, ModelFamily};
    use crate::stats;

    #[test]
    fn drift_examples() {
        let free = builtin_model(ModelFamily::Free, &[]).unwrap();
        assert_eq!(drift(&free, &[0.5, -2.0, 1.0], 3), vec![-0.5, 2.0, -1.0]);
        let beta = 0.37;
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let b = drift(&g, &[1.0, -1.0], 2);
        assert!((b[0] - (beta - 1.0)).abs() < 1e-15 && (b[1] - (1.0 - beta)).abs() < 1e-15);
        let cw = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        let x = 0.8;
        for v in drift(&cw, &[x; 5], 5) {
            assert!((v - (-(x * x * x - x) + 0.2 * x)).abs() < 1e-15);
        }
    }

    #[test]
    fn fast_drift_matches_pair_loop() {
        let pos = [0.3, -1.2, 2.0, 0.1, -0.7, 0.9, 1.5, -0.4];
        for (family, params) in [
            (ModelFamily::Gaussian, vec![0.6, 2.0]),
            (ModelFamily::RadialQuadratic, vec![1.0, -0.4, 2.0]),
        ] {
            let m = builtin_model(family, &params).unwrap();
            let n = 4;
            let fast = drift(&m, &pos, n);
            let d = m.dim;
            let mut g = vec![0.0; d];
            for i in 0..n {
                let mut row = vec![0.0; d];
                m.grad_v(&pos[i * d..(i + 1) * d], &mut row);
                for v in &mut row {
                    *v = -*v;
                }
                for j in 0..n {
                    if j != i {
                        m.grad_w_x(&pos[i * d..(i + 1) * d], &pos[j * d..(j + 1) * d], &mut g);
                        for k in 0..d {
                            row[k] -= g[k] / (n - 1) as f64;
                        }
                    }
                }
                for k in 0..d {
                    assert!((row[k] - fast[i * d + k]).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn drift_is_minus_hamiltonian_gradient() {
        let m = builtin_model(ModelFamily::Fourier, &[1.0, 0.2, 0.3, 1.1]).unwrap();
        let pos = vec![0.4, -1.1, 0.9, 0.05];
        let b = drift(&m, &pos, 4);
        for i in 0..4 {
            let mut p = pos.clone();
            let h = 1e-6;
            p[i] += h;
            let up = hamiltonian(&m, &p, 4);
            p[i] -= 2.0 * h;
            let down = hamiltonian(&m, &p, 4);
            assert!(((up - down) / (2.0 * h) + b[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn bilinear_hamiltonian_matches_pair_sum() {
        let g = builtin_model(ModelFamily::Gaussian, &[0.5, 2.0]).unwrap();
        let pos = [0.4, -1.1, 0.9, 0.05, -0.3, 0.7];
        let mut direct: f64 = (0..3).map(|i| g.v(&pos[2 * i..2 * i + 2])).sum();
        for i in 0..3 {
            for j in (i + 1)..3 {
                direct += g.w(&pos[2 * i..2 * i + 2], &pos[2 * j..2 * j + 2]) / 2.0;
            }
        }
        assert!((hamiltonian(&g, &pos, 3) - direct).abs() < 1e-14);
    }

    #[test]
    fn zero_step_is_identity_and_noiseless_decay_is_geometric() {
        let g = builtin_model(ModelFamily::Gaussian, &[0.0]).unwrap();
        let mut ens = ParticleEnsemble::new(vec![1.0, -0.5], 2, 1, 0.0, StreamKey::new(1, 0)).unwrap();
        run_euler_maruyama(&mut ens, &g, 10).unwrap();
        assert_eq!(ens.positions, vec![1.0, -0.5]);

        let dt = 0.05;
        let mut ens = ParticleEnsemble::new(vec![1.0, 1.0], 2, 1, dt, StreamKey::new(1, 0)).unwrap();
        ens.noise = false;
        run_euler_maruyama(&mut ens, &g, 40).unwrap();
        assert!((ens.positions[0] - (1.0 - dt).powi(40)).abs() < 1e-14);
    }

    #[test]
    fn blowup_is_reported_with_step() {
        let g = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.0]).unwrap();
        let mut ens = ParticleEnsemble::new(vec![30.0, -30.0], 2, 1, 0.5, StreamKey::new(1, 0)).unwrap();
        ens.noise = false;
        match run_euler_maruyama(&mut ens, &g, 100) {
            Err(Error::Blowup { step }) => assert!((1..10).contains(&step)),
            other => panic!("expected blowup, got {other:?}"),
        }
    }

    #[test]
    fn long_run_variance_matches_exact_gaussian_marginal() {
        let (beta, n, dt) = (0.5, 8, 0.01);
        let g = builtin_model(ModelFamily::Gaussian, &[beta]).unwrap();
        let cov = spd_inverse(&gaussian_precision(beta, n), n).unwrap();
        let mut ens = ParticleEnsemble::new(vec![0.0; n], n, 1, dt, StreamKey::new(11, 0)).unwrap();
        run_euler_maruyama(&mut ens, &g, 2_000).unwrap();
        let mut xs = Vec::new();
        for _ in 0..200_000 {
            run_euler_maruyama(&mut ens, &g, 5).unwrap();
            xs.push(ens.positions[0] * ens.positions[0]);
        }
        let var = stats::mean(&xs);
        let se = stats::batch_standard_error(&xs, 200);
        // Euler–Maruyama inflates the stationary variance by O(dt).
        assert!((var - cov[0]).abs() < 3.0 * se + 0.01, "{var} vs {} (se {se})", cov[0]);
    }

    #[test]
    fn spd_inverse_of_gaussian_precision() {
        let a = gaussian_precision(0.5, 4);
        let inv = spd_inverse(&a, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| a[i * 4 + k] * inv[k * 4 + j]).sum();
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }
}
