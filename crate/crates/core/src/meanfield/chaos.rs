//! Propagation of chaos: one-particle marginals of finite ensembles against the PDE.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::functionals::wasserstein2_1d;
use super::grid::{Grid, GridMeasure, InverseCdf};
use super::pde::mckv_step;
use crate::particles::{run_euler_maruyama, ParticleEnsemble};
use crate::potentials::MeanFieldModel;
use crate::rng::{SequentialRng, StreamKey};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosOptions {
    pub ns: Vec<usize>,
    pub t_end: f64,
    /// Euler–Maruyama step for the particles.
    pub dt: f64,
    /// Step of the PDE reference solution.
    pub pde_dt: f64,
    /// Target number of pooled one-particle samples per `N`.
    pub pooled_samples: usize,
    pub seed: u64,
}

impl Default for ChaosOptions {
    fn default() -> Self {
        Self { ns: alloc::vec![4, 16, 64], t_end: 1.0, dt: 2.5e-3, pde_dt: 1e-3, pooled_samples: 400_000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosRow {
    pub n: usize,
    pub replicas: usize,
    pub samples: usize,
    /// `W_2` between the pooled one-particle histogram and `nu_T`.
    pub w2: f64,
    /// `W_2` of a histogram of as many independent draws from `nu_T`.
    pub noise_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChaosTable {
    pub rows: Vec<ChaosRow>,
}

impl ChaosTable {
    /// `true` when no row exceeds its predecessor by more than the larger
    /// of the two Monte Carlo floors.
    pub fn decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].w2 <= w[0].w2 + w[0].noise_floor.max(w[1].noise_floor))
    }
}

/// Replicas needed for `n` particles to reach `pooled` samples.
pub fn replicas_for(n: usize, pooled: usize) -> usize {
    pooled.div_ceil(n).max(1)
}

/// The PDE solution `nu_T` started from `nu0`.
pub fn pde_solution(model: &MeanFieldModel, nu0: &GridMeasure, t_end: f64, dt: f64) -> Result<GridMeasure> {
    let steps = (t_end / dt).round() as usize;
    let mut nu = nu0.clone();
    for _ in 0..steps {
        nu = mckv_step(model, &nu, dt)?;
    }
    Ok(nu)
}

/// Stream key of replica `replica` for ensembles of `n` particles.
pub fn replica_key(seed: u64, n: usize, replica: usize) -> StreamKey {
    StreamKey::new(seed, 0xc4a0).substream(n as u64).substream(replica as u64)
}

/// Runs one ensemble of `n` particles from `nu0^{xn}` to `t_end` and returns
/// the final positions.
pub fn chaos_replica(model: &MeanFieldModel, n: usize, initial: &InverseCdf, t_end: f64, dt: f64, key: StreamKey) -> Result<Vec<f64>> {
    if model.dim != 1 {
        return Err(Error::DimensionMismatch { expected: 1, actual: model.dim });
    }
    let mut rng = SequentialRng::new(key.substream(u64::MAX));
    let init: Vec<f64> = (0..n).map(|_| initial.eval(rng.uniform())).collect();
    let mut ens = ParticleEnsemble::new(init, n, 1, dt, key)?;
    run_euler_maruyama(&mut ens, model, (t_end / dt).round() as u64)?;
    Ok(ens.positions)
}

/// Compares pooled samples with `nu_t` and with an independent-sample floor.
pub fn chaos_row_from_samples(n: usize, replicas: usize, samples: &[f64], nu_t: &GridMeasure, seed: u64) -> Result<ChaosRow> {
    let grid: Grid = nu_t.grid;
    let empirical = GridMeasure::histogram(grid, samples)?;
    let w2 = wasserstein2_1d(&empirical, nu_t);
    let inverse = InverseCdf::new(nu_t);
    let mut rng = SequentialRng::new(StreamKey::new(seed, 0xf100).substream(n as u64));
    let reference: Vec<f64> = (0..samples.len()).map(|_| inverse.eval(rng.uniform())).collect();
    let noise_floor = wasserstein2_1d(&GridMeasure::histogram(grid, &reference)?, nu_t);
    Ok(ChaosRow { n, replicas, samples: samples.len(), w2, noise_floor })
}

/// Sequential propagation-of-chaos table over `opts.ns`.
pub fn chaos_check(model: &MeanFieldModel, nu0: &GridMeasure, opts: &ChaosOptions) -> Result<ChaosTable> {
    let nu_t = pde_solution(model, nu0, opts.t_end, opts.pde_dt)?;
    let initial = InverseCdf::new(nu0);
    let mut rows = Vec::with_capacity(opts.ns.len());
    for &n in &opts.ns {
        let replicas = replicas_for(n, opts.pooled_samples);
        let mut samples = Vec::with_capacity(replicas * n);
        for r in 0..replicas {
            samples.extend(chaos_replica(model, n, &initial, opts.t_end, opts.dt, replica_key(opts.seed, n, r))?);
        }
        rows.push(chaos_row_from_samples(n, replicas, &samples, &nu_t, opts.seed)?);
    }
    Ok(ChaosTable { rows })
}
