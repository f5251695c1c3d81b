//! Data-parallel drivers. Work items are independent and results are
//! collected in input order, so output does not depend on scheduling.

use anyhow::Result;
use meanfield_core::meanfield::{
    chaos_replica, chaos_row_from_samples, pde_solution, replica_key, replicas_for, ChaosOptions, ChaosTable, GridMeasure, InverseCdf,
};
use meanfield_core::potentials::MeanFieldModel;
use rayon::prelude::*;

/// A thread pool with `workers` threads.
pub fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

/// Propagation-of-chaos table with replicas run in parallel.
///
/// Replica `r` of ensemble size `n` always uses the same random stream, so
/// the table matches the sequential driver in the core crate exactly.
pub fn chaos_check(model: &MeanFieldModel, nu0: &GridMeasure, opts: &ChaosOptions) -> Result<ChaosTable> {
    let nu_t = pde_solution(model, nu0, opts.t_end, opts.pde_dt)?;
    let initial = InverseCdf::new(nu0);
    let mut rows = Vec::with_capacity(opts.ns.len());
    for &n in &opts.ns {
        let replicas = replicas_for(n, opts.pooled_samples);
        let runs: Vec<Vec<f64>> = (0..replicas)
            .into_par_iter()
            .map(|r| chaos_replica(model, n, &initial, opts.t_end, opts.dt, replica_key(opts.seed, n, r)))
            .collect::<Result<_, _>>()?;
        let samples: Vec<f64> = runs.into_iter().flatten().collect();
        rows.push(chaos_row_from_samples(n, replicas, &samples, &nu_t, opts.seed)?);
    }
    Ok(ChaosTable { rows })
}

/// Applies `f` to every item in parallel, keeping input order.
pub fn map_ordered<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}
