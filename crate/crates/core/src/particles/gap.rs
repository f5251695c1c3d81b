//! Relaxation rates from stationary autocovariances.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{run_euler_maruyama, ParticleEnsemble};
use crate::potentials::{Interaction, MeanFieldModel};
use crate::rng::{SequentialRng, StreamKey};
use crate::stats;
use crate::{linalg, Error, Result};

/// A scalar function of the configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// Mean of coordinate 0 over particles.
    Magnetization,
    Coordinate { particle: usize, axis: usize },
    /// `x_first - x_second` along `axis`.
    Difference { first: usize, second: usize, axis: usize },
}

impl Observable {
    pub fn eval(&self, positions: &[f64], n: usize, dim: usize) -> f64 {
        match *self {
            Observable::Magnetization => (0..n).map(|i| positions[i * dim]).sum::<f64>() / n as f64,
            Observable::Coordinate { particle, axis } => positions[particle * dim + axis],
            Observable::Difference { first, second, axis } => positions[first * dim + axis] - positions[second * dim + axis],
        }
    }

    /// The observable expected to carry the slowest mode.
    ///
    /// For a bilinear coupling `J` the Gibbs precision splits into the uniform
    /// mode (stiffened by `J`) and the modes orthogonal to it (softened by
    /// `J / (N-1)`). A repulsive coupling (`lambda_max(J) > 0`) therefore makes a
    /// difference mode the slowest; otherwise the magnetization is.
    pub fn slowest_for(model: &MeanFieldModel) -> Observable {
        match &model.interaction {
            Interaction::Bilinear { coupling } => {
                let top = linalg::symmetric_eigenvalues(coupling, model.dim).last().copied().unwrap_or(0.0);
                if top > 0.0 {
                    Observable::Difference { first: 0, second: 1, axis: 0 }
                } else {
                    Observable::Magnetization
                }
            }
            _ => Observable::Magnetization,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapOptions {
    pub dt: f64,
    /// Simulated time per step size after burn-in.
    pub duration: f64,
    pub burn_in: f64,
    /// Time between recorded observable values.
    pub sample_interval: f64,
    pub max_lag_time: f64,
    pub blocks: usize,
    pub bootstrap: usize,
    pub seed: u64,
    /// Also run at `dt/2` and Richardson-combine `2 rate(dt/2) - rate(dt)`.
    pub extrapolate: bool,
    pub init: Option<Vec<f64>>,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            duration: 20_000.0,
            burn_in: 20.0,
            sample_interval: 0.1,
            max_lag_time: 4.0,
            blocks: 50,
            bootstrap: 400,
            seed: 0,
            extrapolate: true,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateAtStep {
    pub dt: f64,
    pub rate: f64,
    pub ci: (f64, f64),
    /// Number of lags used in the fit.
    pub lags: usize,
    bootstrap: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapEstimate {
    pub rate: f64,
    /// 95% percentile bootstrap interval.
    pub ci: (f64, f64),
    pub per_step: Vec<RateAtStep>,
}

impl GapEstimate {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci.1 - self.ci.0)
    }
}

/// Autocovariance per block, lags `0..=max_lag`, about the global mean.
fn block_autocovariances(series: &[f64], blocks: usize, max_lag: usize) -> Vec<Vec<f64>> {
    let mean = stats::mean(series);
    let len = series.len() / blocks;
    (0..blocks)
        .map(|b| {
            let s = &series[b * len..(b + 1) * len];
            (0..=max_lag)
                .map(|k| {
                    let m = len - k;
                    (0..m).map(|t| (s[t] - mean) * (s[t + k] - mean)).sum::<f64>() / m as f64
                })
                .collect()
        })
        .collect()
}

fn pooled(per_block: &[Vec<f64>], pick: &[usize]) -> Vec<f64> {
    let lags = per_block[0].len();
    let mut c = vec![0.0; lags];
    for &b in pick {
        for k in 0..lags {
            c[k] += per_block[b][k];
        }
    }
    for v in &mut c {
        *v /= pick.len() as f64;
    }
    c
}

/// Weighted log-linear fit over lags `1..=last`; `None` if a lag is nonpositive.
fn fit_rate(c: &[f64], weights: &[f64], last: usize, tau: f64) -> Option<f64> {
    if c[1..=last].iter().any(|&v| v <= 0.0) {
        return None;
    }
    let x: Vec<f64> = (1..=last).map(|k| k as f64 * tau).collect();
    let y: Vec<f64> = (1..=last).map(|k| c[k].ln()).collect();
    stats::fit_line(&x, &y, Some(&weights[1..=last])).map(|f| -f.slope)
}

fn rate_at(model: &MeanFieldModel, n: usize, observable: Observable, opts: &GapOptions, dt: f64, key: StreamKey) -> Result<RateAtStep> {
    let d = model.dim;
    let init = opts.init.clone().unwrap_or_else(|| vec![0.0; n * d]);
    let mut ens = ParticleEnsemble::new(init, n, d, dt, key)?;
    let every = ((opts.sample_interval / dt).round() as u64).max(1);
    let tau = every as f64 * dt;
    run_euler_maruyama(&mut ens, model, (opts.burn_in / dt).round() as u64)?;
    let count = (opts.duration / tau) as usize;
    let mut series = Vec::with_capacity(count);
    for _ in 0..count {
        run_euler_maruyama(&mut ens, model, every)?;
        series.push(observable.eval(&ens.positions, n, d));
    }
    let blocks = opts.blocks.max(4);
    let max_lag = ((opts.max_lag_time / tau) as usize).clamp(2, series.len() / blocks / 4);
    let per_block = block_autocovariances(&series, blocks, max_lag);
    let all: Vec<usize> = (0..blocks).collect();
    let c = pooled(&per_block, &all);
    let se: Vec<f64> = (0..=max_lag)
        .map(|k| {
            let vals: Vec<f64> = per_block.iter().map(|b| b[k]).collect();
            (stats::variance(&vals) / blocks as f64).sqrt()
        })
        .collect();
    let last = (1..=max_lag).take_while(|&k| c[k] > 5.0 * se[k]).last().ok_or(Error::InsufficientSignal)?;
    if last < 2 {
        return Err(Error::InsufficientSignal);
    }
    let weights: Vec<f64> = c.iter().zip(&se).map(|(v, s)| (v / s).powi(2)).collect();
    let rate = fit_rate(&c, &weights, last, tau).ok_or(Error::InsufficientSignal)?;

    let mut rng = SequentialRng::new(key.substream(0xb007));
    let mut boot = Vec::with_capacity(opts.bootstrap);
    let mut pick = vec![0usize; blocks];
    for _ in 0..opts.bootstrap {
        for p in &mut pick {
            *p = rng.below(blocks);
        }
        let cb = pooled(&per_block, &pick);
        let usable = (1..=last).take_while(|&k| cb[k] > 0.0).last().unwrap_or(0);
        if usable >= 2 {
            if let Some(r) = fit_rate(&cb, &weights, usable, tau) {
                boot.push(r);
            }
        }
    }
    let ci = percentile_interval(&boot, rate);
    Ok(RateAtStep { dt, rate, ci, lags: last, bootstrap: boot })
}

fn percentile_interval(samples: &[f64], fallback: f64) -> (f64, f64) {
    if samples.len() < 10 {
        return (fallback, fallback);
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    (stats::sorted_quantile(&s, 0.025), stats::sorted_quantile(&s, 0.975))
}

/// Decay rate of the stationary autocovariance of `observable` under the
/// Euler–Maruyama dynamics, with a block-bootstrap confidence interval.
///
/// With `extrapolate`, independent runs at `dt` and `dt/2` are combined as
/// `2 rate(dt/2) - rate(dt)`, removing the first-order time-step bias. The
/// estimate is the rate in the direction of the observable and so only an
/// upper bound for the spectral gap.
pub fn estimate_spectral_gap(model: &MeanFieldModel, n: usize, observable: Observable, opts: &GapOptions) -> Result<GapEstimate> {
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter { name: "dt", reason: "must be positive".into() });
    }
    let key = StreamKey::new(opts.seed, 0x9a9);
    let coarse = rate_at(model, n, observable, opts, opts.dt, key.substream(0))?;
    if !opts.extrapolate {
        return Ok(GapEstimate { rate: coarse.rate, ci: coarse.ci, per_step: vec![coarse] });
    }
    let fine = rate_at(model, n, observable, opts, 0.5 * opts.dt, key.substream(1))?;
    let rate = 2.0 * fine.rate - coarse.rate;
    let combined: Vec<f64> = fine.bootstrap.iter().zip(&coarse.bootstrap).map(|(f, c)| 2.0 * f - c).collect();
    let ci = percentile_interval(&combined, rate);
    Ok(GapEstimate { rate, ci, per_step: vec![coarse, fine] })
}
