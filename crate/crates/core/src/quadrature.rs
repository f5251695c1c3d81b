//! Adaptive Gauss–Kronrod (G10/K21) integration.

#![allow(clippy::excessive_precision)] // published node tables, kept digit for digit

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Kronrod abscissae on [0, 1]; odd indices are the 10-point Gauss nodes.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_937_299_424,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Result of a single rule application or of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

/// Applies the 21-point Kronrod rule on `[a, b]`, using the embedded 10-point
/// Gauss rule for the error estimate.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    for k in 0..10 {
        let dx = half * XGK[k];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * pair;
        if k % 2 == 1 {
            gauss += WG[k / 2] * pair;
        }
    }
    Estimate {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
        evaluations: 21,
    }
}

/// Options for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 0.0,
            max_intervals: 2000,
        }
    }
}

struct Piece {
    a: f64,
    b: f64,
    est: Estimate,
}

/// Globally adaptive integration of `f` over `[a, b]`: the piece with the
/// largest error estimate is bisected until the summed error estimate meets
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, opts: &AdaptiveOptions) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let first = gk21(f, a, b);
    let mut pieces = alloc::vec![Piece { a, b, est: first }];
    let mut evaluations = first.evaluations;
    loop {
        let value: f64 = pieces.iter().map(|p| p.est.value).sum();
        let error: f64 = pieces.iter().map(|p| p.est.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.abs());
        if error <= target {
            return Ok(Estimate { value, error, evaluations });
        }
        if pieces.len() >= opts.max_intervals {
            return Err(Error::QuadratureFailed { tolerance: target, estimate: error });
        }
        let worst = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.est.error.total_cmp(&y.1.est.error))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let piece = pieces.swap_remove(worst);
        let mid = 0.5 * (piece.a + piece.b);
        if mid <= piece.a || mid >= piece.b {
            // Interval collapsed to adjacent floats.
            return Err(Error::QuadratureFailed { tolerance: target, estimate: error });
        }
        let left = gk21(f, piece.a, mid);
        let right = gk21(f, mid, piece.b);
        evaluations += left.evaluations + right.evaluations;
        pieces.push(Piece { a: piece.a, b: mid, est: left });
        pieces.push(Piece { a: mid, b: piece.b, est: right });
    }
}

/// Integrates `f` over `[a, b]` split at the given interior breakpoints.
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: &AdaptiveOptions,
) -> Result<Estimate> {
    let mut nodes: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    let mut lo = a;
    let mut total = Estimate { value: 0.0, error: 0.0, evaluations: 0 };
    let share = AdaptiveOptions {
        abs_tol: opts.abs_tol / (nodes.len() + 1) as f64,
        ..*opts
    };
    for hi in nodes.into_iter().chain(core::iter::once(b)) {
        let part = integrate(f, lo, hi, &share)?;
        total.value += part.value;
        total.error += part.error;
        total.evaluations += part.evaluations;
        lo = hi;
    }
    Ok(total)
}
