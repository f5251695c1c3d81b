//! Explicit spectral-gap and log-Sobolev constants.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::potentials::{
    spectral_covariance, DissipativityProfile, Interaction, MeanFieldModel, ProfileQuality, RadialKernel, SamplingBudget,
    StructureTag,
};
use crate::quadrature::{self, AdaptiveOptions};
use crate::rng::{SequentialRng, StreamKey};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    pub abs_tol: f64,
    /// Failure threshold for the outer truncation point.
    pub s_max: f64,
    /// Width of the outer panels; profile breakpoints are added as panel edges.
    pub panel_width: f64,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self { abs_tol: 1e-10, s_max: 1e3, panel_width: 0.5 }
    }
}

/// `c_Lip,m = 1/4 int_0^inf exp(1/4 int_0^s b0(u) du) s ds`.
///
/// The outer integral runs panel by panel; the inner integral is carried
/// cumulatively across panels and completed inside a panel by a short adaptive
/// rule, so the cost is linear in the truncation point. Integration stops after
/// the first panel whose right end has an integrand below `abs_tol * 1e-3` and
/// still decreasing.
pub fn c_lip_m(profile: &DissipativityProfile, opts: &QuadratureOptions) -> Result<f64> {
    let b0 = |u: f64| profile.eval(u);
    let inner_opts = AdaptiveOptions { abs_tol: 1e-15, rel_tol: 1e-15, max_intervals: 200 };
    let outer_opts = AdaptiveOptions { abs_tol: opts.abs_tol * 1e-2, rel_tol: 1e-14, max_intervals: 500 };
    let mut breaks = profile.breakpoints();
    breaks.retain(|b| *b > 0.0 && b.is_finite());
    breaks.sort_by(f64::total_cmp);
    let threshold = opts.abs_tol * 1e-3;

    let mut lo = 0.0;
    let mut inner_lo = 0.0; // int_0^lo b0
    let mut total = 0.0;
    let mut bk = 0;
    loop {
        if lo >= opts.s_max {
            return Err(Error::NonIntegrable { s_max: opts.s_max });
        }
        let mut hi = lo + opts.panel_width;
        while bk < breaks.len() && breaks[bk] <= lo {
            bk += 1;
        }
        if bk < breaks.len() && breaks[bk] < hi {
            hi = breaks[bk];
        }
        let inner = |s: f64| -> Result<f64> {
            Ok(inner_lo + quadrature::integrate(&b0, lo, s, &inner_opts)?.value)
        };
        // The closure passed to the outer rule cannot return errors, so failures
        // are surfaced as NaN and checked below.
        let g = |s: f64| match inner(s) {
            Ok(b) => 0.25 * (0.25 * b).exp() * s,
            Err(_) => f64::NAN,
        };
        let part = quadrature::integrate(&g, lo, hi, &outer_opts)?;
        if !part.value.is_finite() {
            return Err(Error::NonIntegrable { s_max: opts.s_max });
        }
        total += part.value;
        let g_lo = g(lo);
        let g_hi = g(hi);
        inner_lo = inner(hi)?;
        lo = hi;
        if g_hi < threshold && g_hi <= g_lo {
            return Ok(total);
        }
    }
}

/// Closed-form upper bound `exp((c1 + c2) R / 4) / (c_V + c_W)` for a profile
/// dominated by `-(c_V + c_W) r + (c1 + c2) 1{r <= R}`.
pub fn c_lip_m_explicit(c_v: f64, c1: f64, c_w: f64, c2: f64, radius: f64) -> Result<f64> {
    let a = c_v + c_w;
    if !(a > 0.0) {
        return Err(Error::NonDissipative { sum: a });
    }
    Ok(((c1 + c2) * radius / 4.0).exp() / a)
}

/// A computed constant together with how far it can be trusted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub value: f64,
    pub quality: ProfileQuality,
}

impl Bound {
    fn exact(value: f64) -> Self {
        Self { value, quality: ProfileQuality::Exact }
    }
}

/// Lower bound `h` on `(1_{i != j} grad^2_{xy} W(x_i, x_j) / (N-1))` in the
/// order of symmetric matrices.
///
/// General interactions are handled only when a sampling budget is supplied;
/// the result is then the smallest eigenvalue seen over random configurations
/// and is flagged approximate.
pub fn offdiag_hessian_bound(model: &MeanFieldModel, n: usize, budget: Option<&SamplingBudget>) -> Result<Bound> {
    if n < 2 {
        return Err(Error::InvalidParameter { name: "N", reason: "need at least two particles".into() });
    }
    let m = (n - 1) as f64;
    match model.structure() {
        StructureTag::Bilinear { coupling } => {
            let eig = linalg::symmetric_eigenvalues(&coupling, model.dim);
            let (lo, hi) = (eig[0], eig[eig.len() - 1]);
            Ok(Bound::exact(lo.min(-hi / m)))
        }
        StructureTag::Radial { hess_lower, hess_upper } => {
            let neg = (-hess_lower).max(0.0);
            let value = -(neg * n as f64 / m + hess_upper);
            let quality = if hess_lower == hess_upper { ProfileQuality::Exact } else { ProfileQuality::UpperBound };
            // A lower bound on h is the safe direction; "UpperBound" here means
            // the estimate is conservative.
            Ok(Bound { value, quality })
        }
        StructureTag::Fourier { curvature, gamma_eigenvalues } => {
            let top = gamma_eigenvalues.last().copied().unwrap_or(0.0);
            let value = (curvature.min(-curvature * m) - top) / m;
            let quality = if top == 0.0 { ProfileQuality::Exact } else { ProfileQuality::UpperBound };
            Ok(Bound { value, quality })
        }
        StructureTag::General => {
            let budget = budget.ok_or(Error::Unsupported("off-diagonal Hessian bound of a general interaction"))?;
            Ok(sampled_offdiag_bound(model, n, budget))
        }
    }
}

fn sampled_offdiag_bound(model: &MeanFieldModel, n: usize, budget: &SamplingBudget) -> Bound {
    let d = model.dim;
    let dim = n * d;
    let mut rng = SequentialRng::new(StreamKey::new(budget.seed, 0x0ff));
    let mut block = vec![0.0; d * d];
    let mut best = f64::INFINITY;
    for _ in 0..budget.samples_per_r.max(1) {
        let x: Vec<f64> = (0..dim).map(|_| budget.box_half_width * (2.0 * rng.uniform() - 1.0)).collect();
        let mut big = vec![0.0; dim * dim];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                model.cross_hessian_w(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d], &mut block);
                for k in 0..d {
                    for l in 0..d {
                        big[(i * d + k) * dim + j * d + l] = block[k * d + l] / (n - 1) as f64;
                    }
                }
            }
        }
        // Symmetrize against rounding in user-supplied Hessians.
        for a in 0..dim {
            for b in 0..a {
                let s = 0.5 * (big[a * dim + b] + big[b * dim + a]);
                big[a * dim + b] = s;
                big[b * dim + a] = s;
            }
        }
        best = best.min(linalg::symmetric_eigenvalues(&big, dim)[0]);
    }
    Bound { value: best, quality: ProfileQuality::Approximate }
}

/// `1/c_Lip,m + h`, flagged vacuous when nonpositive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareBound {
    pub value: f64,
    pub vacuous: bool,
}

pub fn poincare_lower_bound(c_lip_m: f64, h: f64) -> PoincareBound {
    let value = 1.0 / c_lip_m + h;
    PoincareBound { value, vacuous: !(value > 0.0) }
}

/// `sup_{x,y} |grad^2_{xy} W(x,y)|` in operator norm.
///
/// Bilinear couplings are exact. Radial kernels use `max(|c_W|, |C_W|)` and
/// Fourier kernels the envelope `|c| + lambda_max(Gamma)`, both safe upper
/// bounds. General interactions are sampled over the budget's box.
pub fn cross_hessian_sup_norm(model: &MeanFieldModel, budget: &SamplingBudget) -> Bound {
    match &model.interaction {
        Interaction::Bilinear { coupling } => Bound::exact(linalg::symmetric_operator_norm(coupling, model.dim)),
        Interaction::Radial(RadialKernel::Quadratic { curvature }) => Bound::exact(curvature.abs()),
        Interaction::Radial(RadialKernel::Custom { hess_lower, hess_upper, .. }) => {
            Bound { value: hess_lower.abs().max(hess_upper.abs()), quality: ProfileQuality::UpperBound }
        }
        Interaction::Fourier { curvature, atoms } => {
            let gamma = spectral_covariance(atoms, model.dim);
            let top = linalg::symmetric_eigenvalues(&gamma, model.dim).last().copied().unwrap_or(0.0);
            let quality = if top == 0.0 { ProfileQuality::Exact } else { ProfileQuality::UpperBound };
            Bound { value: curvature.abs() + top, quality }
        }
        Interaction::General(_) => {
            let d = model.dim;
            let mut rng = SequentialRng::new(StreamKey::new(budget.seed, 0xc40));
            let (mut x, mut y, mut h) = (vec![0.0; d], vec![0.0; d], vec![0.0; d * d]);
            let mut best: f64 = 0.0;
            for _ in 0..budget.samples_per_r.max(1) * budget.r_points.max(1) {
                for k in 0..d {
                    x[k] = budget.box_half_width * (2.0 * rng.uniform() - 1.0);
                    y[k] = budget.box_half_width * (2.0 * rng.uniform() - 1.0);
                }
                model.cross_hessian_w(&x, &y, &mut h);
                best = best.max(operator_norm(&h, d));
            }
            Bound { value: best, quality: ProfileQuality::Approximate }
        }
    }
}

/// Operator norm of a general square matrix, via the largest eigenvalue of `A^T A`.
fn operator_norm(a: &[f64], d: usize) -> f64 {
    let mut ata = vec![0.0; d * d];
    for k in 0..d {
        for l in 0..d {
            ata[k * d + l] = (0..d).map(|i| a[i * d + k] * a[i * d + l]).sum();
        }
    }
    linalg::symmetric_eigenvalues(&ata, d).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

pub fn zegarlinski_gamma(c_lip_m: f64, cross_norm: f64) -> f64 {
    c_lip_m * cross_norm
}

/// `rho_LS,m (1 - gamma0)^2`, available only while `gamma0 < 1`.
pub fn lsi_lower_bound(rho_lsm: f64, gamma0: f64) -> Result<f64> {
    if !(rho_lsm > 0.0) {
        return Err(Error::InvalidParameter { name: "rho_lsm", reason: "must be positive".into() });
    }
    if !(gamma0 < 1.0) {
        return Err(Error::ZegarlinskiFails { gamma0 });
    }
    Ok(rho_lsm * (1.0 - gamma0) * (1.0 - gamma0))
}

/// Covariance bound `c/((1 + c h)(N - 1)) (|f|_Lip^2 + |g|_Lip^2)` between
/// functions of two distinct particles.
pub fn correlation_bound(c_lip_m: f64, h: f64, n: usize, lip_f: f64, lip_g: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidParameter { name: "N", reason: "need at least two particles".into() });
    }
    let denominator = 1.0 + c_lip_m * h;
    if !(denominator > 0.0) {
        return Err(Error::VacuousBound { denominator });
    }
    Ok(c_lip_m / (denominator * (n - 1) as f64) * (lip_f * lip_f + lip_g * lip_g))
}

/// Log-Sobolev constant of `exp(-V_c - V_b)` from a split into a `K`-convex
/// part `V_c` and a bounded perturbation `V_b` with oscillation `osc`
/// (Bakry–Émery followed by Holley–Stroock).
pub fn holley_stroock(convexity: f64, oscillation: f64) -> f64 {
    convexity * (-oscillation).exp()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoRecipe {
    pub rho: f64,
    pub convexity: f64,
    pub oscillation: f64,
}

/// Marginal log-Sobolev constant for `V = beta (x^4/4 - x^2/2)`.
///
/// `V_c'' = K` on `|x| <= x1` and `V_c'' = V''` outside, with `x1^2 = 1 + K/beta`
/// chosen so that `V_b = V - V_c` is flat outside `[-x1, x1]`. Its oscillation
/// is `(beta + K)^2 / (4 beta)` and `K exp(-osc)` is maximised at
/// `K = (sqrt(beta^2 + 8 beta) - beta) / 2`.
pub fn double_well_rho_lsm(beta: f64) -> RhoRecipe {
    let convexity = 0.5 * ((beta * beta + 8.0 * beta).sqrt() - beta);
    let oscillation = (beta + convexity).powi(2) / (4.0 * beta);
    RhoRecipe { rho: holley_stroock(convexity, oscillation), convexity, oscillation }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantsReport {
    pub n: usize,
    pub c_lip_m: f64,
    pub profile_quality: ProfileQuality,
    pub lambda_1m_bound: f64,
    pub h: Bound,
    pub poincare: PoincareBound,
    pub cross_hessian_norm: Bound,
    pub gamma0: f64,
    pub rho_lsm: Option<f64>,
    /// Present exactly when `gamma0 < 1` and `rho_lsm` was supplied.
    pub lsi_bound: Option<f64>,
    /// `c_Lip,m / (1 + c_Lip,m h)`, absent when the denominator is nonpositive.
    pub correlation_constant: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstantsOptions {
    pub quadrature: QuadratureOptions,
    pub sampling: SamplingBudget,
}

pub fn constants_report(model: &MeanFieldModel, n: usize, rho_lsm: Option<f64>, opts: &ConstantsOptions) -> Result<ConstantsReport> {
    let profile = crate::potentials::dissipativity_profile(model, &opts.sampling);
    let c = c_lip_m(&profile, &opts.quadrature)?;
    let h = offdiag_hessian_bound(model, n, Some(&opts.sampling))?;
    let cross = cross_hessian_sup_norm(model, &opts.sampling);
    let gamma0 = zegarlinski_gamma(c, cross.value);
    let lsi_bound = match rho_lsm {
        Some(rho) if gamma0 < 1.0 => Some(lsi_lower_bound(rho, gamma0)?),
        _ => None,
    };
    let denominator = 1.0 + c * h.value;
    Ok(ConstantsReport {
        n,
        c_lip_m: c,
        profile_quality: profile.quality,
        lambda_1m_bound: 1.0 / c,
        h,
        poincare: poincare_lower_bound(c, h.value),
        cross_hessian_norm: cross,
        gamma0,
        rho_lsm,
        lsi_bound,
        correlation_constant: (denominator > 0.0).then(|| c / denominator),
    })
}
