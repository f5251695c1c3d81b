//! The dissipativity rate `b0(r)` of the one-particle drift:
//!
//! ```text
//! b0(r) = sup_{|x-y| = r, z} -< (x-y)/|x-y|, grad V(x) - grad V(y) + grad_x W(x,z) - grad_x W(y,z) >
//! ```

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Confinement, Interaction, MeanFieldModel, RadialKernel};
use crate::linalg;
use crate::rng::{SequentialRng, StreamKey};
use crate::{Error, Result};

pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum ProfileShape {
    Analytic(ProfileFn),
    /// `b0(r) <= -slope r + jump 1{r <= radius}`.
    PiecewiseBound { slope: f64, jump: f64, radius: f64 },
    /// Linear interpolation through `(radii[k], values[k])`, extended linearly
    /// past the last node with the slope of the last segment.
    Tabulated { radii: Vec<f64>, values: Vec<f64> },
}

/// How the profile relates to the true supremum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileQuality {
    Exact,
    /// Pointwise at least the true `b0`, so constants derived from it are safe.
    UpperBound,
    /// Sampled supremum; may underestimate the true `b0`.
    Approximate,
}

#[derive(Clone)]
pub struct DissipativityProfile {
    pub shape: ProfileShape,
    pub quality: ProfileQuality,
}

impl fmt::Debug for DissipativityProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let shape = match &self.shape {
            ProfileShape::Analytic(_) => "Analytic",
            ProfileShape::PiecewiseBound { .. } => "PiecewiseBound",
            ProfileShape::Tabulated { .. } => "Tabulated",
        };
        f.debug_struct("DissipativityProfile")
            .field("shape", &shape)
            .field("quality", &self.quality)
            .finish()
    }
}

impl DissipativityProfile {
    pub fn analytic(f: impl Fn(f64) -> f64 + Send + Sync + 'static, quality: ProfileQuality) -> Self {
        Self { shape: ProfileShape::Analytic(Arc::new(f)), quality }
    }

    /// `b0(r) = -a r`.
    pub fn linear(a: f64) -> Self {
        Self::analytic(move |r| -a * r, ProfileQuality::Exact)
    }

    /// The bound `-a r + c 1{r <= R}`; requires `a > 0`.
    pub fn piecewise_bound(slope: f64, jump: f64, radius: f64) -> Result<Self> {
        if !(slope > 0.0) {
            return Err(Error::NonDissipative { sum: slope });
        }
        if !(jump >= 0.0) || !(radius >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "jump/radius",
                reason: alloc::string::String::from("must be nonnegative"),
            });
        }
        Ok(Self { shape: ProfileShape::PiecewiseBound { slope, jump, radius }, quality: ProfileQuality::UpperBound })
    }

    pub fn eval(&self, r: f64) -> f64 {
        match &self.shape {
            ProfileShape::Analytic(f) => f(r),
            ProfileShape::PiecewiseBound { slope, jump, radius } => {
                -slope * r + if r <= *radius { *jump } else { 0.0 }
            }
            ProfileShape::Tabulated { radii, values } => {
                let n = radii.len();
                let k = match radii.iter().position(|&x| x >= r) {
                    Some(0) => 1,
                    Some(k) => k,
                    None => n - 1,
                };
                let (r0, r1) = (radii[k - 1], radii[k]);
                let t = (r - r0) / (r1 - r0);
                values[k - 1] + t * (values[k] - values[k - 1])
            }
        }
    }

    /// Points where `b0` may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            ProfileShape::Analytic(_) => Vec::new(),
            ProfileShape::PiecewiseBound { radius, .. } if *radius > 0.0 => vec![*radius],
            ProfileShape::PiecewiseBound { .. } => Vec::new(),
            ProfileShape::Tabulated { radii, .. } => radii.clone(),
        }
    }
}

/// Controls the Monte Carlo supremum used when no analytic profile is known.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingBudget {
    /// `x` and `z` are drawn uniformly from `[-box_half_width, box_half_width]^d`.
    pub box_half_width: f64,
    pub r_max: f64,
    pub r_points: usize,
    pub samples_per_r: usize,
    /// Size of the fixed set of unit directions for `x - y`.
    pub directions: usize,
    pub seed: u64,
}

impl Default for SamplingBudget {
    fn default() -> Self {
        Self { box_half_width: 5.0, r_max: 10.0, r_points: 200, samples_per_r: 2000, directions: 16, seed: 0 }
    }
}

/// Exact or upper-bound parts of `b0` contributed separately by `V` and `W`.
fn confinement_part(c: &Confinement) -> Option<ProfileFn> {
    match *c {
        Confinement::Quadratic { stiffness } => Some(Arc::new(move |r| -stiffness * r)),
        // Attained at y = -x, where <|x|^2 x - |y|^2 y, x - y> = |x - y|^4 / 4.
        Confinement::DoubleWell { beta } => Some(Arc::new(move |r: f64| -2.0 * beta * (r * r * r / 8.0 - r / 2.0))),
        Confinement::Custom(_) => None,
    }
}

fn interaction_part(model: &MeanFieldModel) -> Option<(f64, ProfileQuality)> {
    // The W contribution is linear in r for every structured family: slope s
    // with b0_W(r) = s r.
    match &model.interaction {
        Interaction::Bilinear { .. } => Some((0.0, ProfileQuality::Exact)),
        Interaction::Radial(RadialKernel::Quadratic { curvature }) => Some((-curvature, ProfileQuality::Exact)),
        Interaction::Radial(RadialKernel::Custom { hess_lower, .. }) => Some((-hess_lower, ProfileQuality::UpperBound)),
        Interaction::Fourier { curvature, atoms } => {
            let gamma = super::spectral_covariance(atoms, model.dim);
            let top = linalg::symmetric_eigenvalues(&gamma, model.dim).last().copied().unwrap_or(0.0);
            let quality = if atoms.iter().all(|a| a.weight == 0.0) { ProfileQuality::Exact } else { ProfileQuality::UpperBound };
            Some((top - curvature, quality))
        }
        Interaction::General(_) => None,
    }
}

/// The dissipativity profile of `model`: analytic for structured models,
/// otherwise a sampled supremum flagged [`ProfileQuality::Approximate`].
pub fn dissipativity_profile(model: &MeanFieldModel, budget: &SamplingBudget) -> DissipativityProfile {
    match (confinement_part(&model.confinement), interaction_part(model)) {
        (Some(v), Some((slope, quality))) => {
            DissipativityProfile { shape: ProfileShape::Analytic(Arc::new(move |r| v(r) + slope * r)), quality }
        }
        _ => sampled_dissipativity_profile(model, budget),
    }
}

/// Monte Carlo lower estimate of `b0` on a grid of radii.
pub fn sampled_dissipativity_profile(model: &MeanFieldModel, budget: &SamplingBudget) -> DissipativityProfile {
    let d = model.dim;
    let mut rng = SequentialRng::new(StreamKey::new(budget.seed, 0xb0));
    let directions: Vec<Vec<f64>> = (0..budget.directions.max(1))
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if n > 1e-8 {
                break v.into_iter().map(|a| a / n).collect();
            }
        })
        .collect();
    let n = budget.r_points.max(2);
    let mut radii = vec![0.0];
    let mut values = vec![0.0];
    let (mut x, mut y, mut z) = (vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let (mut gx, mut gy, mut wx, mut wy) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let h = budget.box_half_width;
    for k in 1..=n {
        let r = budget.r_max * k as f64 / n as f64;
        let mut best = f64::NEG_INFINITY;
        for _ in 0..budget.samples_per_r {
            let e = &directions[rng.below(directions.len())];
            for i in 0..d {
                x[i] = h * (2.0 * rng.uniform() - 1.0);
                z[i] = h * (2.0 * rng.uniform() - 1.0);
                y[i] = x[i] - r * e[i];
            }
            model.grad_v(&x, &mut gx);
            model.grad_v(&y, &mut gy);
            model.grad_w_x(&x, &z, &mut wx);
            model.grad_w_x(&y, &z, &mut wy);
            let val: f64 = -(0..d).map(|i| e[i] * (gx[i] - gy[i] + wx[i] - wy[i])).sum::<f64>();
            best = best.max(val);
        }
        radii.push(r);
        values.push(best);
    }
    DissipativityProfile { shape: ProfileShape::Tabulated { radii, values }, quality: ProfileQuality::Approximate }
}
