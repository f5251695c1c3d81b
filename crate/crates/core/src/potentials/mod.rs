//! Confinement and interaction potentials.
//!
//! A [`MeanFieldModel`] bundles a confinement potential `V: R^d -> R` and a
//! symmetric pair interaction `W: R^d x R^d -> R`, both with analytic first and
//! second derivatives. The particle system it describes is
//!
//! ```text
//! dX_i = sqrt(2) dB_i - grad V(X_i) dt - 1/(N-1) sum_{j != i} grad_x W(X_i, X_j) dt
//! ```
//!
//! with Gibbs measure proportional to
//! `exp(-sum_i V(x_i) - 1/(N-1) sum_{i<j} W(x_i, x_j))`.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg;

mod families;
mod profile;

pub use families::{builtin_model, builtin_model_by_name, ModelFamily};
pub use profile::{dissipativity_profile, DissipativityProfile, ProfileQuality, ProfileShape, SamplingBudget};

/// A twice differentiable function on `R^d`.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Row-major `d x d` Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);
}

/// A symmetric pair potential `W(x, y) = W(y, x)` on `R^d x R^d`.
pub trait PairPotential: Send + Sync {
    fn value(&self, x: &[f64], y: &[f64]) -> f64;
    /// Gradient in the first argument.
    fn grad_x(&self, x: &[f64], y: &[f64], out: &mut [f64]);
    /// Mixed Hessian `(d^2 W / dx_k dy_l)_{k,l}`, row-major.
    fn cross_hessian(&self, x: &[f64], y: &[f64], out: &mut [f64]);
}

#[derive(Clone)]
pub enum Confinement {
    /// `V(x) = stiffness |x|^2 / 2`.
    Quadratic { stiffness: f64 },
    /// `V(x) = beta (|x|^4 / 4 - |x|^2 / 2)`.
    DoubleWell { beta: f64 },
    Custom(Arc<dyn ScalarField>),
}

/// One symmetric pair of atoms of the spectral measure: mass `weight` at both
/// `frequency` and `-frequency`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub weight: f64,
    pub frequency: Vec<f64>,
}

#[derive(Clone)]
pub enum RadialKernel {
    /// `W0(u) = curvature |u|^2 / 2`.
    Quadratic { curvature: f64 },
    /// User kernel with `hess_lower I <= Hess W0 <= hess_upper I`.
    Custom {
        kernel: Arc<dyn ScalarField>,
        hess_lower: f64,
        hess_upper: f64,
    },
}

#[derive(Clone)]
pub enum Interaction {
    /// `W(x, y) = x^T J y` with symmetric `J` (row-major `d x d`).
    Bilinear { coupling: Vec<f64> },
    /// `W(x, y) = W0(x - y)`.
    Radial(RadialKernel),
    /// `W(x, y) = W0(x - y)` with
    /// `W0(u) = sum_k 2 w_k cos<u, y_k> + curvature |u|^2 / 2`, the Fourier
    /// transform of a finite symmetric atomic measure plus a quadratic.
    Fourier { curvature: f64, atoms: Vec<Atom> },
    General(Arc<dyn PairPotential>),
}

/// Structural metadata used to pick analytic constants.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureTag {
    General,
    Bilinear { coupling: Vec<f64> },
    Radial { hess_lower: f64, hess_upper: f64 },
    Fourier { curvature: f64, gamma_eigenvalues: Vec<f64> },
}

/// Constants of the growth condition `x . grad V(x) >= c1 |x|^2 - c2` and of the
/// dissipativity-at-infinity condition
/// `<grad V(x) - grad V(y), x - y> >= c_v |x-y|^2 - c1_prime |x-y| 1{|x-y| <= radius}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfinementParams {
    pub c1: f64,
    pub c2: f64,
    pub c_v: f64,
    pub c1_prime: f64,
    pub radius: f64,
}

#[derive(Clone)]
pub struct MeanFieldModel {
    pub dim: usize,
    pub confinement: Confinement,
    pub interaction: Interaction,
    pub confinement_params: Option<ConfinementParams>,
    pub label: String,
}

impl fmt::Debug for MeanFieldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeanFieldModel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("structure", &self.structure())
            .field("confinement_params", &self.confinement_params)
            .finish()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

impl Atom {
    fn phase(&self, u: &[f64]) -> f64 {
        dot(u, &self.frequency)
    }
}

/// Covariance matrix `Gamma_nu = sum_k 2 w_k y_k y_k^T` of the atomic measure.
pub fn spectral_covariance(atoms: &[Atom], dim: usize) -> Vec<f64> {
    let mut gamma = vec![0.0; dim * dim];
    for atom in atoms {
        for k in 0..dim {
            for l in 0..dim {
                gamma[k * dim + l] += 2.0 * atom.weight * atom.frequency[k] * atom.frequency[l];
            }
        }
    }
    gamma
}

impl MeanFieldModel {
    pub fn new(dim: usize, confinement: Confinement, interaction: Interaction) -> Self {
        Self { dim, confinement, interaction, confinement_params: None, label: String::from("custom") }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_confinement_params(mut self, params: ConfinementParams) -> Self {
        self.confinement_params = Some(params);
        self
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        match &self.confinement {
            Confinement::Quadratic { stiffness } => 0.5 * stiffness * norm_sq(x),
            Confinement::DoubleWell { beta } => {
                let r2 = norm_sq(x);
                beta * (0.25 * r2 * r2 - 0.5 * r2)
            }
            Confinement::Custom(f) => f.value(x),
        }
    }

    pub fn grad_v(&self, x: &[f64], out: &mut [f64]) {
        match &self.confinement {
            Confinement::Quadratic { stiffness } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = stiffness * xi;
                }
            }
            Confinement::DoubleWell { beta } => {
                let s = beta * (norm_sq(x) - 1.0);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi;
                }
            }
            Confinement::Custom(f) => f.gradient(x, out),
        }
    }

    pub fn hess_v(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match &self.confinement {
            Confinement::Quadratic { stiffness } => {
                out.fill(0.0);
                for k in 0..d {
                    out[k * d + k] = *stiffness;
                }
            }
            Confinement::DoubleWell { beta } => {
                let r2 = norm_sq(x);
                for k in 0..d {
                    for l in 0..d {
                        let diag = if k == l { r2 - 1.0 } else { 0.0 };
                        out[k * d + l] = beta * (diag + 2.0 * x[k] * x[l]);
                    }
                }
            }
            Confinement::Custom(f) => f.hessian(x, out),
        }
    }

    /// Scalar convenience for `d = 1`.
    pub fn v_prime(&self, x: f64) -> f64 {
        let mut g = [0.0];
        self.grad_v(&[x], &mut g);
        g[0]
    }

    fn radial_value(kernel: &RadialKernel, u: &[f64]) -> f64 {
        match kernel {
            RadialKernel::Quadratic { curvature } => 0.5 * curvature * norm_sq(u),
            RadialKernel::Custom { kernel, .. } => kernel.value(u),
        }
    }

    pub fn w(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.interaction {
            Interaction::Bilinear { coupling } => {
                let d = self.dim;
                let mut acc = 0.0;
                for k in 0..d {
                    for l in 0..d {
                        acc += x[k] * coupling[k * d + l] * y[l];
                    }
                }
                acc
            }
            Interaction::Radial(kernel) => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                Self::radial_value(kernel, &u)
            }
            Interaction::Fourier { curvature, atoms } => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                let waves: f64 = atoms.iter().map(|a| 2.0 * a.weight * a.phase(&u).cos()).sum();
                waves + 0.5 * curvature * norm_sq(&u)
            }
            Interaction::General(w) => w.value(x, y),
        }
    }

    pub fn grad_w_x(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match &self.interaction {
            Interaction::Bilinear { coupling } => {
                for k in 0..d {
                    out[k] = (0..d).map(|l| coupling[k * d + l] * y[l]).sum();
                }
            }
            Interaction::Radial(RadialKernel::Quadratic { curvature }) => {
                for k in 0..d {
                    out[k] = curvature * (x[k] - y[k]);
                }
            }
            Interaction::Radial(RadialKernel::Custom { kernel, .. }) => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                kernel.gradient(&u, out);
            }
            Interaction::Fourier { curvature, atoms } => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                for k in 0..d {
                    out[k] = curvature * u[k];
                }
                for atom in atoms {
                    let s = 2.0 * atom.weight * atom.phase(&u).sin();
                    for k in 0..d {
                        out[k] -= s * atom.frequency[k];
                    }
                }
            }
            Interaction::General(w) => w.grad_x(x, y, out),
        }
    }

    /// Hessian of the radial kernel `W0` at `u` (radial and Fourier models).
    fn kernel_hessian(&self, u: &[f64], out: &mut [f64]) {
        let d = self.dim;
        match &self.interaction {
            Interaction::Radial(RadialKernel::Quadratic { curvature }) => {
                out.fill(0.0);
                for k in 0..d {
                    out[k * d + k] = *curvature;
                }
            }
            Interaction::Radial(RadialKernel::Custom { kernel, .. }) => kernel.hessian(u, out),
            Interaction::Fourier { curvature, atoms } => {
                out.fill(0.0);
                for k in 0..d {
                    out[k * d + k] = *curvature;
                }
                for atom in atoms {
                    let c = 2.0 * atom.weight * atom.phase(u).cos();
                    for k in 0..d {
                        for l in 0..d {
                            out[k * d + l] -= c * atom.frequency[k] * atom.frequency[l];
                        }
                    }
                }
            }
            _ => unreachable!("kernel_hessian on a non-radial model"),
        }
    }

    pub fn cross_hessian_w(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match &self.interaction {
            Interaction::Bilinear { coupling } => out.copy_from_slice(coupling),
            Interaction::Radial(_) | Interaction::Fourier { .. } => {
                let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
                self.kernel_hessian(&u, out);
                for v in out.iter_mut() {
                    *v = -*v;
                }
            }
            Interaction::General(w) => w.cross_hessian(x, y, out),
        }
    }

    /// Scalar convenience for `d = 1`: `d/dx W(x, y)`.
    pub fn w_prime(&self, x: f64, y: f64) -> f64 {
        let mut g = [0.0];
        self.grad_w_x(&[x], &[y], &mut g);
        g[0]
    }

    pub fn structure(&self) -> StructureTag {
        match &self.interaction {
            Interaction::Bilinear { coupling } => StructureTag::Bilinear { coupling: coupling.clone() },
            Interaction::Radial(RadialKernel::Quadratic { curvature }) => StructureTag::Radial {
                hess_lower: *curvature,
                hess_upper: *curvature,
            },
            Interaction::Radial(RadialKernel::Custom { hess_lower, hess_upper, .. }) => StructureTag::Radial {
                hess_lower: *hess_lower,
                hess_upper: *hess_upper,
            },
            Interaction::Fourier { curvature, atoms } => StructureTag::Fourier {
                curvature: *curvature,
                gamma_eigenvalues: linalg::symmetric_eigenvalues(&spectral_covariance(atoms, self.dim), self.dim),
            },
            Interaction::General(_) => StructureTag::General,
        }
    }

    /// `true` when `W` vanishes identically.
    pub fn is_non_interacting(&self) -> bool {
        matches!(&self.interaction, Interaction::Bilinear { coupling } if coupling.iter().all(|&c| c == 0.0))
    }

    /// Finite-difference consistency of the analytic derivatives at `(x, y)`.
    pub fn check_derivatives(&self, x: &[f64], y: &[f64]) -> DerivativeCheck {
        let d = self.dim;
        let step = |p: &[f64]| 1e-5 * norm_sq(p).sqrt().max(1.0);
        let mut grad = vec![0.0; d];
        self.grad_v(x, &mut grad);
        let hx = step(x);
        let mut xp = x.to_vec();
        let mut fd = vec![0.0; d];
        for k in 0..d {
            xp[k] = x[k] + hx;
            let up = self.v(&xp);
            xp[k] = x[k] - hx;
            let down = self.v(&xp);
            xp[k] = x[k];
            fd[k] = (up - down) / (2.0 * hx);
        }
        let grad_v = relative_error(&fd, &grad);

        let mut hess = vec![0.0; d * d];
        self.hess_v(x, &mut hess);
        let mut fd_hess = vec![0.0; d * d];
        let (mut gp, mut gm) = (vec![0.0; d], vec![0.0; d]);
        for l in 0..d {
            xp[l] = x[l] + hx;
            self.grad_v(&xp, &mut gp);
            xp[l] = x[l] - hx;
            self.grad_v(&xp, &mut gm);
            xp[l] = x[l];
            for k in 0..d {
                fd_hess[k * d + l] = (gp[k] - gm[k]) / (2.0 * hx);
            }
        }
        let hess_v = relative_error(&fd_hess, &hess);

        let mut cross = vec![0.0; d * d];
        self.cross_hessian_w(x, y, &mut cross);
        let hy = step(y);
        let mut yp = y.to_vec();
        let mut fd_cross = vec![0.0; d * d];
        for l in 0..d {
            yp[l] = y[l] + hy;
            self.grad_w_x(x, &yp, &mut gp);
            yp[l] = y[l] - hy;
            self.grad_w_x(x, &yp, &mut gm);
            yp[l] = y[l];
            for k in 0..d {
                fd_cross[k * d + l] = (gp[k] - gm[k]) / (2.0 * hy);
            }
        }
        let cross_hessian_w = relative_error(&fd_cross, &cross);

        let mut gw = vec![0.0; d];
        self.grad_w_x(x, y, &mut gw);
        for k in 0..d {
            xp[k] = x[k] + hx;
            let up = self.w(&xp, y);
            xp[k] = x[k] - hx;
            let down = self.w(&xp, y);
            xp[k] = x[k];
            fd[k] = (up - down) / (2.0 * hx);
        }
        let grad_w_x = relative_error(&fd, &gw);

        DerivativeCheck { grad_v, hess_v, grad_w_x, cross_hessian_w }
    }
}

/// Relative errors `max |fd - exact| / max(1, max |exact|)` of each analytic
/// derivative against central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeCheck {
    pub grad_v: f64,
    pub hess_v: f64,
    pub grad_w_x: f64,
    pub cross_hessian_w: f64,
}

fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let scale = exact.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    approx.iter().zip(exact).fold(0.0f64, |m, (a, e)| m.max((a - e).abs())) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fourier_model() -> MeanFieldModel {
        builtin_model(ModelFamily::Fourier, &[1.0, -0.5, 0.3, 1.5, 0.1, 0.7]).unwrap()
    }

    fn all_builtins() -> Vec<MeanFieldModel> {
        vec![
            builtin_model(ModelFamily::Gaussian, &[0.5]).unwrap(),
            builtin_model(ModelFamily::Gaussian, &[0.3, 3.0]).unwrap(),
            builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap(),
            builtin_model(ModelFamily::Free, &[2.0, 2.0]).unwrap(),
            builtin_model(ModelFamily::RadialQuadratic, &[1.0, -0.4, 2.0]).unwrap(),
            fourier_model(),
        ]
    }

    fn point(vals: &[f64], d: usize) -> Vec<f64> {
        vals[..d].to_vec()
    }

    proptest! {
        #[test]
        fn interaction_is_symmetric(vals in proptest::collection::vec(-3.0f64..3.0, 6)) {
            for m in all_builtins() {
                let d = m.dim;
                let (x, y) = (point(&vals, d), point(&vals[3..], d));
                let (a, b) = (m.w(&x, &y), m.w(&y, &x));
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn analytic_derivatives_match_finite_differences(vals in proptest::collection::vec(-3.0f64..3.0, 6)) {
            for m in all_builtins() {
                let d = m.dim;
                let check = m.check_derivatives(&point(&vals, d), &point(&vals[3..], d));
                prop_assert!(check.grad_v <= 1e-6, "{} grad V {:?}", m.label, check);
                prop_assert!(check.hess_v <= 1e-5, "{} hess V {:?}", m.label, check);
                prop_assert!(check.grad_w_x <= 1e-6, "{} grad W {:?}", m.label, check);
                prop_assert!(check.cross_hessian_w <= 1e-5, "{} cross {:?}", m.label, check);
            }
        }

        #[test]
        fn growth_condition_holds(vals in proptest::collection::vec(-20.0f64..20.0, 3)) {
            for m in all_builtins() {
                let p = m.confinement_params.expect("builtins carry confinement params");
                let x = point(&vals, m.dim);
                let mut g = vec![0.0; m.dim];
                m.grad_v(&x, &mut g);
                prop_assert!(dot(&x, &g) >= p.c1 * norm_sq(&x) - p.c2 - 1e-9);
            }
        }

        #[test]
        fn dissipativity_at_infinity_holds(vals in proptest::collection::vec(-6.0f64..6.0, 6)) {
            for m in all_builtins() {
                let p = m.confinement_params.unwrap();
                let d = m.dim;
                let (x, y) = (point(&vals, d), point(&vals[3..], d));
                let (mut gx, mut gy) = (vec![0.0; d], vec![0.0; d]);
                m.grad_v(&x, &mut gx);
                m.grad_v(&y, &mut gy);
                let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let r = norm_sq(&diff).sqrt();
                let lhs: f64 = gx.iter().zip(&gy).zip(&diff).map(|((a, b), u)| (a - b) * u).sum();
                let rhs = p.c_v * r * r - if r <= p.radius { p.c1_prime * r } else { 0.0 };
                prop_assert!(lhs >= rhs - 1e-9, "{}: {lhs} < {rhs}", m.label);
            }
        }
    }

    #[test]
    fn fourier_structure_reports_gamma_spectrum() {
        match fourier_model().structure() {
            StructureTag::Fourier { curvature, gamma_eigenvalues } => {
                assert_eq!(curvature, -0.5);
                let expected = 2.0 * 0.3 * 1.5 * 1.5 + 2.0 * 0.1 * 0.7 * 0.7;
                assert!((gamma_eigenvalues[0] - expected).abs() < 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn free_model_has_no_interaction() {
        let m = builtin_model(ModelFamily::Free, &[]).unwrap();
        assert!(m.is_non_interacting());
        let mut c = [1.0];
        m.cross_hessian_w(&[0.3], &[-2.0], &mut c);
        assert_eq!(c, [0.0]);
    }
}
