//! Built-in model families.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use super::{Atom, Confinement, ConfinementParams, Interaction, MeanFieldModel, RadialKernel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    /// `V = |x|^2/2`, `W = beta <x, y>`. Params `[beta, d = 1]`.
    Gaussian,
    /// `V = beta (x^4/4 - x^2/2)`, `W = -beta K x y`, `d = 1`. Params `[beta, K]`.
    CurieWeiss,
    /// `V = kappa |x|^2/2`, `W = 0`. Params `[kappa = 1, d = 1]`.
    Free,
    /// Double-well `V` with `W0(u) = c_W |u|^2/2`. Params `[beta, c_W, d = 1]`.
    RadialQuadratic,
    /// Double-well `V` with `W0(u) = sum_k 2 w_k cos(y_k u) + c u^2/2`, `d = 1`.
    /// Params `[beta, c, w_1, y_1, w_2, y_2, ...]`.
    Fourier,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 5] = [
        ModelFamily::Gaussian,
        ModelFamily::CurieWeiss,
        ModelFamily::Free,
        ModelFamily::RadialQuadratic,
        ModelFamily::Fourier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Gaussian => "gaussian",
            ModelFamily::CurieWeiss => "curie_weiss",
            ModelFamily::Free => "free",
            ModelFamily::RadialQuadratic => "radial_quadratic",
            ModelFamily::Fourier => "fourier",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_string()))
    }
}

fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}

fn finite(name: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(name, "must be finite"))
    }
}

fn dimension(v: Option<&f64>) -> Result<usize> {
    match v {
        None => Ok(1),
        Some(&d) if d >= 1.0 && d.fract() == 0.0 && d <= 64.0 => Ok(d as usize),
        Some(&d) => Err(invalid("d", format!("expected a positive integer, got {d}"))),
    }
}

fn positive(name: &'static str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be positive, got {v}")))
    }
}

fn arity(params: &[f64], min: usize, max: usize) -> Result<()> {
    if params.len() < min || params.len() > max {
        return Err(invalid("params", format!("expected {min}..={max} values, got {}", params.len())));
    }
    Ok(())
}

fn identity(d: usize, scale: f64) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for k in 0..d {
        m[k * d + k] = scale;
    }
    m
}

fn quadratic_params(kappa: f64) -> ConfinementParams {
    ConfinementParams { c1: kappa, c2: 0.0, c_v: kappa, c1_prime: 0.0, radius: 0.0 }
}

/// `x . grad V = beta (|x|^4 - |x|^2) >= beta |x|^2 - beta`, and the monotonicity
/// estimate `<|x|^2 x - |y|^2 y, x - y> >= |x - y|^4 / 4` gives the
/// dissipativity constants with the bump maximised at `r^2 = 8/3`.
fn double_well_params(beta: f64) -> ConfinementParams {
    ConfinementParams {
        c1: beta,
        c2: beta,
        c_v: beta,
        c1_prime: beta * (4.0 / 3.0) * (8.0f64 / 3.0).sqrt(),
        radius: 2.0 * 2.0f64.sqrt(),
    }
}

/// Builds a model of the given family from a flat parameter list.
pub fn builtin_model(family: ModelFamily, params: &[f64]) -> Result<MeanFieldModel> {
    let model = match family {
        ModelFamily::Gaussian => {
            arity(params, 1, 2)?;
            let beta = finite("beta", params[0])?;
            let d = dimension(params.get(1))?;
            MeanFieldModel::new(d, Confinement::Quadratic { stiffness: 1.0 }, Interaction::Bilinear {
                coupling: identity(d, beta),
            })
            .with_confinement_params(quadratic_params(1.0))
        }
        ModelFamily::CurieWeiss => {
            arity(params, 2, 2)?;
            let beta = positive("beta", params[0])?;
            let k = finite("K", params[1])?;
            MeanFieldModel::new(1, Confinement::DoubleWell { beta }, Interaction::Bilinear { coupling: vec![-beta * k] })
                .with_confinement_params(double_well_params(beta))
        }
        ModelFamily::Free => {
            arity(params, 0, 2)?;
            let kappa = match params.first() {
                Some(&k) => positive("kappa", k)?,
                None => 1.0,
            };
            let d = dimension(params.get(1))?;
            MeanFieldModel::new(d, Confinement::Quadratic { stiffness: kappa }, Interaction::Bilinear {
                coupling: vec![0.0; d * d],
            })
            .with_confinement_params(quadratic_params(kappa))
        }
        ModelFamily::RadialQuadratic => {
            arity(params, 2, 3)?;
            let beta = positive("beta", params[0])?;
            let curvature = finite("c_W", params[1])?;
            let d = dimension(params.get(2))?;
            MeanFieldModel::new(d, Confinement::DoubleWell { beta }, Interaction::Radial(RadialKernel::Quadratic { curvature }))
                .with_confinement_params(double_well_params(beta))
        }
        ModelFamily::Fourier => {
            if params.len() < 2 || !params.len().is_multiple_of(2) {
                return Err(invalid("params", "expected [beta, c, w_1, y_1, ...] with complete (w, y) pairs"));
            }
            let beta = positive("beta", params[0])?;
            let curvature = finite("c", params[1])?;
            let mut atoms = Vec::new();
            for pair in params[2..].chunks_exact(2) {
                let weight = finite("w", pair[0])?;
                if weight < 0.0 {
                    return Err(invalid("w", "atom weights must be nonnegative"));
                }
                atoms.push(Atom { weight, frequency: vec![finite("y", pair[1])?] });
            }
            MeanFieldModel::new(1, Confinement::DoubleWell { beta }, Interaction::Fourier { curvature, atoms })
                .with_confinement_params(double_well_params(beta))
        }
    };
    Ok(model.with_label(family.name()))
}

pub fn builtin_model_by_name(name: &str, params: &[f64]) -> Result<MeanFieldModel> {
    builtin_model(name.parse()?, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::StructureTag;

    #[test]
    fn gaussian_cross_hessian_is_beta() {
        let m = builtin_model(ModelFamily::Gaussian, &[0.5]).unwrap();
        let mut h = [0.0];
        m.cross_hessian_w(&[1.3], &[-0.2], &mut h);
        assert_eq!(h, [0.5]);
    }

    #[test]
    fn curie_weiss_derivatives() {
        let m = builtin_model(ModelFamily::CurieWeiss, &[1.0, 0.2]).unwrap();
        for x in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((m.v_prime(x) - (x * x * x - x)).abs() < 1e-15);
        }
        let mut h = [0.0];
        m.cross_hessian_w(&[0.4], &[2.0], &mut h);
        assert!((h[0] + 0.2).abs() < 1e-15);
        assert_eq!(m.structure(), StructureTag::Bilinear { coupling: vec![-0.2] });
    }

    #[test]
    fn parameter_validation() {
        assert!(matches!(builtin_model(ModelFamily::CurieWeiss, &[0.0, 0.2]), Err(Error::InvalidParameter { .. })));
        assert!(matches!(builtin_model(ModelFamily::CurieWeiss, &[-1.0, 0.2]), Err(Error::InvalidParameter { .. })));
        assert!(matches!(builtin_model(ModelFamily::Gaussian, &[0.5, 1.5]), Err(Error::InvalidParameter { .. })));
        assert!(matches!(builtin_model(ModelFamily::Fourier, &[1.0, 0.0, 0.3]), Err(Error::InvalidParameter { .. })));
        assert!(matches!(builtin_model_by_name("ising", &[1.0]), Err(Error::UnknownModel(_))));
        assert_eq!(builtin_model_by_name("free", &[]).unwrap().label, "free");
    }
}
