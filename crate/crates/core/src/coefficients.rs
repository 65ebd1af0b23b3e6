//! Limit-equation coefficients: the fractional Laplacian constant
//! `c_{d,alpha}`, the tail constant `gamma` of `M`, the diffusivity `kappa`
//! and the drift coefficient `D`.

use crate::collision::CollisionContext;
use crate::equilibria::LambdaField;
use crate::error::{Error, Result};
use crate::quadrature::gauss_laguerre;
use crate::velocity::{check_alpha, m_normalization, Weight};
use serde::Serialize;
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

/// Relative agreement demanded between the closed form of `kappa` and its
/// defining integral.
pub const KAPPA_TOLERANCE: f64 = 1e-10;
pub const KAPPA_QUADRATURE_NODES: usize = 128;

/// `alpha 2^{alpha-1} Gamma((alpha+d)/2) / (pi^{d/2} Gamma((2-alpha)/2))`.
pub fn c_d_alpha(d: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if d == 0 {
        return Err(Error::UnsupportedDimension(0));
    }
    let d = d as f64;
    let log = (alpha - 1.0) * 2f64.ln() + ln_gamma((alpha + d) / 2.0)
        - 0.5 * d * PI.ln()
        - ln_gamma((2.0 - alpha) / 2.0);
    Ok(alpha * log.exp())
}

/// Tail constant of `M`: `|v|^{1+alpha} M(v) -> gamma`.
pub fn gamma_of_m(alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(1.0 / m_normalization(alpha))
}

/// `int_0^inf z^alpha e^{-nu0 z} dz` by generalized Gauss-Laguerre with
/// weight `u^beta e^{-u}`, `beta = alpha - floor(alpha)`; the remaining
/// factor `u^{floor(alpha)}` is a polynomial the rule integrates exactly.
pub fn kappa_integral_quadrature(alpha: f64, nu0: f64) -> f64 {
    let whole = alpha.floor();
    let rule = gauss_laguerre(KAPPA_QUADRATURE_NODES, alpha - whole);
    let k = whole as i32;
    rule.integrate(|u| u.powi(k)) / nu0.powf(alpha + 1.0)
}

/// `kappa = gamma nu0^2 / c_{1,alpha} int_0^inf z^alpha e^{-nu0 z} dz`,
/// returned in the closed form `gamma Gamma(alpha+1) nu0^{1-alpha} / c` after
/// checking it against the quadrature of the integral.
pub fn kappa(alpha: f64, nu0: f64, gamma_m: f64) -> Result<f64> {
    kappa_in_dim(1, alpha, nu0, gamma_m)
}

pub fn kappa_in_dim(d: usize, alpha: f64, nu0: f64, gamma_m: f64) -> Result<f64> {
    if !(nu0 > 0.0) || !(gamma_m > 0.0) {
        return Err(Error::InvalidParameter(format!("nu0 = {nu0}, gamma = {gamma_m}")));
    }
    let c = c_d_alpha(d, alpha)?;
    let closed_form = gamma_m * gamma(alpha + 1.0) * nu0.powf(1.0 - alpha) / c;
    let quadrature = gamma_m * nu0 * nu0 * kappa_integral_quadrature(alpha, nu0) / c;
    if ((closed_form - quadrature) / closed_form).abs() > KAPPA_TOLERANCE {
        return Err(Error::QuadratureMismatch {
            closed_form,
            quadrature,
        });
    }
    Ok(closed_form)
}

/// `D = int lambda(v) v dv` with tail correction. Refused at `alpha = 1`,
/// where the first moment of `M` diverges and `mu(E)` replaces `D E`.
pub fn matrix_d(lambda: &LambdaField, ctx: &CollisionContext) -> Result<f64> {
    if ctx.alpha <= 1.0 {
        return Err(Error::TailDivergence);
    }
    lambda.profile.check_on(&ctx.grid)?;
    Ok(lambda.profile.moment(Weight::OddPower(1.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitCoefficients {
    pub alpha: f64,
    pub nu0: f64,
    pub gamma: f64,
    pub c_d_alpha: f64,
    pub kappa: f64,
    /// `None` at `alpha = 1`.
    #[serde(rename = "D")]
    pub d: Option<f64>,
}

impl LimitCoefficients {
    /// All coefficients for the context's kernel; `lambda` is needed only
    /// when `alpha > 1`.
    pub fn compute(ctx: &CollisionContext, lambda: Option<&LambdaField>) -> Result<Self> {
        let alpha = ctx.alpha;
        let nu0 = ctx.cross_section.nu0();
        let g = gamma_of_m(alpha)?;
        let d = match lambda {
            Some(l) if alpha > 1.0 => Some(matrix_d(l, ctx)?),
            _ => None,
        };
        Ok(Self {
            alpha,
            nu0,
            gamma: g,
            c_d_alpha: c_d_alpha(1, alpha)?,
            kappa: kappa(alpha, nu0, g)?,
            d,
        })
    }

    /// Coefficients that do not need a velocity grid; `D` is supplied.
    pub fn from_closed_forms(alpha: f64, nu0: f64, d: Option<f64>) -> Result<Self> {
        let g = gamma_of_m(alpha)?;
        Ok(Self {
            alpha,
            nu0,
            gamma: g,
            c_d_alpha: c_d_alpha(1, alpha)?,
            kappa: kappa(alpha, nu0, g)?,
            d,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibria::solve_lambda;
    use crate::params::CrossSection;
    use crate::velocity::{build_grid, eval_m};

    #[test]
    fn constant_at_alpha_one_is_one_over_pi() {
        assert!((c_d_alpha(1, 1.0).unwrap() - 1.0 / PI).abs() < 1e-14);
        // Gamma((2 - alpha)/2) sits in the denominator, so the constant
        // vanishes linearly as alpha -> 2.
        let near_two = c_d_alpha(1, 1.99).unwrap();
        assert!(near_two < 0.1 * c_d_alpha(1, 1.5).unwrap());
        let direct = 1.99 * 2f64.powf(0.99) * gamma(1.495) / (PI.sqrt() * gamma(0.005));
        assert!((near_two / direct - 1.0).abs() < 1e-12);
        assert!(matches!(c_d_alpha(1, 2.0), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn constant_matches_direct_gamma_evaluation() {
        // d = 3, alpha = 1: 2^0 Gamma(2) / (pi^{3/2} Gamma(1/2)) = 1 / pi^2
        assert!((c_d_alpha(3, 1.0).unwrap() - 1.0 / (PI * PI)).abs() < 1e-15);
    }

    #[test]
    fn gamma_matches_tail_of_m() {
        assert!((gamma_of_m(1.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        for alpha in [1.0, 1.25, 1.5, 1.75] {
            let g = gamma_of_m(alpha).unwrap();
            assert!(g > 0.0);
            let v: f64 = 1e3;
            let tail = v.powf(1.0 + alpha) * eval_m(v, alpha).unwrap();
            assert!((tail / g - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn kappa_closed_form_values() {
        let k = kappa(1.0, 1.0, 1.0 / PI).unwrap();
        assert!((k - 1.0).abs() < 1e-14);
        for alpha in [1.0, 1.25, 1.5, 1.75] {
            let g = gamma_of_m(alpha).unwrap();
            let a = kappa(alpha, 1.0, g).unwrap();
            let b = kappa(alpha, 2.0, g).unwrap();
            assert!((b / a - 2f64.powf(1.0 - alpha)).abs() < 1e-13);
        }
    }

    #[test]
    fn d_is_refused_at_alpha_one_and_unit_for_unit_kernel() {
        let grid = build_grid(256, 1e6, 1.0).unwrap();
        let ctx = CollisionContext::new(1.0, CrossSection::Constant { nu0: 1.0 }, grid.clone()).unwrap();
        let lam = solve_lambda(&ctx).unwrap();
        assert_eq!(matrix_d(&lam, &ctx), Err(Error::TailDivergence));
        let ctx = CollisionContext::new(1.5, CrossSection::Constant { nu0: 1.0 }, grid).unwrap();
        let lam = solve_lambda(&ctx).unwrap();
        let d = matrix_d(&lam, &ctx).unwrap();
        assert!((d - 1.0).abs() < 1e-6, "{d}");
        let c = LimitCoefficients::compute(&ctx, Some(&lam)).unwrap();
        assert!(c.kappa > 0.0 && c.d.unwrap() > 0.0);
    }
}
