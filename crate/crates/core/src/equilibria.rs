//! Field-modified equilibrium `F(v, E)`, the corrector `lambda`, and the
//! derived quantities `G = F - M - E lambda`, `R = F - M` and `mu(E)`.

use crate::collision::{apply_a_inverse, apply_q, apply_t, CollisionContext};
use crate::error::{Error, Result};
use crate::params::CrossSection;
use crate::quadrature::adaptive_gk;
use crate::velocity::{dm_unchecked, m_unchecked, VelocityProfile, Weight};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub const POWER_TOLERANCE: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 10_000;
pub const EIGENVALUE_TOLERANCE: f64 = 1e-6;
const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    Explicit,
    PowerIteration,
}

#[derive(Clone, Debug)]
pub struct EquilibriumF {
    pub profile: VelocityProfile,
    pub field_value: f64,
    /// `max |T(F)|` with the grid derivative.
    pub residual: f64,
    pub method: Method,
    /// Dominant eigenvalue of `K A^{-1}`; exactly 1 for the explicit route.
    pub eigenvalue: f64,
    pub sweeps: usize,
}

impl EquilibriumF {
    /// `(min F/M, max F/M)` over the nodes.
    pub fn m_ratio_bounds(&self, ctx: &CollisionContext) -> (f64, f64) {
        self.profile
            .values
            .iter()
            .zip(&ctx.m.values)
            .map(|(f, m)| f / m)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    /// `max |dF/dv| (1 + |v|) / M`.
    pub fn gradient_bound(&self, ctx: &CollisionContext) -> f64 {
        let d = self.profile.derivative();
        ctx.grid
            .nodes
            .iter()
            .zip(&d.values)
            .zip(&ctx.m.values)
            .map(|((v, dv), m)| dv.abs() * (1.0 + v.abs()) / m)
            .fold(0.0, f64::max)
    }
}

fn check_field(e: f64) -> Result<()> {
    if !e.is_finite() || e.abs() > 1.0 {
        return Err(Error::InvalidParameter(format!("field value {e} outside [-1, 1]")));
    }
    Ok(())
}

/// Explicit route for constant `sigma = nu0`:
/// `F(v) = int_0^inf e^{-z} M(v - E z / nu0) dz`, by adaptive quadrature with
/// breakpoints around the peak of `M` along the flight, then normalized on
/// the grid.
pub fn explicit_f(e: f64, ctx: &CollisionContext) -> Result<VelocityProfile> {
    let nu0 = match ctx.cross_section {
        CrossSection::Constant { nu0 } => nu0,
        _ => {
            return Err(Error::InvalidParameter(
                "explicit equilibrium needs a constant cross section".into(),
            ))
        }
    };
    let alpha = ctx.alpha;
    let c = e / nu0;
    let raw: Vec<f64> = ctx
        .grid
        .nodes
        .iter()
        .map(|&v| {
            if c == 0.0 {
                return m_unchecked(v, alpha);
            }
            let f = |z: f64| (-z).exp() * m_unchecked(v - c * z, alpha);
            let peak = v / c;
            let spread = 4.0 / c.abs();
            let mut breaks = vec![0.0];
            for b in [peak - spread, peak, peak + spread] {
                if b > 0.0 && b < 45.0 {
                    breaks.push(b);
                }
            }
            breaks.push(45.0);
            breaks
                .windows(2)
                .map(|w| adaptive_gk(f, w[0], w[1], 1e-17, 1e-13))
                .sum()
        })
        .collect();
    let p = VelocityProfile::new(ctx.grid.clone(), raw)?;
    let mass = p.mass();
    Ok(p.scale(1.0 / mass))
}

/// Dominant eigenpair of `K A^{-1}` by power iteration from `W = nu M`;
/// returns `(F, eigenvalue, sweeps)`.
fn power_iteration(e: f64, ctx: &CollisionContext) -> Result<(VelocityProfile, f64, usize)> {
    let mut w = ctx.m.zip_with(&ctx.nu, |m, nu| m * nu)?;
    w = w.scale(1.0 / w.mass());
    let mut eigenvalue = f64::NAN;
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let g = apply_a_inverse(&w, e, ctx)?;
        let next = ctx.gain(&g)?;
        let mass = next.mass();
        eigenvalue = mass / w.mass();
        let next = next.scale(1.0 / mass);
        let diff = next.l1_distance(&w)?;
        w = next;
        if diff < POWER_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged || (eigenvalue - 1.0).abs() > EIGENVALUE_TOLERANCE {
        return Err(Error::PowerIterationStalled { eigenvalue, sweeps });
    }
    let f = apply_a_inverse(&w, e, ctx)?;
    let mass = f.mass();
    Ok((f.scale(1.0 / mass), eigenvalue, sweeps))
}

/// The normalized positive solution of `E dF/dv = Q(F)`.
pub fn solve_f(e: f64, ctx: &CollisionContext) -> Result<EquilibriumF> {
    let method = if ctx.cross_section.is_constant() {
        Method::Explicit
    } else {
        Method::PowerIteration
    };
    solve_f_with(e, ctx, method)
}

pub fn solve_f_with(e: f64, ctx: &CollisionContext, method: Method) -> Result<EquilibriumF> {
    check_field(e)?;
    let (profile, eigenvalue, sweeps) = if e == 0.0 {
        (ctx.m.clone(), 1.0, 0)
    } else {
        match method {
            Method::Explicit => (explicit_f(e, ctx)?, 1.0, 0),
            Method::PowerIteration => power_iteration(e, ctx)?,
        }
    };
    let min = profile.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -NEGATIVE_TOLERANCE {
        return Err(Error::NegativeEntries(min));
    }
    let residual = apply_t(&profile, e, ctx)?.max_abs();
    Ok(EquilibriumF {
        profile,
        field_value: e,
        residual,
        method,
        eigenvalue,
        sweeps,
    })
}

#[derive(Clone, Debug)]
pub struct LambdaField {
    pub profile: VelocityProfile,
    /// `max |Q(lambda) - dM/dv|`.
    pub residual: f64,
}

/// `dM/dv` for the grid-normalized `M`.
pub fn equilibrium_gradient(ctx: &CollisionContext) -> VelocityProfile {
    let (alpha, raw) = (ctx.alpha, ctx.raw_mass);
    ctx.grid.profile_from_fn(|v| dm_unchecked(v, alpha) / raw)
}

/// Solves `Q(lambda) = dM/dv`, `sum w lambda = 0` as one bordered dense
/// system `[[Q, M], [w^T, 0]]`.
pub fn solve_lambda(ctx: &CollisionContext) -> Result<LambdaField> {
    let g = &ctx.grid;
    let n = g.len();
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = ctx.m.values[i] * ctx.cross_section.eval(g.nodes[i], g.nodes[j]) * g.weights[j];
        }
        a[(i, i)] -= ctx.nu.values[i];
        a[(i, n)] = ctx.m.values[i];
        a[(n, i)] = g.weights[i];
    }
    let dm = equilibrium_gradient(ctx);
    let mut b = DVector::<f64>::zeros(n + 1);
    for i in 0..n {
        b[i] = dm.values[i];
    }
    let x = a.lu().solve(&b).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let profile = VelocityProfile::new(g.clone(), x.iter().take(n).cloned().collect())?;
    let residual = apply_q(&profile, ctx)?.sub(&dm)?.max_abs();
    Ok(LambdaField { profile, residual })
}

/// `G = F - M - E lambda` and its `L^2(M^{-1})` norm.
pub fn remainder_g(e: f64, ctx: &CollisionContext, lambda: &LambdaField) -> Result<(VelocityProfile, f64)> {
    let f = solve_f(e, ctx)?;
    let g = f.profile.sub(&ctx.m)?.axpy(-e, &lambda.profile)?;
    let norm = g.weighted_l2(&ctx.m)?;
    Ok((g, norm))
}

/// `max_i |G_i| / M_i`.
pub fn remainder_sup_ratio(g: &VelocityProfile, ctx: &CollisionContext) -> f64 {
    g.values
        .iter()
        .zip(&ctx.m.values)
        .map(|(g, m)| g.abs() / m)
        .fold(0.0, f64::max)
}

pub fn deviation_r(e: f64, ctx: &CollisionContext) -> Result<VelocityProfile> {
    solve_f(e, ctx)?.profile.sub(&ctx.m)
}

/// `max_i |R_i| (1 + |v_i|) / M_i`.
pub fn deviation_bound(r: &VelocityProfile, ctx: &CollisionContext) -> f64 {
    ctx.grid
        .nodes
        .iter()
        .zip(&r.values)
        .zip(&ctx.m.values)
        .map(|((v, r), m)| r.abs() * (1.0 + v.abs()) / m)
        .fold(0.0, f64::max)
}

/// `mu(E) = int v (F - M) dv`, tail-corrected.
pub fn drift_mu(e: f64, ctx: &CollisionContext) -> Result<f64> {
    Ok(deviation_r(e, ctx)?.moment(Weight::OddPower(1.0)))
}

/// `mu(E)` from the first moment of the stationary equation:
/// `nu0 mu = E + int v K(F) - int v (nu - nu0) F`. The `K(F)` moment is a
/// symmetric sum (it vanishes by parity for both built-ins).
pub fn drift_mu_balance(e: f64, ctx: &CollisionContext) -> Result<f64> {
    let f = solve_f(e, ctx)?.profile;
    let nu0 = ctx.cross_section.nu0();
    let gain = ctx.gain(&f)?.moment_fn(|v| v);
    let excess = f
        .zip_with(&ctx.nu, |fi, nu| fi * (nu - nu0))?
        .moment(Weight::OddPower(1.0));
    Ok((e + gain - excess) / nu0)
}

#[derive(Clone, Debug, Serialize)]
pub struct DerivativeReport {
    pub field_value: f64,
    pub step: f64,
    /// `max |dF/dE| (1 + |v|) / F` at `step` and at `step / 2`.
    pub ratio: f64,
    pub ratio_half: f64,
    pub stable: bool,
    #[serde(skip)]
    pub derivative: Option<VelocityProfile>,
}

fn difference_quotient(e: f64, h: f64, ctx: &CollisionContext) -> Result<VelocityProfile> {
    let plus = solve_f(e + h, ctx)?.profile;
    let minus = solve_f(e - h, ctx)?.profile;
    Ok(plus.sub(&minus)?.scale(0.5 / h))
}

/// Central differences of `F` in `E` at steps `1e-3` and `5e-4`.
pub fn check_de_f(e: f64, ctx: &CollisionContext) -> Result<DerivativeReport> {
    if !e.is_finite() || e.abs() > 0.9 {
        return Err(Error::InvalidParameter(format!("field value {e} outside [-0.9, 0.9]")));
    }
    let step = 1e-3;
    let base = solve_f(e, ctx)?.profile;
    let ratio_of = |d: &VelocityProfile| {
        ctx.grid
            .nodes
            .iter()
            .zip(&d.values)
            .zip(&base.values)
            .map(|((v, d), f)| d.abs() * (1.0 + v.abs()) / f)
            .fold(0.0, f64::max)
    };
    let d1 = difference_quotient(e, step, ctx)?;
    let d2 = difference_quotient(e, 0.5 * step, ctx)?;
    let (ratio, ratio_half) = (ratio_of(&d1), ratio_of(&d2));
    let stable = ratio.is_finite() && ratio_half < 2.0 * ratio && ratio < 2.0 * ratio_half;
    Ok(DerivativeReport {
        field_value: e,
        step,
        ratio,
        ratio_half,
        stable,
        derivative: Some(d2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::velocity::build_grid;

    fn ctx(alpha: f64, cs: CrossSection) -> CollisionContext {
        CollisionContext::new(alpha, cs, build_grid(256, 1e6, 1.0).unwrap()).unwrap()
    }

    const UNIT: CrossSection = CrossSection::Constant { nu0: 1.0 };
    const BUMPY: CrossSection = CrossSection::PerturbedConstant { nu0: 1.0, amplitude: 0.5 };

    #[test]
    fn zero_field_returns_m() {
        for cs in [UNIT, BUMPY] {
            let c = ctx(1.5, cs);
            for m in [Method::Explicit, Method::PowerIteration] {
                let f = solve_f_with(0.0, &c, m).unwrap();
                assert_eq!(f.profile.values, c.m.values);
            }
        }
    }

    #[test]
    fn explicit_and_iterated_agree_for_unit_kernel() {
        let c = ctx(1.5, UNIT);
        let a = solve_f_with(0.5, &c, Method::Explicit).unwrap();
        let b = solve_f_with(0.5, &c, Method::PowerIteration).unwrap();
        assert!(a.profile.l1_distance(&b.profile).unwrap() < 1e-6);
        assert!((b.eigenvalue - 1.0).abs() < 1e-6);
        assert!(a.residual < 1e-4, "{}", a.residual);
    }

    #[test]
    fn perturbed_equilibrium_is_positive_normalized_and_stationary() {
        let c = ctx(1.5, BUMPY);
        let f = solve_f(-0.7, &c).unwrap();
        assert_eq!(f.method, Method::PowerIteration);
        assert!((f.profile.mass() - 1.0).abs() < 1e-12);
        let (lo, hi) = f.m_ratio_bounds(&c);
        assert!(lo > 0.0 && hi.is_finite());
        assert!(f.residual < 1e-4 * f.profile.max_abs(), "{}", f.residual);
        assert!(f.gradient_bound(&c).is_finite());
    }

    #[test]
    fn rejects_strong_field() {
        let c = ctx(1.5, UNIT);
        assert!(matches!(solve_f(1.5, &c), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn lambda_for_unit_kernel_is_minus_gradient() {
        let c = ctx(1.5, UNIT);
        let l = solve_lambda(&c).unwrap();
        let dm = equilibrium_gradient(&c);
        assert!(l.profile.add(&dm).unwrap().max_abs() < 1e-8);
        assert!(l.profile.mass().abs() < 1e-8);
        let l = solve_lambda(&ctx(1.5, BUMPY)).unwrap();
        assert!(l.residual < 1e-8 && l.profile.mass().abs() < 1e-8);
    }

    #[test]
    fn remainder_is_quadratic_and_deviation_linear() {
        let c = ctx(1.5, UNIT);
        let lam = solve_lambda(&c).unwrap();
        let (g1, n1) = remainder_g(0.1, &c, &lam).unwrap();
        let (g2, n2) = remainder_g(0.05, &c, &lam).unwrap();
        assert!((3.4..=4.6).contains(&(n1 / n2)), "{}", n1 / n2);
        let s = remainder_sup_ratio(&g1, &c) / remainder_sup_ratio(&g2, &c);
        assert!((3.4..=4.6).contains(&s), "{s}");
        assert!(g1.mass().abs() < 1e-8);
        let r1 = deviation_bound(&deviation_r(0.1, &c).unwrap(), &c);
        let r2 = deviation_bound(&deviation_r(0.05, &c).unwrap(), &c);
        assert!((1.6..=2.4).contains(&(r1 / r2)), "{}", r1 / r2);
        assert!(deviation_bound(&deviation_r(0.5, &c).unwrap(), &c) < 1e3);
    }

    #[test]
    fn drift_is_field_for_unit_kernel() {
        let c = ctx(1.0, UNIT);
        for e in [0.25, 0.5, 1.0] {
            let mu = drift_mu(e, &c).unwrap();
            assert!((mu - e).abs() < 1e-4, "{e}: {mu}");
        }
        assert_eq!(drift_mu(0.0, &c).unwrap(), 0.0);
    }

    #[test]
    fn drift_routes_agree_for_perturbed_kernel() {
        let c = ctx(1.0, BUMPY);
        let a = drift_mu(0.5, &c).unwrap();
        let b = drift_mu_balance(0.5, &c).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn field_derivative_report() {
        let c = ctx(1.5, UNIT);
        let r = check_de_f(0.0, &c).unwrap();
        assert!(r.ratio < 1e3 && r.stable);
        let d = r.derivative.unwrap();
        let n = d.len();
        for i in 0..n {
            assert!((d.values[i] + d.values[n - 1 - i]).abs() < 1e-6);
        }
    }
}
