//! Linear Boltzmann operator on the velocity grid: gain `K`, collision
//! frequency `nu`, `Q = K - nu`, the flight inverse `A^{-1}` of
//! `A = nu + E d/dv`, the field operator `T = -Q + E d/dv`, and the
//! quadratic-form checks behind the coercivity estimates.

use crate::error::{Error, Result};
use crate::params::{decay_profile, CrossSection};
use crate::quadrature::{gauss_legendre, Rule};
use crate::velocity::{check_alpha, VelocityGrid, VelocityProfile};
use std::sync::Arc;

/// Gauss-Legendre nodes per flight panel.
pub const PANEL_NODES: usize = 8;
/// Flights are cut at `nu_min s = FLIGHT_CUTOFF`; the discarded weight is
/// below `e^{-40}`.
pub const FLIGHT_CUTOFF: f64 = 40.0;

/// Everything the collision operators need, fixed once per (alpha, sigma,
/// grid).
#[derive(Clone, Debug)]
pub struct CollisionContext {
    pub alpha: f64,
    pub grid: Arc<VelocityGrid>,
    pub cross_section: CrossSection,
    /// Equilibrium normalized so that `sum w_i M_i = 1`.
    pub m: VelocityProfile,
    pub nu: VelocityProfile,
    /// Quadrature mass of the unnormalized `M` on the grid.
    pub raw_mass: f64,
    /// `sum_j w_j p(v_j) M_j` with `p(v) = 1/(1+|v|)`.
    m_p: f64,
    nu_inf: f64,
    panel: Rule,
}

impl CollisionContext {
    pub fn new(alpha: f64, cross_section: CrossSection, grid: Arc<VelocityGrid>) -> Result<Self> {
        check_alpha(alpha)?;
        cross_section.validate()?;
        let (m, raw_mass) = grid.discrete_equilibrium(alpha)?;
        let m_p = m.moment_fn(decay_profile);
        let nu_values = grid
            .nodes
            .iter()
            .map(|&v| {
                grid.nodes
                    .iter()
                    .zip(&grid.weights)
                    .zip(&m.values)
                    .map(|((&vp, &w), &mj)| w * cross_section.eval(vp, v) * mj)
                    .sum()
            })
            .collect();
        let nu = VelocityProfile::new(grid.clone(), nu_values)?;
        let nu_inf = match cross_section {
            CrossSection::Constant { nu0 } => nu0,
            CrossSection::PerturbedConstant { nu0, amplitude } => nu0.min(nu0 + amplitude * m_p),
        };
        Ok(Self {
            alpha,
            grid,
            cross_section,
            m,
            nu,
            raw_mass,
            m_p,
            nu_inf,
            panel: gauss_legendre(PANEL_NODES),
        })
    }

    /// `nu(v)` off the grid, consistent with the nodal values.
    pub fn nu_at(&self, v: f64) -> f64 {
        match self.cross_section {
            CrossSection::Constant { nu0 } => nu0,
            CrossSection::PerturbedConstant { nu0, amplitude } => {
                nu0 + amplitude * self.m_p * decay_profile(v)
            }
        }
    }

    /// Greatest lower bound of `nu` over the real line.
    pub fn nu_min(&self) -> f64 {
        self.nu_inf
    }

    /// `int_0^s nu(v - E tau) d tau`, in closed form for both built-ins.
    pub fn flight_integral(&self, v: f64, e: f64, s: f64) -> f64 {
        match self.cross_section {
            CrossSection::Constant { nu0 } => nu0 * s,
            CrossSection::PerturbedConstant { nu0, amplitude } => {
                let shift = e * s;
                let part = if shift.abs() <= 1e-9 * (1.0 + v.abs()) {
                    s * decay_profile(v - 0.5 * shift)
                } else {
                    (log_antiderivative(v) - log_antiderivative(v - shift)) / e
                };
                nu0 * s + amplitude * self.m_p * part
            }
        }
    }

    fn panel_integral<F: Fn(f64) -> f64>(&self, f: &F, lo: f64, hi: f64) -> f64 {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        half * self
            .panel
            .nodes
            .iter()
            .zip(&self.panel.weights)
            .map(|(&x, &w)| w * f(mid + half * x))
            .sum::<f64>()
    }

    /// Gain term `K(f)(v_i) = M_i sum_j w_j sigma(v_i, v_j) f_j`.
    pub fn gain(&self, f: &VelocityProfile) -> Result<VelocityProfile> {
        f.check_on(&self.grid)?;
        let g = &self.grid;
        let values = match self.cross_section {
            CrossSection::Constant { nu0 } => {
                let rho = f.mass();
                self.m.values.iter().map(|&m| m * nu0 * rho).collect()
            }
            CrossSection::PerturbedConstant { nu0, amplitude } => {
                let rho = f.mass();
                let fp = f.moment_fn(decay_profile);
                g.nodes
                    .iter()
                    .zip(&self.m.values)
                    .map(|(&v, &m)| m * (nu0 * rho + amplitude * decay_profile(v) * fp))
                    .collect()
            }
        };
        VelocityProfile::new(g.clone(), values)
    }

    /// Gain term by the plain double sum over node pairs; the summation
    /// order is the transpose of the one used for `nu`.
    pub fn gain_dense(&self, f: &VelocityProfile) -> Result<VelocityProfile> {
        f.check_on(&self.grid)?;
        let g = &self.grid;
        let values = g
            .nodes
            .iter()
            .zip(&self.m.values)
            .map(|(&v, &m)| {
                let s: f64 = g
                    .nodes
                    .iter()
                    .zip(&g.weights)
                    .zip(&f.values)
                    .map(|((&vp, &w), &fj)| w * self.cross_section.eval(v, vp) * fj)
                    .sum();
                m * s
            })
            .collect();
        VelocityProfile::new(g.clone(), values)
    }
}

/// Antiderivative of `1/(1+|u|)`.
fn log_antiderivative(u: f64) -> f64 {
    u.signum() * u.abs().ln_1p()
}

pub fn apply_q(f: &VelocityProfile, ctx: &CollisionContext) -> Result<VelocityProfile> {
    let gain = ctx.gain(f)?;
    let values = gain
        .values
        .iter()
        .zip(&f.values)
        .zip(&ctx.nu.values)
        .map(|((&k, &fi), &nu)| k - nu * fi)
        .collect();
    VelocityProfile::new(ctx.grid.clone(), values)
}

/// `(A^{-1} h)(v) = int_0^inf exp(-int_0^s nu(v - E tau) d tau) h(v - E s) ds`.
///
/// In `u = nu_min s` the integrand is `e^{-u}` times a factor bounded by
/// `|h|`; `[0, FLIGHT_CUTOFF]` is cut into Gauss-Legendre panels no wider
/// than the time a flight takes to cross the unit core of `M`. `h` is
/// evaluated off the grid through the ratio interpolant, which continues it
/// with the tail of `M`.
pub fn apply_a_inverse(h: &VelocityProfile, e: f64, ctx: &CollisionContext) -> Result<VelocityProfile> {
    h.check_on(&ctx.grid)?;
    if !e.is_finite() {
        return Err(Error::InvalidParameter(format!("field value {e}")));
    }
    if e == 0.0 {
        return h.zip_with(&ctx.nu, |hi, nu| hi / nu);
    }
    let interp = h.interpolant(ctx.alpha);
    let nmin = ctx.nu_min();
    let width = (0.5 * nmin / e.abs()).min(1.0);
    let panels = (FLIGHT_CUTOFF / width).ceil() as usize;
    let du = FLIGHT_CUTOFF / panels as f64;
    let kinked = !ctx.cross_section.is_constant();
    let values = ctx
        .grid
        .nodes
        .iter()
        .map(|&v| {
            let integrand = |u: f64| {
                let s = u / nmin;
                (-ctx.flight_integral(v, e, s)).exp() * interp.eval(v - e * s)
            };
            // `nu` has a kink at zero velocity, reached at `u = nu_min v / E`.
            let kink = if kinked { nmin * v / e } else { -1.0 };
            let mut total = 0.0;
            for k in 0..panels {
                let (lo, hi) = (k as f64 * du, (k + 1) as f64 * du);
                if kink > lo && kink < hi {
                    total += ctx.panel_integral(&integrand, lo, kink);
                    total += ctx.panel_integral(&integrand, kink, hi);
                } else {
                    total += ctx.panel_integral(&integrand, lo, hi);
                }
            }
            total / nmin
        })
        .collect();
    VelocityProfile::new(ctx.grid.clone(), values)
}

/// `nu g + E dg/dv`, the operator that `A^{-1}` inverts.
pub fn apply_a(g: &VelocityProfile, e: f64, ctx: &CollisionContext) -> Result<VelocityProfile> {
    g.check_on(&ctx.grid)?;
    let dg = g.derivative();
    let ng = g.zip_with(&ctx.nu, |a, b| a * b)?;
    ng.axpy(e, &dg)
}

pub fn apply_t(f: &VelocityProfile, e: f64, ctx: &CollisionContext) -> Result<VelocityProfile> {
    let q = apply_q(f, ctx)?;
    let df = f.derivative();
    q.scale(-1.0).axpy(e, &df)
}

/// `(-sum w Q(f) f / M, nu1 sum w |f - rho_f M|^2 / M)`.
pub fn dissipation_q(f: &VelocityProfile, ctx: &CollisionContext) -> Result<(f64, f64)> {
    let q = apply_q(f, ctx)?;
    let g = &ctx.grid;
    let rho = f.mass();
    let (nu1, _) = ctx.cross_section.bounds();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..g.len() {
        let m = ctx.m.values[i];
        lhs -= g.weights[i] * q.values[i] * f.values[i] / m;
        let d = f.values[i] - rho * m;
        rhs += g.weights[i] * d * d / m;
    }
    Ok((lhs, nu1 * rhs))
}

/// Residual above which a profile is not accepted as the field equilibrium.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-4;

/// `(sum w T(f) f / F, theta)` with `theta` the ratio of the form to
/// `||f - rho_f F||^2` in `L^2(F^{-1})` (infinite when that vanishes).
pub fn dissipation_t(
    f: &VelocityProfile,
    e: f64,
    big_f: &VelocityProfile,
    ctx: &CollisionContext,
) -> Result<(f64, f64)> {
    f.check_grid(big_f)?;
    let res = apply_t(big_f, e, ctx)?.max_abs();
    if res > EQUILIBRIUM_TOLERANCE * big_f.max_abs() {
        return Err(Error::NonEquilibriumF(res));
    }
    let t = apply_t(f, e, ctx)?;
    let g = &ctx.grid;
    let rho = f.mass();
    let mut lhs = 0.0;
    let mut dist = 0.0;
    for i in 0..g.len() {
        let fe = big_f.values[i];
        lhs += g.weights[i] * t.values[i] * f.values[i] / fe;
        let d = f.values[i] - rho * fe;
        dist += g.weights[i] * d * d / fe;
    }
    let theta = if dist > 0.0 { lhs / dist } else { f64::INFINITY };
    Ok((lhs, theta))
}

/// `||h||` in `L^2(M^{-1})`.
pub fn norm_m(h: &VelocityProfile, ctx: &CollisionContext) -> Result<f64> {
    h.weighted_l2(&ctx.m)
}
