//! The auxiliary function `chi_eps`, the operator `L^eps` and its limit.
//!
//! For a trigonometric polynomial `phi = sum c_k e^{ikx}` the flight average
//! `chi_eps(x, v) = int_0^inf nu e^{-nu z} phi(x + eps v z) dz` is exact per
//! mode: `c_k nu / (nu - i k eps v)`. Everything below is built on that.

use crate::collision::CollisionContext;
use crate::coefficients::LimitCoefficients;
use crate::equilibria::solve_f;
use crate::error::{Error, Result};
use crate::macro_spectral::{eval_spectrum, wavenumber, Drift, MacroState};
use crate::params::FieldSpec;
use crate::quadrature::gauss_laguerre;
use crate::velocity::{power_tail_integral, VelocityProfile};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

pub const LAGUERRE_NODES: usize = 64;

/// Static test function on the periodic grid, with its spectrum.
#[derive(Clone, Debug)]
pub struct TestFunction {
    state: MacroState,
    spectrum: Vec<Complex64>,
}

impl TestFunction {
    pub fn from_state(state: MacroState) -> Self {
        let spectrum = state.spectrum();
        Self { state, spectrum }
    }

    pub fn constant(n: usize, length: f64, c: f64) -> Result<Self> {
        Ok(Self::from_state(MacroState::from_fn(n, length, |_| c)?))
    }

    /// `cos(2 pi m x / L)`.
    pub fn single_mode(n: usize, length: f64, m: u32) -> Result<Self> {
        if 2 * m as usize >= n {
            return Err(Error::InvalidParameter(format!("mode {m} not resolved by {n} nodes")));
        }
        let k = 2.0 * PI * m as f64 / length;
        Ok(Self::from_state(MacroState::from_fn(n, length, |x| (k * x).cos())?))
    }

    /// Periodized Gaussian `exp(-(x - L/2)^2 / (2 w^2))` with every mode
    /// above `band` removed.
    pub fn gaussian_bump(n: usize, length: f64, width: f64, band: usize) -> Result<Self> {
        if !(width > 0.0) || 2 * band >= n {
            return Err(Error::InvalidParameter(format!("width {width}, band {band}, n {n}")));
        }
        let centre = 0.5 * length;
        let raw = MacroState::from_fn(n, length, |x| {
            (-3..=3)
                .map(|p| {
                    let d = x - centre + p as f64 * length;
                    (-d * d / (2.0 * width * width)).exp()
                })
                .sum()
        })?;
        let mut spec = raw.spectrum();
        for (j, c) in spec.iter_mut().enumerate() {
            let signed = if j <= n / 2 { j } else { n - j };
            if signed > band {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        Ok(Self::from_state(raw.with_spectrum(spec)))
    }

    /// `a phi + b psi` on a common grid.
    pub fn combine(a: f64, phi: &Self, b: f64, psi: &Self) -> Result<Self> {
        if phi.len() != psi.len() || phi.length() != psi.length() {
            return Err(Error::GridMismatch);
        }
        let values = phi.values().iter().zip(psi.values()).map(|(p, q)| a * p + b * q).collect();
        Ok(Self::from_state(MacroState::new(phi.length(), values)?))
    }

    pub fn state(&self) -> &MacroState {
        &self.state
    }

    pub fn values(&self) -> &[f64] {
        &self.state.values
    }

    pub fn length(&self) -> f64 {
        self.state.length
    }

    pub fn len(&self) -> usize {
        self.state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.is_empty()
    }

    pub fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }

    /// Trigonometric interpolant; periodic in `x`.
    pub fn eval(&self, x: f64) -> f64 {
        eval_spectrum(&self.spectrum, self.length(), x)
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        let n = self.len();
        let l = self.length();
        let mut acc = 0.0;
        for (j, c) in self.spectrum.iter().enumerate() {
            if n % 2 == 0 && j == n / 2 {
                continue;
            }
            let k = wavenumber(j, n, l);
            acc += (c * Complex64::new(0.0, k) * Complex64::from_polar(1.0, k * x)).re;
        }
        acc / n as f64
    }

    /// Zero-mean part `phi - <phi>` at the nodes.
    fn fluctuation(&self) -> Vec<f64> {
        let mean = self.spectrum[0].re / self.len() as f64;
        self.values().iter().map(|v| v - mean).collect()
    }

    /// Nodal values of the multiplier `s(k)` applied to `phi`; the Nyquist
    /// slot keeps the even part of `s`.
    fn filtered<S: Fn(f64) -> Complex64>(&self, s: S) -> Vec<Complex64> {
        let n = self.len();
        let l = self.length();
        self.spectrum
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let k = wavenumber(j, n, l);
                if n % 2 == 0 && j == n / 2 {
                    c * 0.5 * (s(k) + s(-k))
                } else {
                    c * s(k)
                }
            })
            .collect()
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {eps} outside (0, 1]")));
    }
    Ok(())
}

/// `nu / (nu - i k eps v)`.
fn flight_symbol(nu: f64, k: f64, eps: f64, v: f64) -> Complex64 {
    Complex64::new(nu, 0.0) / Complex64::new(nu, -k * eps * v)
}

/// `chi_eps(x, v)`, exact per Fourier mode of `phi`.
pub fn chi_eps(phi: &TestFunction, eps: f64, x: f64, v: f64, ctx: &CollisionContext) -> Result<f64> {
    check_eps(eps)?;
    let nu = ctx.nu_at(v);
    let spec = phi.filtered(|k| flight_symbol(nu, k, eps, v));
    Ok(eval_spectrum(&spec, phi.length(), x))
}

/// `chi_eps(x, v)` by Gauss-Laguerre in `u = nu z`. Accurate while `phi`
/// varies slowly over the flight (`eps |v| k / nu` of order one or less).
pub fn chi_eps_laguerre(phi: &TestFunction, eps: f64, x: f64, v: f64, ctx: &CollisionContext) -> Result<f64> {
    check_eps(eps)?;
    let nu = ctx.nu_at(v);
    let rule = gauss_laguerre(LAGUERRE_NODES, 0.0);
    Ok(rule.integrate(|u| phi.eval(x + eps * v * u / nu)))
}

/// `nu chi - eps v d_x chi - nu phi` at `(x, v)`, with the spectral
/// derivative of the exact `chi`.
pub fn chi_residual(phi: &TestFunction, eps: f64, x: f64, v: f64, ctx: &CollisionContext) -> Result<f64> {
    check_eps(eps)?;
    let nu = ctx.nu_at(v);
    let chi = phi.filtered(|k| flight_symbol(nu, k, eps, v));
    let dchi = phi.filtered(|k| flight_symbol(nu, k, eps, v) * Complex64::new(0.0, k));
    let l = phi.length();
    let n = phi.len();
    let mut dchi = dchi;
    if n % 2 == 0 {
        dchi[n / 2] = Complex64::new(0.0, 0.0);
    }
    Ok(nu * eval_spectrum(&chi, l, x) - eps * v * eval_spectrum(&dchi, l, x) - nu * phi.eval(x))
}

/// `chi_eps(x_j, v_i)` for every grid pair, one row per velocity node.
pub fn chi_grid(phi: &TestFunction, eps: f64, ctx: &CollisionContext) -> Result<Vec<Vec<f64>>> {
    check_eps(eps)?;
    Ok(ctx
        .grid
        .nodes
        .par_iter()
        .zip(ctx.nu.values.par_iter())
        .map(|(&v, &nu)| {
            let spec = phi.filtered(|k| flight_symbol(nu, k, eps, v));
            phi.state.with_spectrum(spec).values
        })
        .collect())
}

/// Mass of the fitted tails of `f` beyond the grid.
fn tail_mass(f: &VelocityProfile) -> f64 {
    let vmax = f.grid.vmax();
    f.tail_fit()
        .iter()
        .flatten()
        .filter_map(|&(c, q)| power_tail_integral(0.0, q, vmax).map(|t| c * t))
        .sum()
}

/// `e(eps) = ( int ( int M |chi_eps - phi| dv )^2 dx )^{1/2}`.
///
/// Beyond `vmax`, `chi_eps` has relaxed to the mean of `phi`, so the tail of
/// `M` contributes `|phi - <phi>|` times its mass.
pub fn chi_decay_error(phi: &TestFunction, eps: f64, ctx: &CollisionContext) -> Result<f64> {
    let chi = chi_grid(phi, eps, ctx)?;
    let tail = tail_mass(&ctx.m);
    let fluct = phi.fluctuation();
    let dx = phi.state.dx();
    let mut total = 0.0;
    for (j, &p) in phi.values().iter().enumerate() {
        let inner: f64 = chi
            .iter()
            .zip(&ctx.grid.weights)
            .zip(&ctx.m.values)
            .map(|((row, w), m)| w * m * (row[j] - p).abs())
            .sum::<f64>()
            + tail * fluct[j].abs();
        total += inner * inner * dx;
    }
    Ok(total.sqrt())
}

/// Least-squares slope of `log y` against `log x`; `None` when a value is
/// not positive or fewer than two points are given.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || y.iter().chain(x).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiDecayReport {
    pub alpha: f64,
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: Option<f64>,
    /// `alpha - 0.2`.
    pub required_slope: f64,
    pub monotone: bool,
    pub pass: bool,
}

pub fn chi_decay_check(phi: &TestFunction, eps_list: &[f64], ctx: &CollisionContext) -> Result<ChiDecayReport> {
    if eps_list.is_empty() {
        return Err(Error::EmptyEpsilonSchedule);
    }
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidEpsilonSchedule(eps_list.to_vec()));
    }
    let errors = eps_list
        .iter()
        .map(|&e| chi_decay_error(phi, e, ctx))
        .collect::<Result<Vec<_>>>()?;
    let scale = phi.values().iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let vanishing = errors.iter().all(|e| *e <= 1e-13 * scale);
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
    let slope = if vanishing { None } else { loglog_slope(eps_list, &errors) };
    let required_slope = ctx.alpha - 0.2;
    let pass = vanishing || (monotone && slope.is_some_and(|s| s >= required_slope));
    Ok(ChiDecayReport {
        alpha: ctx.alpha,
        eps: eps_list.to_vec(),
        errors,
        slope,
        required_slope,
        monotone,
        pass,
    })
}

/// Equilibria `F(., E)` keyed by the exact field value; built up front, then
/// shared read-only.
#[derive(Debug, Default)]
pub struct EquilibriumCache {
    map: HashMap<u64, Arc<VelocityProfile>>,
}

impl EquilibriumCache {
    pub fn build(values: &[f64], ctx: &CollisionContext) -> Result<Self> {
        let mut distinct: Vec<f64> = Vec::new();
        for &e in values {
            if !distinct.iter().any(|d| d.to_bits() == e.to_bits()) {
                distinct.push(e);
            }
        }
        let solved = distinct
            .par_iter()
            .map(|&e| solve_f(e, ctx).map(|f| (e.to_bits(), Arc::new(f.profile))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            map: solved.into_iter().collect(),
        })
    }

    pub fn get(&self, e: f64) -> Option<&Arc<VelocityProfile>> {
        self.map.get(&e.to_bits())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Field value entering `F_eps` at `x`: `eps^{alpha-1} E(x)` for
/// `alpha > 1`, `E(x)` at `alpha = 1`.
pub fn scaled_field(field: &FieldSpec, x: f64, length: f64, eps: f64, alpha: f64) -> f64 {
    let e = field.eval(x, length);
    if alpha > 1.0 {
        eps.powf(alpha - 1.0) * e
    } else {
        e
    }
}

/// Per-mode symbol of `L^eps` for a fixed weight `f`:
/// `eps^{-alpha} [ sum_i w_i nu_i f_i i k eps v_i / (nu_i - i k eps v_i)
/// - nu_inf m_tail ]`. Beyond the grid `chi_eps - phi` has relaxed to
/// `-(phi - <phi>)`, which gives the last term for `k != 0`.
fn operator_symbol(k: f64, eps: f64, f: &VelocityProfile, tail: f64, ctx: &CollisionContext) -> Complex64 {
    if k == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let vmax = ctx.grid.vmax();
    let mut acc = Complex64::new(0.0, 0.0);
    for (((&v, &w), &nu), &fi) in ctx.grid.nodes.iter().zip(&ctx.grid.weights).zip(&ctx.nu.values).zip(&f.values) {
        let z = Complex64::new(0.0, k * eps * v);
        acc += w * nu * fi * z / (Complex64::new(nu, 0.0) - z);
    }
    acc -= ctx.nu_at(vmax) * tail;
    acc * eps.powf(-ctx.alpha)
}

/// `L^eps(phi)` on the nodes of `phi`, with one weight profile per node.
fn apply_operator(
    phi: &TestFunction,
    eps: f64,
    weights: &[Arc<VelocityProfile>],
    ctx: &CollisionContext,
) -> Result<MacroState> {
    check_eps(eps)?;
    let n = phi.len();
    let l = phi.length();
    let nodes = phi.state.nodes();
    // Group nodes sharing a weight so each symbol is computed once.
    let mut groups: Vec<(Arc<VelocityProfile>, Vec<usize>)> = Vec::new();
    for (j, w) in weights.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| Arc::ptr_eq(g, w)) {
            Some((_, idx)) => idx.push(j),
            None => groups.push((w.clone(), vec![j])),
        }
    }
    let pieces: Vec<Vec<(usize, f64)>> = groups
        .par_iter()
        .map(|(f, idx)| {
            let tail = tail_mass(f);
            let spec = phi.filtered(|k| operator_symbol(k, eps, f, tail, ctx));
            if idx.len() == n {
                let vals = phi.state.with_spectrum(spec).values;
                idx.iter().map(|&j| (j, vals[j])).collect()
            } else {
                idx.iter().map(|&j| (j, eval_spectrum(&spec, l, nodes[j]))).collect()
            }
        })
        .collect();
    let mut values = vec![0.0; n];
    for (j, v) in pieces.into_iter().flatten() {
        values[j] = v;
    }
    let mut out = MacroState::new(l, values)?;
    out.time = phi.state.time;
    Ok(out)
}

/// `L^eps(phi)(x) = eps^{-alpha} int nu F_eps(x, v) (chi_eps - phi) dv`.
pub fn l_eps(phi: &TestFunction, eps: f64, field: &FieldSpec, ctx: &CollisionContext) -> Result<MacroState> {
    check_eps(eps)?;
    let l = phi.length();
    let values: Vec<f64> = phi
        .state
        .nodes()
        .iter()
        .map(|&x| scaled_field(field, x, l, eps, ctx.alpha))
        .collect();
    let cache = EquilibriumCache::build(&values, ctx)?;
    let weights = values
        .iter()
        .map(|e| cache.get(*e).cloned().ok_or(Error::GridMismatch))
        .collect::<Result<Vec<_>>>()?;
    apply_operator(phi, eps, &weights, ctx)
}

/// `L^eps` with `F_eps` replaced by `M`: the drift-free part.
pub fn l_eps_equilibrium(phi: &TestFunction, eps: f64, ctx: &CollisionContext) -> Result<MacroState> {
    let m = Arc::new(ctx.m.clone());
    apply_operator(phi, eps, &vec![m; phi.len()], ctx)
}

/// `L(phi) = -kappa (-Lap)^{alpha/2} phi + b d_x phi`, the generator whose
/// adjoint is `-kappa (-Lap)^{alpha/2} rho - d_x(b rho)`.
pub fn limit_operator(phi: &TestFunction, coeffs: &LimitCoefficients, drift: &Drift) -> Result<MacroState> {
    let (kappa, alpha) = (coeffs.kappa, coeffs.alpha);
    let frac = phi.state.apply_multiplier(|k| Complex64::new(-kappa * k.abs().powf(alpha), 0.0));
    let grad = phi.state.derivative();
    let values = match drift {
        Drift::Zero => frac.values,
        Drift::Constant(b) => frac.values.iter().zip(&grad.values).map(|(a, g)| a + b * g).collect(),
        Drift::Sampled(b) => {
            if b.len() != phi.len() {
                return Err(Error::GridMismatch);
            }
            frac.values
                .iter()
                .zip(&grad.values)
                .zip(b)
                .map(|((a, g), b)| a + b * g)
                .collect()
        }
    };
    let mut out = MacroState::new(phi.length(), values)?;
    out.time = phi.state.time;
    Ok(out)
}
