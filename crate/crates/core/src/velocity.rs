//! Velocity-space discretization for heavy-tailed densities.
//!
//! Nodes come from the algebraic stretch `v = s w / sqrt(1 - w^2)` written in
//! the logarithmic coordinate `t = atanh(w)`, i.e. `v = s sinh(t)`. Each half
//! line `t in [0, asinh(vmax / s)]` carries a Gauss-Legendre rule, mirrored
//! onto the negative half, so node density decays like `1/|v|` and the
//! `|v|^{-1-alpha}` tails are sampled out to `vmax`.

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::sync::Arc;

/// Normalization constant `Z` of `M(v) = Z^{-1} (1 + v^2)^{-(1+alpha)/2}`.
pub fn m_normalization(alpha: f64) -> f64 {
    PI.sqrt() * (ln_gamma(alpha / 2.0) - ln_gamma((1.0 + alpha) / 2.0)).exp()
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(1.0..2.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// The heavy-tailed equilibrium `M(v)`, normalized on the real line, with
/// `|v|^{1+alpha} M(v) -> 1/Z`.
pub fn eval_m(v: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(m_unchecked(v, alpha))
}

#[inline]
pub(crate) fn m_unchecked(v: f64, alpha: f64) -> f64 {
    (1.0 + v * v).powf(-(1.0 + alpha) / 2.0) / m_normalization(alpha)
}

#[inline]
pub(crate) fn dm_unchecked(v: f64, alpha: f64) -> f64 {
    -(1.0 + alpha) * v * (1.0 + v * v).powf(-(3.0 + alpha) / 2.0) / m_normalization(alpha)
}

/// Parameters that fully determine a grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridDescriptor {
    pub n_nodes: usize,
    pub vmax: f64,
    pub stretch: f64,
}

#[derive(Debug, PartialEq)]
pub struct VelocityGrid {
    pub descriptor: GridDescriptor,
    /// Strictly increasing, `nodes[i] == -nodes[n - 1 - i]`.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Mapped coordinate `t_i = asinh(v_i / s)`.
    pub mapped: Vec<f64>,
    /// `dv/dt` at each node.
    pub jacobian: Vec<f64>,
}

impl VelocityGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn vmax(&self) -> f64 {
        self.descriptor.vmax
    }

    pub fn stretch(&self) -> f64 {
        self.descriptor.stretch
    }

    pub fn to_mapped(&self, v: f64) -> f64 {
        (v / self.descriptor.stretch).asinh()
    }

    /// `M` sampled on the nodes and rescaled so that `sum w_i M_i = 1`
    /// exactly; the scale factor (the raw quadrature mass) is returned too.
    pub fn discrete_equilibrium(self: &Arc<Self>, alpha: f64) -> Result<(VelocityProfile, f64)> {
        check_alpha(alpha)?;
        let raw: Vec<f64> = self.nodes.iter().map(|&v| m_unchecked(v, alpha)).collect();
        let mass: f64 = raw.iter().zip(&self.weights).map(|(m, w)| m * w).sum();
        let values = raw.iter().map(|m| m / mass).collect();
        Ok((VelocityProfile::new(self.clone(), values)?, mass))
    }

    pub fn profile_from_fn<F: Fn(f64) -> f64>(self: &Arc<Self>, f: F) -> VelocityProfile {
        let values = self.nodes.iter().map(|&v| f(v)).collect();
        VelocityProfile {
            grid: self.clone(),
            values,
        }
    }

    pub fn zeros(self: &Arc<Self>) -> VelocityProfile {
        VelocityProfile {
            grid: self.clone(),
            values: vec![0.0; self.len()],
        }
    }

    /// Derivative of the five-point Lagrange interpolant in the mapped
    /// coordinate, chained through `dv/dt`. Stencils never straddle `v = 0`,
    /// where the built-in collision frequencies have a kink, and are shifted
    /// inward near the ends.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let t = &self.mapped;
        (0..n)
            .map(|i| {
                let (lo, width) = stencil_window(n, i);
                let pts = &t[lo..lo + width];
                let d: f64 = (0..width)
                    .map(|j| lagrange_derivative_weight(pts, j, t[i]) * f[lo + j])
                    .sum();
                d / self.jacobian[i]
            })
            .collect()
    }
}

const STENCIL: usize = 5;

/// First index and width of the stencil for node `i`, kept on the half line
/// that contains the node when that half is long enough.
fn stencil_window(n: usize, i: usize) -> (usize, usize) {
    let half = n / 2;
    let (start, len) = if half >= STENCIL {
        if i < half {
            (0, half)
        } else {
            (half, n - half)
        }
    } else {
        (0, n)
    };
    let width = STENCIL.min(len);
    let lo = i.saturating_sub(width / 2).max(start).min(start + len - width);
    (lo, width)
}

/// Minimal excess decay `q - p - 1` for which a tail is added.
const TAIL_MARGIN: f64 = 0.05;

/// `L_j'(x)` for the Lagrange basis on `pts`.
fn lagrange_derivative_weight(pts: &[f64], j: usize, x: f64) -> f64 {
    let mut total = 0.0;
    for m in 0..pts.len() {
        if m == j {
            continue;
        }
        let mut prod = 1.0 / (pts[j] - pts[m]);
        for l in 0..pts.len() {
            if l != j && l != m {
                prod *= (x - pts[l]) / (pts[j] - pts[l]);
            }
        }
        total += prod;
    }
    total
}

/// Build the mapped grid. `stretch` is the scale `s` of the map; `n_nodes`
/// must be even so that the grid is symmetric without a node at zero.
pub fn build_grid(n_nodes: usize, vmax: f64, stretch: f64) -> Result<Arc<VelocityGrid>> {
    if n_nodes % 2 == 1 || n_nodes < 4 {
        return Err(Error::OddNodeCount(n_nodes));
    }
    if !(vmax > 0.0) || !vmax.is_finite() {
        return Err(Error::NonPositiveExtent(vmax));
    }
    if !(stretch > 0.0) {
        return Err(Error::InvalidParameter(format!("stretch must be positive, got {stretch}")));
    }
    let half = n_nodes / 2;
    let tmax = (vmax / stretch).asinh();
    let rule = gauss_legendre_on(half, 0.0, tmax);
    let mut nodes = vec![0.0; n_nodes];
    let mut weights = vec![0.0; n_nodes];
    let mut mapped = vec![0.0; n_nodes];
    let mut jacobian = vec![0.0; n_nodes];
    for (j, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        let v = stretch * t.sinh();
        let jac = stretch * t.cosh();
        let (pos, neg) = (half + j, half - 1 - j);
        nodes[pos] = v;
        nodes[neg] = -v;
        mapped[pos] = t;
        mapped[neg] = -t;
        jacobian[pos] = jac;
        jacobian[neg] = jac;
        weights[pos] = w * jac;
        weights[neg] = w * jac;
    }
    Ok(Arc::new(VelocityGrid {
        descriptor: GridDescriptor {
            n_nodes,
            vmax,
            stretch,
        },
        nodes,
        weights,
        mapped,
        jacobian,
    }))
}

/// Weight functions whose tail integrals against a power-law profile are
/// known in closed form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weight {
    /// `|v|^p`
    AbsPower(f64),
    /// `sign(v) |v|^p`; `OddPower(1.0)` is plain `v`.
    OddPower(f64),
}

impl Weight {
    pub fn eval(&self, v: f64) -> f64 {
        match *self {
            Weight::AbsPower(p) => v.abs().powf(p),
            Weight::OddPower(p) => v.signum() * v.abs().powf(p),
        }
    }
}

/// A function of velocity sampled on a particular grid.
#[derive(Clone, Debug)]
pub struct VelocityProfile {
    pub grid: Arc<VelocityGrid>,
    pub values: Vec<f64>,
}

impl VelocityProfile {
    pub fn new(grid: Arc<VelocityGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("profile has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.descriptor == other.grid.descriptor
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn check_on(&self, grid: &Arc<VelocityGrid>) -> Result<()> {
        if Arc::ptr_eq(&self.grid, grid) || self.grid.descriptor == grid.descriptor {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map<F: Fn(f64, f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self
                .grid
                .nodes
                .iter()
                .zip(&self.values)
                .map(|(&v, &x)| f(v, x))
                .collect(),
        }
    }

    pub fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Self, f: F) -> Result<Self> {
        self.check_grid(other)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|x| c * x).collect(),
        }
    }

    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + c * b)
    }

    /// `sum_i w_i f_i`.
    pub fn mass(&self) -> f64 {
        self.values.iter().zip(&self.grid.weights).map(|(f, w)| f * w).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Weighted L2 norm `(sum w_i f_i^2 / g_i)^{1/2}`.
    pub fn weighted_l2(&self, weight: &Self) -> Result<f64> {
        self.check_grid(weight)?;
        Ok(self
            .values
            .iter()
            .zip(&weight.values)
            .zip(&self.grid.weights)
            .map(|((f, g), w)| w * f * f / g)
            .sum::<f64>()
            .sqrt())
    }

    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.check_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(&self.grid.weights)
            .map(|((a, b), w)| w * (a - b).abs())
            .sum())
    }

    pub fn derivative(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.grid.derivative(&self.values),
        }
    }

    /// Tail model `f ~ c (1 + v^2)^{-q/2}` fitted to the two outermost nodes
    /// on each side. Returns `(c, q)` for the left and right tails, `None`
    /// when the outer values change sign or vanish.
    pub fn tail_fit(&self) -> [Option<(f64, f64)>; 2] {
        let n = self.len();
        let fit = |i_out: usize, i_in: usize| {
            let (a, b) = (self.values[i_out], self.values[i_in]);
            if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
                return None;
            }
            let (va, vb) = (self.grid.nodes[i_out], self.grid.nodes[i_in]);
            let (sa, sb) = (1.0 + va * va, 1.0 + vb * vb);
            let q = -2.0 * (a / b).ln() / (sa / sb).ln();
            Some((a * sa.powf(q / 2.0), q))
        };
        [fit(0, 1), fit(n - 1, n - 2)]
    }

    /// `sum_i w_i weight(v_i) f(v_i)` over the grid only.
    pub fn moment_fn<W: Fn(f64) -> f64>(&self, weight: W) -> f64 {
        self.grid
            .nodes
            .iter()
            .zip(&self.grid.weights)
            .zip(&self.values)
            .map(|((&v, &w), &f)| w * weight(v) * f)
            .sum()
    }

    /// Moment against a power weight plus the analytic contribution of the
    /// fitted tails beyond `vmax`. A tail whose integral diverges is dropped
    /// (truncation at `vmax`).
    pub fn moment(&self, weight: Weight) -> f64 {
        let body = self.moment_fn(|v| weight.eval(v));
        let vmax = self.grid.vmax();
        let (p, odd) = match weight {
            Weight::AbsPower(p) => (p, false),
            Weight::OddPower(p) => (p, true),
        };
        let mut tail = 0.0;
        for (side, fit) in self.tail_fit().iter().enumerate() {
            if let Some((c, q)) = *fit {
                if let Some(piece) = power_tail_integral(p, q, vmax) {
                    let sign = if odd && side == 0 { -1.0 } else { 1.0 };
                    tail += sign * c * piece;
                }
            }
        }
        body + tail
    }

    /// Monotone interpolant of the ratio `f / M` in the mapped coordinate.
    pub fn interpolant(&self, alpha: f64) -> RatioInterpolant {
        RatioInterpolant::new(self, alpha)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("v,value\n");
        for (v, f) in self.grid.nodes.iter().zip(&self.values) {
            let _ = writeln!(out, "{v:.17e},{f:.17e}");
        }
        out
    }
}

/// `int_a^inf v^p (1 + v^2)^{-q/2} dv` for `a > 1` by the binomial series
/// of `(1 + v^{-2})^{-q/2}`; `None` when the integral diverges or is too
/// close to the borderline for a fitted exponent to be trusted.
pub fn power_tail_integral(p: f64, q: f64, a: f64) -> Option<f64> {
    if !(q - p > 1.0 + TAIL_MARGIN) || !(a > 1.0) {
        return None;
    }
    let mut coef = 1.0;
    let mut total = 0.0;
    for k in 0..200 {
        let e = q + 2.0 * k as f64 - p - 1.0;
        let term = coef * a.powf(-e) / e;
        total += term;
        if term.abs() < 1e-17 * total.abs() {
            break;
        }
        coef *= (-q / 2.0 - k as f64) / (k as f64 + 1.0);
    }
    Some(total)
}

/// Off-grid evaluation `f(v) = M(v) r(t(v))` with `r` a cubic Hermite
/// interpolant (fourth-order slopes, Hyman-filtered) through the nodal
/// ratios `f_i / M(v_i)`, clamped at zero between nonnegative nodes. Beyond the grid
/// the ratio is frozen, so `f` continues with the `|v|^{-1-alpha}` tail of
/// `M`. Nonnegative data stay nonnegative.
#[derive(Clone, Debug)]
pub struct RatioInterpolant {
    grid: Arc<VelocityGrid>,
    alpha: f64,
    ratio: Vec<f64>,
    slope: Vec<f64>,
}

impl RatioInterpolant {
    fn new(profile: &VelocityProfile, alpha: f64) -> Self {
        let grid = profile.grid.clone();
        let ratio: Vec<f64> = grid
            .nodes
            .iter()
            .zip(&profile.values)
            .map(|(&v, &f)| f / m_unchecked(v, alpha))
            .collect();
        let slope = hyman_slopes(&grid.mapped, &ratio);
        Self {
            grid,
            alpha,
            ratio,
            slope,
        }
    }

    pub fn ratio_at(&self, v: f64) -> f64 {
        let t = self.grid.to_mapped(v);
        let ts = &self.grid.mapped;
        let n = ts.len();
        if t <= ts[0] {
            return self.ratio[0];
        }
        if t >= ts[n - 1] {
            return self.ratio[n - 1];
        }
        let k = ts.partition_point(|&x| x <= t) - 1;
        let h = ts[k + 1] - ts[k];
        let s = (t - ts[k]) / h;
        let (y0, y1) = (self.ratio[k], self.ratio[k + 1]);
        let (d0, d1) = (self.slope[k] * h, self.slope[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let r = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1;
        if y0 >= 0.0 && y1 >= 0.0 {
            r.max(0.0)
        } else {
            r
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        self.ratio_at(v) * m_unchecked(v, self.alpha)
    }
}

/// Fourth-order slopes from the five-point stencil, passed through Hyman's
/// filter: wherever the data are locally monotone the slope is clipped to
/// `3 min(|delta|)` with the sign of the data, which keeps the cubic
/// monotone there.
fn hyman_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / (x[k + 1] - x[k])).collect();
    (0..n)
        .map(|i| {
            let (lo, width) = stencil_window(n, i);
            let pts = &x[lo..lo + width];
            let d: f64 = (0..width)
                .map(|j| lagrange_derivative_weight(pts, j, x[i]) * y[lo + j])
                .sum();
            let left = if i > 0 { Some(delta[i - 1]) } else { None };
            let right = if i + 1 < n { Some(delta[i]) } else { None };
            let (sign, bound) = match (left, right) {
                (Some(l), Some(r)) if l * r > 0.0 => (l.signum(), 3.0 * l.abs().min(r.abs())),
                (Some(l), None) if l != 0.0 => (l.signum(), 3.0 * l.abs()),
                (None, Some(r)) if r != 0.0 => (r.signum(), 3.0 * r.abs()),
                (Some(l), Some(r)) if l == 0.0 && r == 0.0 => return 0.0,
                _ => return d,
            };
            if d * sign <= 0.0 {
                0.0
            } else {
                sign * (d.abs().min(bound))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_gk;
    use statrs::function::gamma::gamma;

    #[test]
    fn cauchy_value_at_origin() {
        assert!((eval_m(0.0, 1.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!(matches!(eval_m(0.0, 0.5), Err(Error::AlphaOutOfRange(_))));
        assert!(matches!(eval_m(0.0, 2.0), Err(Error::AlphaOutOfRange(_))));
    }

    #[test]
    fn m_is_even() {
        for &v in &[0.5, 1.0, 10.0] {
            assert_eq!(eval_m(v, 1.3).unwrap(), eval_m(-v, 1.3).unwrap());
        }
    }

    #[test]
    fn tail_constant() {
        let alpha = 1.5;
        let z = PI.sqrt() * gamma(alpha / 2.0) / gamma((1.0 + alpha) / 2.0);
        let v: f64 = 1e3;
        let scaled = v.powf(1.0 + alpha) * eval_m(v, alpha).unwrap();
        assert!((scaled * z - 1.0).abs() < 1e-3);
    }

    #[test]
    fn grid_errors() {
        assert!(matches!(build_grid(127, 10.0, 1.0), Err(Error::OddNodeCount(127))));
        assert!(matches!(build_grid(128, 0.0, 1.0), Err(Error::NonPositiveExtent(_))));
        assert!(matches!(build_grid(128, -3.0, 1.0), Err(Error::NonPositiveExtent(_))));
    }

    #[test]
    fn grid_is_antisymmetric_and_increasing() {
        let g = build_grid(128, 100.0, 1.0).unwrap();
        let n = g.len();
        for i in 0..n {
            assert_eq!(g.nodes[i], -g.nodes[n - 1 - i]);
            assert_eq!(g.weights[i], g.weights[n - 1 - i]);
        }
        assert!(g.nodes.windows(2).all(|w| w[0] < w[1]));
        assert!(g.weights.iter().all(|&w| w > 0.0));
    }

    #[test]
    fn quadrature_matches_adaptive_oracle_on_truncated_line() {
        let alpha = 1.5;
        let vmax = 100.0;
        let g = build_grid(128, vmax, 1.0).unwrap();
        let (_, raw_mass) = g.discrete_equilibrium(alpha).unwrap();
        let oracle = 2.0 * adaptive_gk(|v| m_unchecked(v, alpha), 0.0, vmax, 1e-14, 1e-14);
        assert!((raw_mass - oracle).abs() < 1e-8, "{raw_mass} vs {oracle}");
        // Exact tail: 1 - mass on the truncated line; compared with the
        // leading-order power law gamma |v|^{-1-alpha}.
        let gamma_m = 1.0 / m_normalization(alpha);
        let tail = 2.0 * gamma_m * vmax.powf(-alpha) / alpha;
        assert!((raw_mass + tail - 1.0).abs() < 1e-6);
    }

    #[test]
    fn normalized_equilibrium_has_unit_mass() {
        let g = build_grid(256, 400.0, 1.0).unwrap();
        let (m, _) = g.discrete_equilibrium(1.0).unwrap();
        assert!((m.mass() - 1.0).abs() < 1e-13);
        assert!(m.moment(Weight::OddPower(1.0)).abs() < 1e-10);
        assert!(m.values.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn fractional_moment_is_resolution_stable() {
        let alpha = 1.5;
        let mom = |n| {
            let g = build_grid(n, 100.0, 1.0).unwrap();
            let m = g.profile_from_fn(|v| m_unchecked(v, alpha));
            m.moment(Weight::AbsPower(alpha - 0.1))
        };
        let (a, b) = (mom(128), mom(256));
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn divergent_moment_grows_with_extent() {
        let alpha = 1.5;
        let mom = |vmax| {
            let g = build_grid(256, vmax, 1.0).unwrap();
            let m = g.profile_from_fn(|v| m_unchecked(v, alpha));
            m.moment(Weight::AbsPower(alpha + 0.5))
        };
        let (lo, hi) = (mom(1e2), mom(1e3));
        assert!(hi > 1.5 * lo, "{lo} {hi}");
    }

    #[test]
    fn first_absolute_moment_alpha_one_grows_logarithmically() {
        let mom = |vmax| {
            let g = build_grid(256, vmax, 1.0).unwrap();
            let m = g.profile_from_fn(|v| m_unchecked(v, 1.0));
            m.moment(Weight::AbsPower(1.0))
        };
        let diff = mom(1e3) - mom(1e2);
        let expected = 2.0 * 10f64.ln() / PI;
        assert!((diff / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn first_absolute_moment_converges_for_alpha_above_one() {
        let alpha = 1.5;
        let mom = |n| {
            let g = build_grid(n, 1e4, 1.0).unwrap();
            g.profile_from_fn(|v| m_unchecked(v, alpha)).moment(Weight::AbsPower(1.0))
        };
        // E|v| under M: Z^{-1} * 2 * int_0^inf v (1+v^2)^{-(1+alpha)/2} dv = 2 / ((alpha-1) Z)
        let exact = 2.0 / ((alpha - 1.0) * m_normalization(alpha));
        let (a, b) = (mom(256), mom(512));
        assert!((a - b).abs() < 1e-6);
        assert!((b - exact).abs() < 1e-6, "{b} vs {exact}");
    }

    #[test]
    fn derivative_matches_analytic() {
        let alpha = 1.5;
        let g = build_grid(512, 1e3, 1.0).unwrap();
        let m = g.profile_from_fn(|v| m_unchecked(v, alpha));
        let d = m.derivative();
        for (i, &v) in g.nodes.iter().enumerate() {
            let exact = dm_unchecked(v, alpha);
            assert!((d.values[i] - exact).abs() < 1e-4 * m.values[i].max(1e-3 * m.max_abs()));
        }
    }

    #[test]
    fn interpolant_reproduces_m_exactly_and_keeps_sign() {
        let alpha = 1.25;
        let g = build_grid(64, 50.0, 1.0).unwrap();
        let m = g.profile_from_fn(|v| m_unchecked(v, alpha));
        let it = m.interpolant(alpha);
        for &v in &[-300.0, -3.3, 0.0, 0.01, 7.0, 1e4] {
            let exact = m_unchecked(v, alpha);
            assert!((it.eval(v) - exact).abs() < 1e-14 * exact.max(1e-300) + 1e-300);
        }
        let bumpy = g.profile_from_fn(|v| m_unchecked(v, alpha) * (1.0 + (3.0 * v).sin()).max(0.0));
        let it = bumpy.interpolant(alpha);
        for k in 0..2000 {
            let v = -60.0 + 0.06 * k as f64;
            assert!(it.eval(v) >= 0.0);
        }
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let g = build_grid(8, 5.0, 1.0).unwrap();
        let csv = g.zeros().to_csv();
        assert!(csv.starts_with("v,value\n"));
        assert_eq!(csv.lines().count(), 9);
    }
}
