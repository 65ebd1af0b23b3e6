//! Particle Monte Carlo for the scaled kinetic equation
//! `d_t f + s_x v d_x f + s_v E d_v f = s_c Q(f)` on the torus.
//!
//! The diffusive scaling has `s_x = eps^{1-alpha}`, `s_v = 1/eps`,
//! `s_c = eps^{-alpha}`; the high-field scaling has `s_x = 1`,
//! `s_v = s_c = 1/eps`.

use crate::collision::CollisionContext;
use crate::error::{Error, Result};
use crate::macro_spectral::MacroState;
use crate::params::{CrossSection, FieldSpec};
use crate::quadrature::{gauss_legendre, Rule};
use crate::velocity::{check_alpha, power_tail_integral, RatioInterpolant, VelocityProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Substep cap for flights through an `x`-dependent field, as a fraction
/// of the domain length.
pub const SUBSTEP_FRACTION: f64 = 1.0 / 64.0;

/// Exact draw from `M(v) = Z^{-1} (1+v^2)^{-(1+alpha)/2}`.
///
/// `M` is the law of `T / sqrt(alpha)` with `T` Student-t with `alpha`
/// degrees of freedom, i.e. of `N / sqrt(W)` with `N` standard normal and
/// `W` chi-square with `alpha` degrees of freedom.
pub fn sample_m<R: Rng + ?Sized>(rng: &mut R, chi: &ChiSquared<f64>) -> f64 {
    let n: f64 = StandardNormal.sample(rng);
    let w = chi.sample(rng);
    n / w.sqrt()
}

pub fn m_sampler(alpha: f64) -> Result<ChiSquared<f64>> {
    check_alpha(alpha)?;
    ChiSquared::new(alpha).map_err(|e| Error::InvalidParameter(e.to_string()))
}

/// Analytic distribution function of `M`.
pub fn m_cdf(v: f64, alpha: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let t = StudentsT::new(0.0, 1.0, alpha).expect("alpha > 0");
    t.cdf(v * alpha.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scaling {
    Diffusive,
    HighField,
}

/// Everything a flight needs, fixed per run.
#[derive(Clone, Debug, Serialize)]
pub struct KineticSettings {
    pub alpha: f64,
    pub eps: f64,
    pub scaling: Scaling,
    pub cross_section: CrossSection,
    pub field: FieldSpec,
    pub length: f64,
    /// `nu(v) = nu0 + nu_decay / (1 + |v|)`.
    pub nu_decay: f64,
    /// When false no collisions happen: pure characteristics.
    pub collisions: bool,
}

impl KineticSettings {
    /// `nu_decay` is read off the context: `nu(0) - nu0`.
    pub fn new(
        ctx: &CollisionContext,
        eps: f64,
        scaling: Scaling,
        field: FieldSpec,
        length: f64,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidParameter(format!("epsilon {eps} outside (0, 1]")));
        }
        if !(length > 0.0) {
            return Err(Error::NonPositiveDomain { length, time: 0.0 });
        }
        Ok(Self {
            alpha: ctx.alpha,
            eps,
            scaling,
            cross_section: ctx.cross_section,
            field,
            length,
            nu_decay: ctx.nu_at(0.0) - ctx.cross_section.nu0(),
            collisions: true,
        })
    }

    pub fn without_collisions(mut self) -> Self {
        self.collisions = false;
        self
    }

    /// `(s_x, s_v, s_c)`.
    pub fn factors(&self) -> (f64, f64, f64) {
        let e = self.eps;
        match self.scaling {
            Scaling::Diffusive => (e.powf(1.0 - self.alpha), 1.0 / e, e.powf(-self.alpha)),
            Scaling::HighField => (1.0, 1.0 / e, 1.0 / e),
        }
    }

    pub fn nu(&self, v: f64) -> f64 {
        self.cross_section.nu0() + self.nu_decay / (1.0 + v.abs())
    }

    /// Largest value of `sigma`, the majorant of the candidate clock.
    pub fn sigma_max(&self) -> f64 {
        match self.cross_section {
            CrossSection::Constant { nu0 } => nu0,
            CrossSection::PerturbedConstant { nu0, amplitude } => nu0 + amplitude.max(0.0),
        }
    }
}

/// Closed-form characteristic over a time `s` in a frozen field `e`.
pub fn free_flight(x: f64, v: f64, e: f64, s: f64, sx: f64, sv: f64) -> (f64, f64) {
    let a = sv * e;
    (x + sx * (v * s + 0.5 * a * s * s), v + a * s)
}

/// Flight through the (possibly `x`-dependent) field, with the field frozen
/// on substeps moving at most `L * SUBSTEP_FRACTION`.
fn fly(x: f64, v: f64, s: f64, set: &KineticSettings, sx: f64, sv: f64) -> (f64, f64) {
    let l = set.length;
    if set.field.is_uniform() {
        let (x, v) = free_flight(x, v, set.field.eval(0.0, l), s, sx, sv);
        return (x.rem_euclid(l), v);
    }
    let cap = l * SUBSTEP_FRACTION;
    let amax = sv * set.field.sup_norm();
    let (mut x, mut v, mut left) = (x, v, s);
    while left > 0.0 {
        // Largest h with sx (|v| h + amax h^2 / 2) <= cap.
        let b = v.abs();
        let h_cap = if amax == 0.0 {
            cap / (sx * b.max(f64::MIN_POSITIVE))
        } else {
            (-b + (b * b + 2.0 * amax * cap / sx).sqrt()) / amax
        };
        let h = left.min(h_cap);
        let (nx, nv) = free_flight(x, v, set.field.eval(x, l), h, sx, sv);
        x = nx.rem_euclid(l);
        v = nv;
        left -= h;
    }
    (x, v)
}

/// One stream of the ensemble: a contiguous block of particles and its RNG.
#[derive(Clone, Debug)]
struct Partition {
    rng: ChaCha8Rng,
    collisions: u64,
}

#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub length: f64,
    pub time: f64,
    pub seed: u64,
    partitions: Vec<Partition>,
}

/// Run manifest entry for one partition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionRecord {
    pub index: usize,
    pub seed: u64,
    pub stream: u64,
    pub particles: usize,
    pub collisions: u64,
}

fn chunk_size(n: usize, partitions: usize) -> usize {
    n.div_ceil(partitions).max(1)
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Initial density `exp(k cos(2 pi (x - L/2) / L)) / (L I_0(k))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VonMises {
    pub concentration: f64,
}

fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum, mut m) = (1.0, 1.0, 0.0);
    while term > 1e-17 * sum {
        m += 1.0;
        term *= q / (m * m);
        sum += term;
    }
    sum
}

impl VonMises {
    pub fn density(&self, x: f64, length: f64) -> f64 {
        let k = self.concentration;
        (k * (2.0 * PI * (x - 0.5 * length) / length).cos()).exp() / (length * bessel_i0(k))
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, length: f64) -> f64 {
        let k = self.concentration;
        loop {
            let x = rng.random::<f64>() * length;
            let u: f64 = rng.random();
            if u < (k * ((2.0 * PI * (x - 0.5 * length) / length).cos() - 1.0)).exp() {
                return x;
            }
        }
    }

    pub fn state(&self, n: usize, length: f64) -> Result<MacroState> {
        MacroState::from_fn(n, length, |x| self.density(x, length))
    }
}

impl ParticleEnsemble {
    /// `n` particles from `rho(x) M(v)`, `partitions` independent streams.
    pub fn sample(
        n: usize,
        length: f64,
        rho: &VonMises,
        alpha: f64,
        seed: u64,
        partitions: usize,
    ) -> Result<Self> {
        if n == 0 || partitions == 0 {
            return Err(Error::InvalidParameter("empty ensemble".into()));
        }
        if !(length > 0.0) {
            return Err(Error::NonPositiveDomain { length, time: 0.0 });
        }
        let chi = m_sampler(alpha)?;
        let size = chunk_size(n, partitions);
        let mut positions = vec![0.0; n];
        let mut velocities = vec![0.0; n];
        let mut parts: Vec<Partition> = (0..partitions)
            .map(|i| Partition {
                rng: stream_rng(seed, i),
                collisions: 0,
            })
            .collect();
        positions
            .par_chunks_mut(size)
            .zip(velocities.par_chunks_mut(size))
            .zip(parts.par_iter_mut())
            .for_each(|((xs, vs), part)| {
                for (x, v) in xs.iter_mut().zip(vs.iter_mut()) {
                    *x = rho.sample(&mut part.rng, length);
                    *v = sample_m(&mut part.rng, &chi);
                }
            });
        Ok(Self {
            positions,
            velocities,
            length,
            time: 0.0,
            seed,
            partitions: parts,
        })
    }

    /// Ensemble with given phase-space points; used by tests and the
    /// characteristic check.
    pub fn from_points(positions: Vec<f64>, velocities: Vec<f64>, length: f64, seed: u64, partitions: usize) -> Result<Self> {
        if positions.len() != velocities.len() || positions.is_empty() || partitions == 0 {
            return Err(Error::InvalidParameter("inconsistent particle arrays".into()));
        }
        let positions = positions.into_iter().map(|x| x.rem_euclid(length)).collect();
        Ok(Self {
            positions,
            velocities,
            length,
            time: 0.0,
            seed,
            partitions: (0..partitions)
                .map(|i| Partition {
                    rng: stream_rng(seed, i),
                    collisions: 0,
                })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn collisions(&self) -> u64 {
        self.partitions.iter().map(|p| p.collisions).sum()
    }

    pub fn manifest(&self) -> Vec<PartitionRecord> {
        let size = chunk_size(self.len(), self.partitions.len());
        self.partitions
            .iter()
            .enumerate()
            .map(|(i, p)| PartitionRecord {
                index: i,
                seed: self.seed,
                stream: i as u64,
                particles: self.len().saturating_sub(i * size).min(size),
                collisions: p.collisions,
            })
            .collect()
    }

    /// Moves every particle to time `until`.
    ///
    /// Candidate events arrive at the constant rate `s_c sigma_max`; a
    /// candidate draws `v'` from `M` and becomes a collision with
    /// probability `sigma(v', v) / sigma_max`. The accepted jumps then
    /// happen at rate `s_c nu(v)` with post-collision law
    /// `sigma(v', v) M(v') / nu(v)`, which is `Q` exactly.
    pub fn advance(&mut self, set: &KineticSettings, until: f64) -> Result<()> {
        if until < self.time {
            return Err(Error::NonMonotoneTime {
                now: self.time,
                until,
            });
        }
        if set.length != self.length {
            return Err(Error::GridMismatch);
        }
        let span = until - self.time;
        if span == 0.0 {
            return Ok(());
        }
        let chi = m_sampler(set.alpha)?;
        let (sx, sv, sc) = set.factors();
        let rate = sc * set.sigma_max();
        let sigma_max = set.sigma_max();
        let size = chunk_size(self.len(), self.partitions.len());
        self.positions
            .par_chunks_mut(size)
            .zip(self.velocities.par_chunks_mut(size))
            .zip(self.partitions.par_iter_mut())
            .for_each(|((xs, vs), part)| {
                for (x, v) in xs.iter_mut().zip(vs.iter_mut()) {
                    let mut left = span;
                    loop {
                        let wait = if set.collisions {
                            let e: f64 = Exp1.sample(&mut part.rng);
                            e / rate
                        } else {
                            f64::INFINITY
                        };
                        let s = wait.min(left);
                        let (nx, nv) = fly(*x, *v, s, set, sx, sv);
                        *x = nx;
                        *v = nv;
                        left -= s;
                        if wait >= left + s {
                            break;
                        }
                        let vp = sample_m(&mut part.rng, &chi);
                        let accept = match set.cross_section {
                            CrossSection::Constant { .. } => true,
                            cs => part.rng.random::<f64>() * sigma_max < cs.eval(vp, *v),
                        };
                        if accept {
                            *v = vp;
                            part.collisions += 1;
                        }
                        if left <= 0.0 {
                            break;
                        }
                    }
                }
            });
        self.time = until;
        Ok(())
    }

    /// Histogram of positions over `bins` equal cells, `sum rho dx = 1`.
    /// Value `j` belongs to the cell `[j h, (j+1) h)`.
    pub fn estimate_density(&self, bins: usize) -> Result<MacroState> {
        histogram(&self.positions, self.length, bins, self.time)
    }

    /// Histograms of the even- and odd-indexed halves.
    pub fn split_densities(&self, bins: usize) -> Result<(MacroState, MacroState)> {
        let even: Vec<f64> = self.positions.iter().step_by(2).cloned().collect();
        let odd: Vec<f64> = self.positions.iter().skip(1).step_by(2).cloned().collect();
        Ok((
            histogram(&even, self.length, bins, self.time)?,
            histogram(&odd, self.length, bins, self.time)?,
        ))
    }

    /// Split-half estimate of the L1 sampling error of the full histogram:
    /// half-size histograms differ by twice the full-size fluctuation.
    pub fn noise_floor(&self, bins: usize) -> Result<f64> {
        let (a, b) = self.split_densities(bins)?;
        Ok(0.5 * a.l1_distance(&b)?)
    }
}

pub fn histogram(positions: &[f64], length: f64, bins: usize, time: f64) -> Result<MacroState> {
    if positions.is_empty() {
        return Err(Error::InvalidParameter("no particles".into()));
    }
    let h = length / bins as f64;
    let mut counts = vec![0u64; bins];
    for &x in positions {
        let b = ((x / h) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let norm = 1.0 / (positions.len() as f64 * h);
    let mut s = MacroState::new(length, counts.iter().map(|&c| c as f64 * norm).collect())?;
    s.time = time;
    Ok(s)
}

/// Cell centres `(j + 1/2) h` of a histogram.
pub fn bin_centres(length: f64, bins: usize) -> Vec<f64> {
    let h = length / bins as f64;
    (0..bins).map(|j| (j as f64 + 0.5) * h).collect()
}

/// Kolmogorov-Smirnov distance between the sample and a distribution
/// function.
pub fn ks_statistic<C: Fn(f64) -> f64 + Sync>(samples: &[f64], cdf: C) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.par_sort_unstable_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .reduce(|| 0.0, f64::max)
}

/// Distribution function of a grid profile: the ratio interpolant between
/// nodes, fitted tails outside, normalized to total mass one.
pub struct ProfileCdf {
    interp: RatioInterpolant,
    stretch: f64,
    mapped: Vec<f64>,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    tails: [Option<(f64, f64)>; 2],
    total: f64,
    rule: Rule,
}

impl ProfileCdf {
    pub fn new(profile: &VelocityProfile, alpha: f64) -> Self {
        let grid = profile.grid.clone();
        let interp = profile.interpolant(alpha);
        let rule = gauss_legendre(8);
        let tails = profile.tail_fit();
        let vmax = grid.vmax();
        let tail_mass = |fit: Option<(f64, f64)>| {
            fit.and_then(|(c, q)| power_tail_integral(0.0, q, vmax).map(|t| c * t)).unwrap_or(0.0)
        };
        let mut cdf = Self {
            interp,
            stretch: grid.stretch(),
            mapped: grid.mapped.clone(),
            nodes: grid.nodes.clone(),
            cumulative: Vec::with_capacity(grid.len()),
            tails,
            total: 1.0,
            rule,
        };
        let mut acc = tail_mass(tails[0]);
        cdf.cumulative.push(acc);
        for k in 0..grid.len() - 1 {
            acc += cdf.piece(cdf.mapped[k], cdf.mapped[k + 1]);
            cdf.cumulative.push(acc);
        }
        cdf.total = acc + tail_mass(tails[1]);
        cdf
    }

    /// Integral of the interpolant between two mapped coordinates.
    fn piece(&self, a: f64, b: f64) -> f64 {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        half * self
            .rule
            .nodes
            .iter()
            .zip(&self.rule.weights)
            .map(|(&x, &w)| {
                let t = mid + half * x;
                w * self.interp.eval(self.stretch * t.sinh()) * self.stretch * t.cosh()
            })
            .sum::<f64>()
    }

    pub fn eval(&self, v: f64) -> f64 {
        let n = self.nodes.len();
        let tail = |fit: Option<(f64, f64)>, a: f64| {
            fit.and_then(|(c, q)| power_tail_integral(0.0, q, a).map(|t| c * t)).unwrap_or(0.0)
        };
        let raw = if v <= self.nodes[0] {
            tail(self.tails[0], -v)
        } else if v >= self.nodes[n - 1] {
            self.total - tail(self.tails[1], v)
        } else {
            let k = self.nodes.partition_point(|&x| x <= v) - 1;
            let t = (v / self.stretch).asinh();
            self.cumulative[k] + self.piece(self.mapped[k], t)
        };
        raw / self.total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::adaptive_gk;
    use crate::velocity::{build_grid, eval_m};

    fn ctx(alpha: f64, cs: CrossSection) -> CollisionContext {
        CollisionContext::new(alpha, cs, build_grid(128, 1e4, 1.0).unwrap()).unwrap()
    }

    #[test]
    fn sampler_matches_m() {
        let alpha = 1.5;
        let chi = m_sampler(alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..1_000_000).map(|_| sample_m(&mut rng, &chi)).collect();
        // Oracle: distribution function by quadrature of the density.
        let cdf = |v: f64| {
            let mass = adaptive_gk(|t| eval_m(t, alpha).unwrap(), 0.0, v.abs(), 1e-14, 1e-12);
            if v >= 0.0 {
                0.5 + mass
            } else {
                0.5 - mass
            }
        };
        for v in [-3.0, -0.4, 0.0, 1.0, 10.0] {
            assert!((cdf(v) - m_cdf(v, alpha)).abs() < 1e-9);
        }
        let ks = ks_statistic(&xs, |v| m_cdf(v, alpha));
        assert!(ks < 0.002, "{ks}");
        let sign: f64 = xs.iter().map(|v| v.signum()).sum::<f64>() / xs.len() as f64;
        assert!(sign.abs() < 0.003);
        let tail = xs.iter().filter(|v| v.abs() > 50.0).count() as f64 / xs.len() as f64;
        let gamma = 1.0 / crate::velocity::m_normalization(alpha);
        let expect = 2.0 * gamma * 50f64.powf(-1.5) / 1.5;
        assert!((tail / expect - 1.0).abs() < 0.1, "{tail} {expect}");
    }

    #[test]
    fn poisson_collision_count() {
        let c = ctx(1.5, CrossSection::Constant { nu0: 1.0 });
        let set = KineticSettings::new(&c, 0.2, Scaling::Diffusive, FieldSpec::Zero, 1.0).unwrap();
        let n = 20_000;
        let mut ens = ParticleEnsemble::from_points(vec![0.5; n], vec![0.0; n], 1.0, 3, 4).unwrap();
        let t = 0.5;
        ens.advance(&set, t).unwrap();
        let mean = t / 0.2f64.powf(1.5);
        let per = ens.collisions() as f64 / n as f64;
        assert!((per - mean).abs() < 3.0 * (mean / n as f64).sqrt(), "{per} {mean}");
    }

    #[test]
    fn collisionless_flight_is_the_characteristic() {
        let c = ctx(1.5, CrossSection::Constant { nu0: 1.0 });
        let l = 50.0;
        let set = KineticSettings::new(&c, 0.3, Scaling::Diffusive, FieldSpec::Constant { e0: 0.4 }, l)
            .unwrap()
            .without_collisions();
        let mut ens = ParticleEnsemble::from_points(vec![1.0], vec![-0.7], l, 1, 1).unwrap();
        ens.advance(&set, 0.25).unwrap();
        ens.advance(&set, 0.6).unwrap();
        let (sx, a) = (0.3f64.powf(-0.5), 0.4 / 0.3);
        let t = 0.6;
        let x = (1.0 + sx * (-0.7 * t + 0.5 * a * t * t)).rem_euclid(l);
        assert!((ens.positions[0] - x).abs() < 1e-12);
        assert!((ens.velocities[0] - (-0.7 + a * t)).abs() < 1e-12);
        assert!(matches!(ens.advance(&set, 0.1), Err(Error::NonMonotoneTime { .. })));
    }

    #[test]
    fn substepped_flight_conserves_energy_in_a_potential() {
        // E = e0 sin(kx) comes from a potential, so v^2/2 - (sv/sx) U(x) is
        // conserved along exact trajectories; frozen substeps keep it close.
        let c = ctx(1.5, CrossSection::Constant { nu0: 1.0 });
        let l = 2.0 * PI;
        let field = FieldSpec::Sinusoidal { e0: 0.5, wavenumber: 1 };
        let set = KineticSettings::new(&c, 1.0, Scaling::Diffusive, field, l).unwrap().without_collisions();
        let mut ens = ParticleEnsemble::from_points(vec![0.3], vec![0.2], l, 1, 1).unwrap();
        let energy = |x: f64, v: f64| 0.5 * v * v + 0.5 * (x).cos();
        let before = energy(0.3, 0.2);
        ens.advance(&set, 3.0).unwrap();
        let after = energy(ens.positions[0], ens.velocities[0]);
        assert!((after - before).abs() < 0.02, "{before} {after}");
    }

    #[test]
    fn histogram_normalization_and_point_mass() {
        let l = 2.0;
        let s = histogram(&vec![1.0; 100], l, 16, 0.0).unwrap();
        let h = l / 16.0;
        assert_eq!(s.values.iter().filter(|v| **v != 0.0).count(), 1);
        assert!((s.values[8] - 1.0 / h).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * l).collect();
        let s = histogram(&xs, l, 16, 0.0).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-12);
        let p = 1.0 / 16.0;
        let se = (p * (1.0 - p) / n as f64).sqrt() / h;
        for v in &s.values {
            assert!((v - 1.0 / l).abs() < 4.0 * se);
        }
    }

    #[test]
    fn reproducible_for_fixed_seed_and_partitions() {
        let c = ctx(1.5, CrossSection::PerturbedConstant { nu0: 1.0, amplitude: 0.5 });
        let set = KineticSettings::new(&c, 0.2, Scaling::Diffusive, FieldSpec::Sinusoidal { e0: 0.5, wavenumber: 1 }, 2.0 * PI)
            .unwrap();
        let rho = VonMises { concentration: 2.0 };
        let run = || {
            let mut e = ParticleEnsemble::sample(5000, 2.0 * PI, &rho, 1.5, 99, 4).unwrap();
            e.advance(&set, 0.2).unwrap();
            e.estimate_density(32).unwrap()
        };
        assert_eq!(run().values, run().values);
        let e = ParticleEnsemble::sample(5001, 2.0 * PI, &rho, 1.5, 99, 4).unwrap();
        let total: usize = e.manifest().iter().map(|r| r.particles).sum();
        assert_eq!(total, 5001);
    }

    #[test]
    fn velocities_relax_to_m_without_field() {
        let c = ctx(1.5, CrossSection::PerturbedConstant { nu0: 1.0, amplitude: 0.5 });
        let set = KineticSettings::new(&c, 0.1, Scaling::Diffusive, FieldSpec::Zero, 2.0 * PI).unwrap();
        let n = 1_000_000;
        let mut ens = ParticleEnsemble::from_points(vec![1.0; n], vec![3.0; n], 2.0 * PI, 5, 8).unwrap();
        ens.advance(&set, 0.5).unwrap();
        let ks = ks_statistic(&ens.velocities, |v| m_cdf(v, 1.5));
        assert!(ks < 0.005, "{ks}");
        assert_eq!(ens.len(), n);
    }

    #[test]
    fn profile_cdf_matches_analytic_laws() {
        let c = CollisionContext::new(1.0, CrossSection::Constant { nu0: 1.0 }, build_grid(512, 200.0, 1.0).unwrap()).unwrap();
        let cdf = ProfileCdf::new(&c.m, 1.0);
        for v in [-300.0, -20.0, -1.0, -0.01, 0.0, 0.3, 2.0, 150.0, 1e4] {
            assert!((cdf.eval(v) - m_cdf(v, 1.0)).abs() < 1e-5, "{v}");
        }
        // Oracle for sigma = 1: F = int e^{-z} M(v - E z) dz, so its CDF is
        // int e^{-z} CDF_M(v - E z) dz.
        let e = 0.5;
        let f = crate::equilibria::solve_f(e, &c).unwrap().profile;
        let cdf = ProfileCdf::new(&f, 1.0);
        for v in [-30.0, -1.0, 0.0, 0.4, 1.5, 8.0, 400.0] {
            let exact = adaptive_gk(|z| (-z).exp() * m_cdf(v - e * z, 1.0), 0.0, 60.0, 1e-14, 1e-12);
            assert!((cdf.eval(v) - exact).abs() < 1e-4, "{v}: {} {exact}", cdf.eval(v));
        }
    }

    #[test]
    fn von_mises_density_is_normalized() {
        let rho = VonMises { concentration: 2.0 };
        let s = rho.state(256, 3.0).unwrap();
        assert!((s.mass() - 1.0).abs() < 1e-13);
    }
}
