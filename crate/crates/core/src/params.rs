//! Model instance: exponent, cross section, field, domain and the epsilon
//! schedule, plus the JSON configuration file that carries them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// Scattering cross section `sigma(v, v')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CrossSection {
    /// `sigma = nu0`.
    Constant { nu0: f64 },
    /// `sigma = nu0 + a (1+|v|)^{-1} (1+|v'|)^{-1}`.
    PerturbedConstant { nu0: f64, amplitude: f64 },
}

#[inline]
pub(crate) fn decay_profile(v: f64) -> f64 {
    1.0 / (1.0 + v.abs())
}

impl CrossSection {
    pub fn eval(&self, v: f64, vp: f64) -> f64 {
        match *self {
            CrossSection::Constant { nu0 } => nu0,
            CrossSection::PerturbedConstant { nu0, amplitude } => {
                nu0 + amplitude * decay_profile(v) * decay_profile(vp)
            }
        }
    }

    pub fn nu0(&self) -> f64 {
        match *self {
            CrossSection::Constant { nu0 } | CrossSection::PerturbedConstant { nu0, .. } => nu0,
        }
    }

    /// Declared bounds `(nu1, nu2)` with `nu1 <= sigma <= nu2`.
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            CrossSection::Constant { nu0 } => (nu0, nu0),
            CrossSection::PerturbedConstant { nu0, amplitude } => {
                (nu0 - amplitude.abs(), nu0 + amplitude.abs())
            }
        }
    }

    /// Constant `C` in `|sigma(v, v') - nu0| <= C / (1 + |v|)`.
    pub fn decay_constant(&self) -> f64 {
        match *self {
            CrossSection::Constant { .. } => 0.0,
            CrossSection::PerturbedConstant { amplitude, .. } => amplitude.abs(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        true
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, CrossSection::Constant { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let (nu1, nu2) = self.bounds();
        if !(nu1 > 0.0) || !nu2.is_finite() {
            return Err(Error::CrossSectionBoundsViolated { nu1, nu2 });
        }
        Ok(())
    }
}

/// Static acceleration field `E(x)` on the torus `[0, L)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FieldSpec {
    Zero,
    Constant { e0: f64 },
    /// `E(x) = e0 sin(2 pi m x / L)`.
    Sinusoidal { e0: f64, wavenumber: u32 },
}

impl FieldSpec {
    pub fn eval(&self, x: f64, length: f64) -> f64 {
        match *self {
            FieldSpec::Zero => 0.0,
            FieldSpec::Constant { e0 } => e0,
            FieldSpec::Sinusoidal { e0, wavenumber } => {
                e0 * (2.0 * PI * wavenumber as f64 * x / length).sin()
            }
        }
    }

    pub fn derivative(&self, x: f64, length: f64) -> f64 {
        match *self {
            FieldSpec::Zero | FieldSpec::Constant { .. } => 0.0,
            FieldSpec::Sinusoidal { e0, wavenumber } => {
                let k = 2.0 * PI * wavenumber as f64 / length;
                e0 * k * (k * x).cos()
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            FieldSpec::Zero => 0.0,
            FieldSpec::Constant { e0 } | FieldSpec::Sinusoidal { e0, .. } => e0.abs(),
        }
    }

    pub fn derivative_sup_norm(&self, length: f64) -> f64 {
        match *self {
            FieldSpec::Zero | FieldSpec::Constant { .. } => 0.0,
            FieldSpec::Sinusoidal { e0, wavenumber } => {
                e0.abs() * wavenumber as f64 * 2.0 * PI / length
            }
        }
    }

    pub fn is_uniform(&self) -> bool {
        !matches!(self, FieldSpec::Sinusoidal { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: f64,
    pub dim: usize,
    pub cross_section: CrossSection,
    pub field: FieldSpec,
    pub domain_length: f64,
    pub final_time: f64,
    pub epsilon_schedule: Vec<f64>,
    pub seed: u64,
}

impl ModelParams {
    pub fn eps_min(&self) -> f64 {
        self.epsilon_schedule.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Rejects dimensions other than one; used by the time-dependent solvers.
    pub fn require_1d(&self) -> Result<()> {
        if self.dim != 1 {
            return Err(Error::UnsupportedDimension(self.dim));
        }
        Ok(())
    }
}

/// Returns the params unchanged iff every invariant holds.
pub fn validate(params: ModelParams) -> Result<ModelParams> {
    if !(1.0..2.0).contains(&params.alpha) {
        return Err(Error::AlphaOutOfRange(params.alpha));
    }
    if params.dim == 0 {
        return Err(Error::UnsupportedDimension(0));
    }
    if !(params.domain_length > 0.0) || !(params.final_time > 0.0) {
        return Err(Error::NonPositiveDomain {
            length: params.domain_length,
            time: params.final_time,
        });
    }
    if params.epsilon_schedule.is_empty() {
        return Err(Error::EmptyEpsilonSchedule);
    }
    let eps = &params.epsilon_schedule;
    if eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidEpsilonSchedule(eps.clone()));
    }
    params.cross_section.validate()?;
    let e = params.field.sup_norm();
    if !e.is_finite() || e > 1.0 {
        return Err(Error::InvalidParameter(format!("field amplitude {e} outside [-1, 1]")));
    }
    Ok(params)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionConfig {
    pub kind: String,
    pub nu0: f64,
    #[serde(default)]
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub kind: String,
    #[serde(default)]
    pub e0: f64,
    #[serde(default)]
    pub wavenumber: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityGridConfig {
    pub nodes: usize,
    pub vmax_over_inv_eps: f64,
}

/// The on-disk configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub alpha: f64,
    pub dim: usize,
    pub cross_section: CrossSectionConfig,
    pub field: FieldConfig,
    pub domain_length: f64,
    pub final_time: f64,
    pub epsilon_schedule: Vec<f64>,
    pub seed: u64,
    pub particles: usize,
    pub velocity_grid: VelocityGridConfig,
    pub x_bins: usize,
    pub time_step_macro: f64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            dim: 1,
            cross_section: CrossSectionConfig {
                kind: "constant".into(),
                nu0: 1.0,
                amplitude: 0.0,
            },
            field: FieldConfig {
                kind: "zero".into(),
                e0: 0.0,
                wavenumber: 0,
            },
            domain_length: 2.0 * PI,
            final_time: 0.5,
            epsilon_schedule: vec![0.2, 0.1, 0.05],
            seed: 20_160_518,
            particles: 1_000_000,
            velocity_grid: VelocityGridConfig {
                nodes: 512,
                vmax_over_inv_eps: 10.0,
            },
            x_bins: 64,
            time_step_macro: 1e-3,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn cross_section(&self) -> Result<CrossSection> {
        let c = &self.cross_section;
        match c.kind.as_str() {
            "constant" => Ok(CrossSection::Constant { nu0: c.nu0 }),
            "perturbed_constant" => Ok(CrossSection::PerturbedConstant {
                nu0: c.nu0,
                amplitude: c.amplitude,
            }),
            other => Err(Error::Config(format!("unknown cross_section kind {other:?}"))),
        }
    }

    pub fn field(&self) -> Result<FieldSpec> {
        let f = &self.field;
        match f.kind.as_str() {
            "zero" => Ok(FieldSpec::Zero),
            "constant" => Ok(FieldSpec::Constant { e0: f.e0 }),
            "sinusoidal" => Ok(FieldSpec::Sinusoidal {
                e0: f.e0,
                wavenumber: f.wavenumber,
            }),
            other => Err(Error::Config(format!("unknown field kind {other:?}"))),
        }
    }

    /// Validated model parameters.
    pub fn model(&self) -> Result<ModelParams> {
        validate(ModelParams {
            alpha: self.alpha,
            dim: self.dim,
            cross_section: self.cross_section()?,
            field: self.field()?,
            domain_length: self.domain_length,
            final_time: self.final_time,
            epsilon_schedule: self.epsilon_schedule.clone(),
            seed: self.seed,
        })
    }

    /// Velocity extent tied to the smallest epsilon.
    pub fn vmax(&self) -> f64 {
        let eps_min = self.epsilon_schedule.iter().cloned().fold(f64::INFINITY, f64::min);
        self.velocity_grid.vmax_over_inv_eps / eps_min
    }

    pub fn check_runtime(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::Config("particles must be positive".into()));
        }
        if self.x_bins == 0 || !self.x_bins.is_power_of_two() {
            return Err(Error::Config("x_bins must be a power of two".into()));
        }
        if !(self.time_step_macro > 0.0) {
            return Err(Error::Config("time_step_macro must be positive".into()));
        }
        if self.velocity_grid.vmax_over_inv_eps < 10.0 {
            return Err(Error::Config(
                "velocity_grid.vmax_over_inv_eps must be at least 10".into(),
            ));
        }
        Ok(())
    }
}
