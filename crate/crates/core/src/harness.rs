//! Convergence studies, their reports and the files they are written to.

use crate::aux::{chi_decay_check, l_eps, l_eps_equilibrium, limit_operator, loglog_slope, ChiDecayReport, TestFunction};
use crate::coefficients::{matrix_d, LimitCoefficients};
use crate::collision::CollisionContext;
use crate::equilibria::{drift_mu, solve_f, solve_lambda};
use crate::error::{Error, Result};
use crate::kinetic::{bin_centres, ks_statistic, KineticSettings, ParticleEnsemble, ProfileCdf, Scaling, VonMises};
use crate::macro_spectral::{advance_macro, Drift, MacroState};
use crate::params::{Config, FieldSpec};
use crate::velocity::{build_grid, VelocityGrid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

/// Largest admissible excess of the finest error over the noise floor.
pub const ERROR_MARGIN: f64 = 0.05;
/// Velocity-marginal KS threshold against `F(., E)`.
pub const KS_THRESHOLD: f64 = 0.01;
/// Concentration of the von Mises initial density.
pub const INITIAL_CONCENTRATION: f64 = 2.0;
/// Independent RNG streams; fixed so results do not depend on thread count.
pub const PARTITIONS: usize = 16;
/// Grid of the macroscopic solver.
pub const MACRO_NODES: usize = 512;
/// Snapshot times as fractions of the final time.
pub const SNAPSHOT_FRACTIONS: [f64; 2] = [0.5, 1.0];
/// Velocity extent of the operator study grid; the spec floor is 10/eps_min.
pub const OPERATOR_VMAX: f64 = 1e6;

/// Which drift law the macroscopic equation uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriftLaw {
    /// `D E(x)`, the regime `alpha in (1, 2)`.
    Matrix,
    /// `mu(E(x))`, the critical case `alpha = 1`.
    Mu,
    /// Chosen from `alpha`.
    Auto,
}

pub fn velocity_grid(config: &Config) -> Result<Arc<VelocityGrid>> {
    build_grid(config.velocity_grid.nodes, config.vmax(), 1.0)
}

pub fn context(config: &Config) -> Result<CollisionContext> {
    config.check_runtime()?;
    let model = config.model()?;
    model.require_1d()?;
    CollisionContext::new(model.alpha, model.cross_section, velocity_grid(config)?)
}

fn resolve_law(alpha: f64, law: DriftLaw) -> Result<DriftLaw> {
    match (law, alpha > 1.0) {
        (DriftLaw::Auto, true) => Ok(DriftLaw::Matrix),
        (DriftLaw::Auto, false) => Ok(DriftLaw::Mu),
        (DriftLaw::Matrix, false) => Err(Error::ConfigRegimeMismatch(
            "alpha = 1 has no drift matrix D; the critical case drifts with mu(E)".into(),
        )),
        (l, _) => Ok(l),
    }
}

/// `mu(E)` for each distinct field value, solved once per value.
fn mu_map(values: &[f64], ctx: &CollisionContext) -> Result<HashMap<u64, f64>> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup_by(|a, b| a.to_bits() == b.to_bits());
    let pairs = distinct
        .par_iter()
        .map(|&e| drift_mu(e, ctx).map(|m| (e.to_bits(), m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().collect())
}

/// Drift `b(x)` of the limit equation on `nodes`.
pub fn limit_drift(field: &FieldSpec, length: f64, nodes: &[f64], law: DriftLaw, ctx: &CollisionContext) -> Result<(Drift, Option<f64>)> {
    let law = resolve_law(ctx.alpha, law)?;
    if matches!(field, FieldSpec::Zero) {
        return Ok((Drift::Zero, None));
    }
    let values: Vec<f64> = nodes.iter().map(|&x| field.eval(x, length)).collect();
    match law {
        DriftLaw::Matrix => {
            let d = matrix_d(&solve_lambda(ctx)?, ctx)?;
            Ok(match field {
                FieldSpec::Constant { e0 } => (Drift::Constant(d * e0), Some(d)),
                _ => (Drift::Sampled(values.iter().map(|e| d * e).collect()), Some(d)),
            })
        }
        _ => {
            let mu = mu_map(&values, ctx)?;
            Ok(match field {
                FieldSpec::Constant { e0 } => (Drift::Constant(mu[&e0.to_bits()]), None),
                _ => (Drift::Sampled(values.iter().map(|e| mu[&e.to_bits()]).collect()), None),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub bin_centres: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub limit: Vec<f64>,
    pub l1_error: f64,
    pub linf_error: f64,
    pub noise_floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRun {
    pub eps: f64,
    pub snapshots: Vec<Snapshot>,
    pub collisions: u64,
    /// KS distance of the final velocity marginal to `F` at the effective
    /// field; only for uniform fields.
    pub ks_statistic: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub monotone: bool,
    pub finest_within_margin: bool,
    pub ks_within_threshold: Option<bool>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub scaling: Scaling,
    pub config: Config,
    pub seed: u64,
    pub drift: String,
    pub kappa: f64,
    pub eps: Vec<f64>,
    /// L1 error at the final time, per epsilon.
    pub l1_errors: Vec<f64>,
    pub linf_errors: Vec<f64>,
    pub noise_floors: Vec<f64>,
    pub fitted_order: Option<f64>,
    pub runs: Vec<EpsilonRun>,
    pub verdicts: Verdicts,
}

impl ConvergenceReport {
    /// Verdicts from the recorded numbers alone.
    pub fn evaluate(&self) -> Verdicts {
        let monotone = self.l1_errors.windows(2).all(|w| w[1] < w[0]);
        let finest_within_margin = match (self.l1_errors.last(), self.noise_floors.last()) {
            (Some(e), Some(n)) => e - n < ERROR_MARGIN,
            _ => false,
        };
        let ks_within_threshold = self
            .runs
            .last()
            .and_then(|r| r.ks_statistic)
            .map(|k| k < KS_THRESHOLD);
        let pass = monotone && finest_within_margin && ks_within_threshold.unwrap_or(true);
        Verdicts {
            monotone,
            finest_within_margin,
            ks_within_threshold,
            pass,
        }
    }

    pub fn finest_error(&self) -> f64 {
        self.l1_errors.last().copied().unwrap_or(f64::NAN)
    }
}

/// Field value seen by the velocity dynamics under each scaling.
fn effective_field(e: f64, eps: f64, alpha: f64, scaling: Scaling) -> f64 {
    match scaling {
        Scaling::Diffusive if alpha > 1.0 => eps.powf(alpha - 1.0) * e,
        _ => e,
    }
}

/// Kinetic runs for each epsilon against the limit equation.
///
/// Diffusive scaling compares with
/// `d_t rho + kappa (-Lap)^{alpha/2} rho + d_x(b rho) = 0`, `b = D E` or
/// `mu(E)`; high-field scaling compares with `d_t rho + d_x(mu(E) rho) = 0`.
pub fn run_study(label: &str, config: &Config, scaling: Scaling, law: DriftLaw) -> Result<ConvergenceReport> {
    let model = config.model()?;
    let ctx = context(config)?;
    let l = model.domain_length;
    let t_final = model.final_time;
    let law = match scaling {
        Scaling::Diffusive => resolve_law(model.alpha, law)?,
        Scaling::HighField => DriftLaw::Mu,
    };
    let coeffs = LimitCoefficients::compute(&ctx, None)?;
    let kappa = match scaling {
        Scaling::Diffusive => coeffs.kappa,
        Scaling::HighField => 0.0,
    };
    let rho = VonMises {
        concentration: INITIAL_CONCENTRATION,
    };
    let init = rho.state(MACRO_NODES, l)?;
    let (drift, _) = limit_drift(&model.field, l, &init.nodes(), law, &ctx)?;
    let times: Vec<f64> = SNAPSHOT_FRACTIONS.iter().map(|f| f * t_final).collect();
    let mut limits = Vec::new();
    let mut state = init.clone();
    for &t in &times {
        state = advance_macro(&state, config.time_step_macro, model.alpha, kappa, &drift, t)?;
        limits.push(state.cell_averages(config.x_bins));
    }
    let centres = bin_centres(l, config.x_bins);
    let h = l / config.x_bins as f64;
    let mut runs = Vec::new();
    for &eps in &model.epsilon_schedule {
        let set = KineticSettings::new(&ctx, eps, scaling, model.field, l)?;
        let mut ens = ParticleEnsemble::sample(config.particles, l, &rho, model.alpha, model.seed, PARTITIONS)?;
        let mut snapshots = Vec::new();
        for (&t, limit) in times.iter().zip(&limits) {
            ens.advance(&set, t)?;
            let kinetic = ens.estimate_density(config.x_bins)?;
            let diffs: Vec<f64> = kinetic.values.iter().zip(limit).map(|(a, b)| (a - b).abs()).collect();
            snapshots.push(Snapshot {
                time: t,
                bin_centres: centres.clone(),
                kinetic: kinetic.values.clone(),
                limit: limit.clone(),
                l1_error: diffs.iter().sum::<f64>() * h,
                linf_error: diffs.iter().cloned().fold(0.0, f64::max),
                noise_floor: ens.noise_floor(config.x_bins)?,
            });
        }
        let ks = if model.field.is_uniform() {
            let e = effective_field(model.field.eval(0.0, l), eps, model.alpha, scaling);
            let f = solve_f(e, &ctx)?.profile;
            let cdf = ProfileCdf::new(&f, model.alpha);
            Some(ks_statistic(&ens.velocities, |v| cdf.eval(v)))
        } else {
            None
        };
        runs.push(EpsilonRun {
            eps,
            snapshots,
            collisions: ens.collisions(),
            ks_statistic: ks,
        });
    }
    let last = |r: &EpsilonRun| r.snapshots.last().cloned().expect("at least one snapshot");
    let l1_errors: Vec<f64> = runs.iter().map(|r| last(r).l1_error).collect();
    let linf_errors = runs.iter().map(|r| last(r).linf_error).collect();
    let noise_floors = runs.iter().map(|r| last(r).noise_floor).collect();
    let mut report = ConvergenceReport {
        label: label.to_string(),
        scaling,
        config: config.clone(),
        seed: model.seed,
        drift: drift.describe(),
        kappa,
        fitted_order: loglog_slope(&model.epsilon_schedule, &l1_errors),
        eps: model.epsilon_schedule.clone(),
        l1_errors,
        linf_errors,
        noise_floors,
        runs,
        verdicts: Verdicts {
            monotone: false,
            finest_within_margin: false,
            ks_within_threshold: None,
            pass: false,
        },
    };
    report.verdicts = report.evaluate();
    Ok(report)
}

/// The diffusive-scaling study of a config.
pub fn run_convergence(config: &Config) -> Result<ConvergenceReport> {
    run_study(&case_label(config), config, Scaling::Diffusive, DriftLaw::Auto)
}

/// The high-field study of a config.
pub fn run_high_field(config: &Config) -> Result<ConvergenceReport> {
    run_study(&format!("high-field {}", case_label(config)), config, Scaling::HighField, DriftLaw::Mu)
}

pub fn case_label(config: &Config) -> String {
    let field = match config.field() {
        Ok(FieldSpec::Zero) => "E=0".to_string(),
        Ok(FieldSpec::Constant { e0 }) => format!("E={e0}"),
        Ok(FieldSpec::Sinusoidal { e0, wavenumber }) => format!("E={e0}sin({wavenumber}x)"),
        Err(_) => "E=?".into(),
    };
    format!("alpha={} sigma={} {}", config.alpha, config.cross_section.kind, field)
}

fn base_case(alpha: f64, e0: f64, scale: f64, final_time: f64) -> Config {
    let mut c = Config {
        alpha,
        domain_length: 2.0 * PI * scale,
        final_time,
        ..Config::default()
    };
    if e0 != 0.0 {
        c.field.kind = "constant".into();
        c.field.e0 = e0;
    }
    c
}

/// The three end-to-end cases. Kinetic-minus-limit errors scale with the
/// product of epsilon and the dominant wavenumber, so the `alpha = 1.5`
/// cases run on a domain six times wider, over the time `6^{1.5}` times
/// longer that keeps `kappa k^alpha t` unchanged.
pub fn convergence_cases() -> Vec<Config> {
    let wide = 0.5 * 6f64.powf(1.5);
    vec![
        base_case(1.5, 0.0, 6.0, wide),
        base_case(1.5, 0.5, 6.0, wide),
        base_case(1.0, 0.5, 1.0, 0.5),
    ]
}

/// High-field case: transport at speed `mu(E)`, fluctuations of order
/// `eps^{1 - 1/alpha}` around it.
pub fn high_field_case() -> Config {
    base_case(1.5, 0.5, 4.0, 0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorReport {
    pub label: String,
    pub alpha: f64,
    pub config: Config,
    pub drift: String,
    pub eps: Vec<f64>,
    pub sup_errors: Vec<f64>,
    pub l2_errors: Vec<f64>,
    pub fitted_order: Option<f64>,
    /// `L^eps` with `F_eps` replaced by `M`, against the drift-free limit.
    pub equilibrium_sup_errors: Vec<f64>,
    pub monotone: bool,
    pub pass: bool,
}

impl OperatorReport {
    pub fn evaluate(&self) -> bool {
        let vanishing = self.sup_errors.iter().all(|e| *e < 1e-12);
        vanishing || (self.sup_errors.windows(2).all(|w| w[1] < w[0]) && self.fitted_order.is_some_and(|s| s > 0.0))
    }
}

/// Default test function of the operator study: a Gaussian bump of width
/// `L / (4 pi)` kept to 16 modes on 64 nodes.
pub fn default_test_function(length: f64) -> Result<TestFunction> {
    TestFunction::gaussian_bump(64, length, length / (4.0 * PI), 16)
}

fn operator_context(config: &Config) -> Result<CollisionContext> {
    config.check_runtime()?;
    let model = config.model()?;
    model.require_1d()?;
    let grid = build_grid(config.velocity_grid.nodes, config.vmax().max(OPERATOR_VMAX), 1.0)?;
    CollisionContext::new(model.alpha, model.cross_section, grid)
}

/// `L^eps(phi)` against `L(phi)` along the config's epsilon schedule.
pub fn run_operator_study(config: &Config, phi: &TestFunction) -> Result<OperatorReport> {
    let model = config.model()?;
    let ctx = operator_context(config)?;
    let coeffs = LimitCoefficients::compute(&ctx, None)?;
    let (drift, _) = limit_drift(&model.field, phi.length(), &phi.state().nodes(), DriftLaw::Auto, &ctx)?;
    let target = limit_operator(phi, &coeffs, &drift)?;
    let free = limit_operator(phi, &coeffs, &Drift::Zero)?;
    let mut sup_errors = Vec::new();
    let mut l2_errors = Vec::new();
    let mut equilibrium_sup_errors = Vec::new();
    for &eps in &model.epsilon_schedule {
        let op = l_eps(phi, eps, &model.field, &ctx)?;
        sup_errors.push(op.sup_distance(&target)?);
        l2_errors.push(op.l2_distance(&target)?);
        equilibrium_sup_errors.push(l_eps_equilibrium(phi, eps, &ctx)?.sup_distance(&free)?);
    }
    let monotone = sup_errors.windows(2).all(|w| w[1] < w[0]);
    let mut report = OperatorReport {
        label: case_label(config),
        alpha: model.alpha,
        config: config.clone(),
        drift: drift.describe(),
        fitted_order: loglog_slope(&model.epsilon_schedule, &sup_errors),
        eps: model.epsilon_schedule.clone(),
        sup_errors,
        l2_errors,
        equilibrium_sup_errors,
        monotone,
        pass: false,
    };
    report.pass = report.evaluate();
    Ok(report)
}

fn operator_case(alpha: f64, e0: f64) -> Config {
    let mut c = base_case(alpha, e0, 1.0, 0.5);
    c.epsilon_schedule = vec![0.1, 0.05, 0.025];
    c.velocity_grid.nodes = 256;
    c
}

/// `(alpha = 1.5, E = 0)`, `(alpha = 1.5, E = 0.5)`, `(alpha = 1, E = 0.5)`.
pub fn operator_cases() -> Vec<Config> {
    vec![operator_case(1.5, 0.0), operator_case(1.5, 0.5), operator_case(1.0, 0.5)]
}

/// Decay of `chi_eps - phi` for the config's kernel along `eps_list`.
pub fn run_chi_decay(config: &Config, eps_list: &[f64]) -> Result<ChiDecayReport> {
    let ctx = operator_context(config)?;
    let phi = default_test_function(config.domain_length)?;
    chi_decay_check(&phi, eps_list, &ctx)
}

pub const CHI_DECAY_SCHEDULE: [f64; 4] = [0.1, 0.05, 0.025, 0.0125];

/// Everything one invocation produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub convergence: Vec<ConvergenceReport>,
    pub operator: Vec<OperatorReport>,
    pub chi_decay: Vec<ChiDecayReport>,
    /// Free-form named results (equilibria, coefficients).
    pub extras: Vec<(String, serde_json::Value)>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.convergence.iter().all(|r| r.verdicts.pass)
            && self.operator.iter().all(|r| r.pass)
            && self.chi_decay.iter().all(|r| r.pass)
    }

    /// Recomputes every verdict from the stored numbers.
    pub fn reevaluate(&self) -> bool {
        self.convergence.iter().all(|r| r.evaluate() == r.verdicts)
            && self.operator.iter().all(|r| r.evaluate() == r.pass)
    }
}

fn slug(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}

/// Writes `report.json` and the CSV tables; returns whether every verdict
/// passed.
pub fn emit(report: &Report, dir: &Path) -> Result<bool> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    for (i, c) in report.convergence.iter().enumerate() {
        let mut errors = String::from("epsilon,l1_error,linf_error,noise_floor\n");
        for k in 0..c.eps.len() {
            let _ = writeln!(errors, "{},{:.12e},{:.12e},{:.12e}", c.eps[k], c.l1_errors[k], c.linf_errors[k], c.noise_floors[k]);
        }
        let name = format!("convergence_{i}_{}", slug(&c.label));
        std::fs::write(dir.join(format!("{name}.csv")), errors)?;
        let mut dens = String::from("epsilon,t,bin_center,rho_kinetic,rho_limit\n");
        for run in &c.runs {
            for s in &run.snapshots {
                for ((x, a), b) in s.bin_centres.iter().zip(&s.kinetic).zip(&s.limit) {
                    let _ = writeln!(dens, "{},{},{x:.12e},{a:.12e},{b:.12e}", run.eps, s.time);
                }
            }
        }
        std::fs::write(dir.join(format!("{name}_density.csv")), dens)?;
    }
    for (i, o) in report.operator.iter().enumerate() {
        let mut out = String::from("epsilon,sup_error,l2_error\n");
        for k in 0..o.eps.len() {
            let _ = writeln!(out, "{},{:.12e},{:.12e}", o.eps[k], o.sup_errors[k], o.l2_errors[k]);
        }
        let _ = writeln!(out, "# fitted order {}", o.fitted_order.map_or("n/a".into(), |s| s.to_string()));
        std::fs::write(dir.join(format!("operator_{i}_{}.csv", slug(&o.label))), out)?;
    }
    for (i, d) in report.chi_decay.iter().enumerate() {
        let mut out = String::from("epsilon,error\n");
        for (e, v) in d.eps.iter().zip(&d.errors) {
            let _ = writeln!(out, "{e},{v:.12e}");
        }
        std::fs::write(dir.join(format!("chi_decay_{i}_alpha{}.csv", d.alpha)), out)?;
    }
    Ok(report.all_pass())
}

/// Kinetic density snapshots and the run manifest for one epsilon.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KineticRun {
    pub config: Config,
    pub eps: f64,
    pub scaling: Scaling,
    pub partitions: Vec<crate::kinetic::PartitionRecord>,
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

pub fn run_kinetic(config: &Config, eps: f64, scaling: Scaling, times: &[f64]) -> Result<KineticRun> {
    let model = config.model()?;
    let ctx = context(config)?;
    let l = model.domain_length;
    let set = KineticSettings::new(&ctx, eps, scaling, model.field, l)?;
    let rho = VonMises {
        concentration: INITIAL_CONCENTRATION,
    };
    let mut ens = ParticleEnsemble::sample(config.particles, l, &rho, model.alpha, model.seed, PARTITIONS)?;
    let mut snapshots = Vec::new();
    for &t in times {
        ens.advance(&set, t)?;
        snapshots.push((t, ens.estimate_density(config.x_bins)?.values));
    }
    Ok(KineticRun {
        config: config.clone(),
        eps,
        scaling,
        partitions: ens.manifest(),
        snapshots,
    })
}

impl KineticRun {
    pub fn to_csv(&self) -> String {
        let centres = bin_centres(self.config.domain_length, self.config.x_bins);
        let mut out = String::from("t,bin_center,rho\n");
        for (t, values) in &self.snapshots {
            for (x, r) in centres.iter().zip(values) {
                let _ = writeln!(out, "{t},{x:.12e},{r:.12e}");
            }
        }
        out
    }
}

/// Macroscopic snapshots of the limit equation matching a config.
pub fn run_macro(config: &Config, scaling: Scaling, times: &[f64]) -> Result<Vec<MacroState>> {
    let model = config.model()?;
    let ctx = context(config)?;
    let l = model.domain_length;
    let rho = VonMises {
        concentration: INITIAL_CONCENTRATION,
    };
    let mut state = rho.state(MACRO_NODES, l)?;
    let law = match scaling {
        Scaling::Diffusive => DriftLaw::Auto,
        Scaling::HighField => DriftLaw::Mu,
    };
    let (drift, _) = limit_drift(&model.field, l, &state.nodes(), law, &ctx)?;
    let kappa = match scaling {
        Scaling::Diffusive => LimitCoefficients::compute(&ctx, None)?.kappa,
        Scaling::HighField => 0.0,
    };
    let mut out = Vec::new();
    for &t in times {
        state = advance_macro(&state, config.time_step_macro, model.alpha, kappa, &drift, t)?;
        out.push(state.clone());
    }
    Ok(out)
}
