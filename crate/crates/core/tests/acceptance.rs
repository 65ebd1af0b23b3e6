//! The ten acceptance criteria. Each prints one PASS/FAIL line; the test
//! fails if any criterion does.

use fraclim_core::aux::loglog_slope;
use fraclim_core::coefficients::{c_d_alpha, gamma_of_m, kappa, kappa_integral_quadrature, matrix_d};
use fraclim_core::collision::{dissipation_q, dissipation_t, CollisionContext};
use fraclim_core::equilibria::{drift_mu, remainder_g, solve_f_with, solve_lambda, Method};
use fraclim_core::harness::{
    convergence_cases, default_test_function, high_field_case, operator_cases, run_chi_decay, run_convergence,
    run_high_field, run_operator_study, CHI_DECAY_SCHEDULE, KS_THRESHOLD,
};
use fraclim_core::macro_spectral::{frac_laplacian_fourier, frac_laplacian_singular, MacroState};
use fraclim_core::params::{Config, CrossSection};
use fraclim_core::velocity::{build_grid, m_normalization, VelocityProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;
use std::time::{Duration, Instant};

const UNIT: CrossSection = CrossSection::Constant { nu0: 1.0 };
const BUMPY: CrossSection = CrossSection::PerturbedConstant { nu0: 1.0, amplitude: 0.5 };

fn ctx(alpha: f64, cs: CrossSection) -> CollisionContext {
    CollisionContext::new(alpha, cs, build_grid(256, 1e6, 1.0).unwrap()).unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion<F: FnOnce() -> Outcome>(id: usize, name: &str, budget: Duration, run: F) -> bool {
    let start = Instant::now();
    let out = run();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {id:>2} {name}: {} ({}; {:.1} s of {:.0} s)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    pass
}

fn coefficient_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for alpha in [1.0, 1.25, 1.5, 1.75] {
        let g = gamma_of_m(alpha).unwrap();
        let closed = kappa(alpha, 1.0, g).unwrap();
        let c = c_d_alpha(1, alpha).unwrap();
        // Independent route: the integral by generalized Laguerre quadrature.
        let quad = g * kappa_integral_quadrature(alpha, 1.0) / c;
        let direct = g * gamma(alpha + 1.0) / c;
        worst = worst.max(((closed - quad) / closed).abs()).max(((closed - direct) / direct).abs());
    }
    Outcome {
        pass: worst < 1e-10,
        detail: format!("max relative gap {worst:.2e}"),
    }
}

fn unit_kernel_identities() -> Outcome {
    let c = ctx(1.5, UNIT);
    let lam = solve_lambda(&c).unwrap();
    // -dM/dv of the normalized discrete equilibrium, from the closed form.
    let alpha = 1.5;
    let z = m_normalization(alpha);
    let minus_dm = c
        .grid
        .profile_from_fn(|v| (1.0 + alpha) * v * (1.0 + v * v).powf(-(3.0 + alpha) / 2.0) / (z * c.raw_mass));
    let lam_gap = lam.profile.sub(&minus_dm).unwrap().max_abs();
    let d = matrix_d(&lam, &c).unwrap();
    let c1 = ctx(1.0, UNIT);
    let mu_gap = [0.25, 0.5, 1.0]
        .iter()
        .map(|&e| (drift_mu(e, &c1).unwrap() - e).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: lam_gap < 1e-8 && (d - 1.0).abs() < 1e-6 && mu_gap < 1e-4,
        detail: format!("|lambda + dM| {lam_gap:.2e}, D = {d:.9}, max |mu(E) - E| {mu_gap:.2e}"),
    }
}

fn equilibrium_consistency() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1.0, 1.5] {
        let c = ctx(alpha, UNIT);
        for e in [0.25, 0.5] {
            let ex = solve_f_with(e, &c, Method::Explicit).unwrap();
            let pi = solve_f_with(e, &c, Method::PowerIteration).unwrap();
            let gap = ex.profile.l1_distance(&pi.profile).unwrap();
            let (lo, hi) = pi.m_ratio_bounds(&c);
            let ok = gap < 1e-6 && (pi.eigenvalue - 1.0).abs() < 1e-6 && lo > 0.0 && hi.is_finite();
            pass &= ok;
            parts.push(format!("a={alpha} E={e}: L1 {gap:.1e}, lambda-1 {:.1e}, c {lo:.3} C {hi:.3}", pi.eigenvalue - 1.0));
        }
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn expansion_order() -> Outcome {
    let fields = [0.2, 0.1, 0.05, 0.025];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, cs) in [("sigma=1", UNIT), ("perturbed", BUMPY)] {
        let c = ctx(1.5, cs);
        let lam = solve_lambda(&c).unwrap();
        let norms: Vec<f64> = fields.iter().map(|&e| remainder_g(e, &c, &lam).unwrap().1).collect();
        let slope = loglog_slope(&fields, &norms).unwrap_or(f64::NAN);
        pass &= (slope - 2.0).abs() <= 0.25;
        parts.push(format!("{name} slope {slope:.3}"));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

/// `base (1 + 0.3 sum a_j psi_j(atan v))` with smooth bounded `psi_j`.
fn random_profile(rng: &mut ChaCha8Rng, base: &VelocityProfile) -> VelocityProfile {
    let coeffs: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
    let scale: f64 = rng.random_range(0.2..3.0);
    base.map(|v, b| {
        let t = v.atan();
        let wiggle: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let k = (j / 2 + 1) as f64;
                if j % 2 == 0 {
                    a * (k * t).cos()
                } else {
                    a * (k * t).sin()
                }
            })
            .sum();
        scale * b * (1.0 + 0.3 * wiggle)
    })
}

fn coercivity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, cs) in [("sigma=1", UNIT), ("perturbed", BUMPY)] {
        let c = ctx(1.5, cs);
        let mut q_margin = f64::INFINITY;
        for _ in 0..100 {
            let f = random_profile(&mut rng, &c.m);
            let (lhs, rhs) = dissipation_q(&f, &c).unwrap();
            q_margin = q_margin.min(lhs - rhs);
        }
        let q_ok = q_margin >= -1e-12;
        pass &= q_ok;
        for e in [0.0, 0.5] {
            let big_f = fraclim_core::equilibria::solve_f(e, &c).unwrap().profile;
            let mut min_form = f64::INFINITY;
            let mut min_theta = f64::INFINITY;
            for _ in 0..100 {
                let f = random_profile(&mut rng, &big_f);
                let (form, theta) = dissipation_t(&f, e, &big_f, &c).unwrap();
                min_form = min_form.min(form);
                min_theta = min_theta.min(theta);
            }
            let ok = min_form >= 0.0 && min_theta > 0.0;
            pass &= ok;
            parts.push(format!("{name} E={e}: min theta {min_theta:.4}"));
        }
        parts.push(format!("{name} Q margin {q_margin:.2e}"));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn operator_convergence() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for config in operator_cases() {
        let phi = default_test_function(config.domain_length).unwrap();
        let r = run_operator_study(&config, &phi).unwrap();
        let ok = r.sup_errors.windows(2).all(|w| w[1] < w[0]) && r.fitted_order.is_some_and(|s| s > 0.0);
        pass &= ok;
        parts.push(format!(
            "{} [{}]: {:?} order {:.3}",
            r.label,
            r.drift,
            r.sup_errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
            r.fitted_order.unwrap_or(f64::NAN)
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn chi_decay() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1.0, 1.5] {
        let config = Config {
            alpha,
            epsilon_schedule: CHI_DECAY_SCHEDULE.to_vec(),
            velocity_grid: fraclim_core::params::VelocityGridConfig {
                nodes: 256,
                vmax_over_inv_eps: 10.0,
            },
            ..Config::default()
        };
        let r = run_chi_decay(&config, &CHI_DECAY_SCHEDULE).unwrap();
        let slope = r.slope.unwrap_or(f64::NAN);
        let ok = slope >= alpha - 0.2;
        pass &= ok;
        parts.push(format!("alpha={alpha}: slope {slope:.3} (needs >= {:.1})", alpha - 0.2));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn end_to_end() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for config in convergence_cases() {
        let r = run_convergence(&config).unwrap();
        let monotone = r.l1_errors.windows(2).all(|w| w[1] < w[0]);
        let finest = r.finest_error();
        let mut ok = monotone && finest < 0.05 && r.verdicts.pass;
        let mut detail = format!(
            "{}: L1 {:?} noise {:.4}",
            r.label,
            r.l1_errors.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>(),
            r.noise_floors.last().copied().unwrap_or(f64::NAN)
        );
        if config.alpha == 1.0 {
            let ks = r.runs.last().and_then(|run| run.ks_statistic).unwrap_or(f64::NAN);
            ok &= ks < KS_THRESHOLD;
            detail.push_str(&format!(", KS {ks:.4}"));
        }
        pass &= ok;
        parts.push(detail);
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn high_field() -> Outcome {
    let r = run_high_field(&high_field_case()).unwrap();
    let monotone = r.l1_errors.windows(2).all(|w| w[1] < w[0]);
    let finest = r.finest_error();
    Outcome {
        pass: monotone && finest < 0.05,
        detail: format!(
            "drift {}, L1 {:?}",
            r.drift,
            r.l1_errors.iter().map(|e| format!("{e:.4}")).collect::<Vec<_>>()
        ),
    }
}

fn laplacian_cross_validation() -> Outcome {
    let l = 400.0;
    let n = 1 << 14;
    let s = MacroState::from_fn(n, l, |x| (-(x - l / 2.0).powi(2)).exp()).unwrap();
    let mut worst: f64 = 0.0;
    for alpha in [1.25, 1.5, 1.75] {
        let four = frac_laplacian_fourier(&s, alpha, 1.0).unwrap();
        for x in [0.0, 0.3, 1.0, 2.5, 5.0] {
            let sing = frac_laplacian_singular(|y| (-y * y).exp(), x, alpha, 60.0).unwrap();
            worst = worst.max((sing - four.eval_at(l / 2.0 + x)).abs());
        }
    }
    Outcome {
        pass: worst < 1e-4,
        detail: format!("max gap {worst:.2e}"),
    }
}

#[test]
fn acceptance() {
    let s = Duration::from_secs;
    let results = [
        criterion(1, "coefficient exactness", s(1), coefficient_exactness),
        criterion(2, "unit-kernel identities", s(30), unit_kernel_identities),
        criterion(3, "equilibrium consistency", s(60), equilibrium_consistency),
        criterion(4, "expansion order", s(120), expansion_order),
        criterion(5, "coercivity", s(120), coercivity_suite),
        criterion(6, "operator convergence", s(600), operator_convergence),
        criterion(7, "chi decay", s(120), chi_decay),
        criterion(8, "end-to-end limit", s(1200), end_to_end),
        criterion(9, "high-field limit", s(300), high_field),
        criterion(10, "fractional Laplacian cross-validation", s(30), laplacian_cross_validation),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
