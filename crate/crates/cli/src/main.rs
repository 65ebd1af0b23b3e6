use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fraclim_core::coefficients::LimitCoefficients;
use fraclim_core::equilibria::{solve_f, solve_lambda};
use fraclim_core::harness::{
    self, convergence_cases, default_test_function, high_field_case, operator_cases, run_chi_decay, run_convergence,
    run_high_field, run_kinetic, run_macro, run_operator_study, Report, CHI_DECAY_SCHEDULE, SNAPSHOT_FRACTIONS,
};
use fraclim_core::kinetic::Scaling;
use fraclim_core::params::Config;
use serde_json::json;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "fraclim", version, about = "Kinetic to fractional diffusion convergence laboratory")]
struct Cli {
    /// JSON config file; built-in cases are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScalingArg {
    Diffusive,
    HighField,
}

impl From<ScalingArg> for Scaling {
    fn from(s: ScalingArg) -> Self {
        match s {
            ScalingArg::Diffusive => Scaling::Diffusive,
            ScalingArg::HighField => Scaling::HighField,
        }
    }
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Final time (config value when omitted).
    #[arg(long = "final-time")]
    final_time: Option<f64>,
    /// Snapshot times, comma separated (default T/2, T).
    #[arg(long, value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, value_enum, default_value = "diffusive")]
    scaling: ScalingArg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// CSV of v, M, F, lambda, G, R for one field value.
    Equilibrium {
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        field: f64,
    },
    /// JSON of the limit coefficients.
    Coefficients,
    /// Generator convergence against the limit operator.
    OperatorCheck,
    /// Monte Carlo run of the kinetic equation.
    KineticRun {
        #[arg(long)]
        eps: f64,
        /// Particle count (config value when omitted).
        #[arg(long)]
        particles: Option<usize>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Spectral solve of the limit equation.
    MacroRun {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Kinetic against macroscopic convergence study; exit code 1 on FAIL.
    Converge,
    /// Every study; exit code 1 on any FAIL.
    All,
}

fn load(cli: &Cli) -> Result<Option<Config>> {
    let Some(path) = &cli.config else {
        return Ok(None);
    };
    let mut c = Config::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    c.model()?;
    Ok(Some(c))
}

fn reseed(mut c: Config, seed: Option<u64>) -> Config {
    if let Some(s) = seed {
        c.seed = s;
    }
    c
}

fn snapshot_times(config: &Config, run: &RunArgs) -> Result<Vec<f64>> {
    let times = if run.times.is_empty() {
        SNAPSHOT_FRACTIONS.iter().map(|f| f * config.final_time).collect()
    } else {
        run.times.clone()
    };
    if times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        bail!("snapshot times must be nonnegative and nondecreasing");
    }
    Ok(times)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn equilibrium_csv(config: &Config, e: f64) -> Result<String> {
    let ctx = harness::context(config)?;
    let f = solve_f(e, &ctx)?.profile;
    let lambda = solve_lambda(&ctx).ok().map(|l| l.profile);
    let mut out = String::from("v,M,F,lambda,G,R\n");
    for i in 0..ctx.grid.len() {
        let (m, fi) = (ctx.m.values[i], f.values[i]);
        let (l, g) = match &lambda {
            Some(l) => {
                let l = l.values[i];
                (format!("{l:.12e}"), format!("{:.12e}", fi - m - e * l))
            }
            None => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{:.12e},{m:.12e},{fi:.12e},{l},{g},{:.12e}", ctx.grid.nodes[i], fi - m);
    }
    Ok(out)
}

fn coefficients(config: &Config) -> Result<LimitCoefficients> {
    let ctx = harness::context(config)?;
    let lambda = if ctx.alpha > 1.0 { Some(solve_lambda(&ctx)?) } else { None };
    Ok(LimitCoefficients::compute(&ctx, lambda.as_ref())?)
}

fn converge(cli: &Cli, config: Option<&Config>, report: &mut Report) -> Result<()> {
    match config {
        Some(c) => report.convergence.push(run_convergence(c)?),
        None => {
            for c in convergence_cases() {
                report.convergence.push(run_convergence(&reseed(c, cli.seed))?);
            }
            report.convergence.push(run_high_field(&reseed(high_field_case(), cli.seed))?);
        }
    }
    Ok(())
}

fn operator(config: Option<&Config>, report: &mut Report) -> Result<()> {
    let configs = match config {
        Some(c) => vec![c.clone()],
        None => operator_cases(),
    };
    for c in configs {
        let phi = default_test_function(c.domain_length)?;
        report.operator.push(run_operator_study(&c, &phi)?);
    }
    Ok(())
}

fn finish(report: &Report, out: &Path) -> Result<ExitCode> {
    let pass = harness::emit(report, out)?;
    for c in &report.convergence {
        println!("{} {}: l1 {:?}", if c.verdicts.pass { "PASS" } else { "FAIL" }, c.label, c.l1_errors);
    }
    for o in &report.operator {
        println!("{} {}: sup {:?} order {:?}", if o.pass { "PASS" } else { "FAIL" }, o.label, o.sup_errors, o.fitted_order);
    }
    for d in &report.chi_decay {
        println!("{} chi decay alpha {}: slope {:?}", if d.pass { "PASS" } else { "FAIL" }, d.alpha, d.slope);
    }
    println!("wrote {}", out.join("report.json").display());
    Ok(if pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn run(cli: &Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = load(cli)?;
    let base = || reseed(config.clone().unwrap_or_default(), cli.seed);
    match &cli.command {
        Command::Equilibrium { field } => {
            let text = equilibrium_csv(&base(), *field)?;
            write(&cli.out, &format!("equilibrium_E{field}.csv"), &text)?;
        }
        Command::Coefficients => {
            let text = serde_json::to_string_pretty(&coefficients(&base())?)?;
            println!("{text}");
            write(&cli.out, "coefficients.json", &text)?;
        }
        Command::OperatorCheck => {
            let mut report = Report::default();
            operator(config.as_ref(), &mut report)?;
            return finish(&report, &cli.out);
        }
        Command::KineticRun { eps, particles, run } => {
            let mut c = base();
            if let Some(n) = particles {
                c.particles = *n;
            }
            if let Some(t) = run.final_time {
                c.final_time = t;
            }
            let times = snapshot_times(&c, run)?;
            let k = run_kinetic(&c, *eps, run.scaling.into(), &times)?;
            write(&cli.out, "kinetic.csv", &k.to_csv())?;
            let manifest = json!({
                "config": k.config,
                "seed": k.config.seed,
                "eps": k.eps,
                "scaling": k.scaling,
                "times": times,
                "partitions": k.partitions,
                "collisions": k.partitions.iter().map(|p| p.collisions).sum::<u64>(),
            });
            write(&cli.out, "kinetic_manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
        }
        Command::MacroRun { run } => {
            let mut c = base();
            if let Some(t) = run.final_time {
                c.final_time = t;
            }
            let times = snapshot_times(&c, run)?;
            let states = run_macro(&c, run.scaling.into(), &times)?;
            let mut out = String::from("t,x,rho\n");
            for (t, s) in times.iter().zip(&states) {
                for (x, r) in s.nodes().iter().zip(&s.values) {
                    let _ = writeln!(out, "{t},{x:.12e},{r:.12e}");
                }
            }
            write(&cli.out, "macro.csv", &out)?;
        }
        Command::Converge => {
            let mut report = Report::default();
            converge(cli, config.as_ref(), &mut report)?;
            return finish(&report, &cli.out);
        }
        Command::All => {
            let mut report = Report::default();
            let c = base();
            report.extras.push(("config".into(), serde_json::to_value(&c)?));
            report.extras.push(("coefficients".into(), serde_json::to_value(coefficients(&c)?)?));
            converge(cli, config.as_ref(), &mut report)?;
            operator(config.as_ref(), &mut report)?;
            let chi_configs = match &config {
                Some(c) => vec![c.clone()],
                None => operator_cases().into_iter().filter(|c| c.field.e0 == 0.0 || c.alpha == 1.0).collect(),
            };
            for c in chi_configs {
                report.chi_decay.push(run_chi_decay(&c, &CHI_DECAY_SCHEDULE)?);
            }
            return finish(&report, &cli.out);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
