use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use opinion_kinetics::experiment::{self, ExperimentConfig, SolverKind};
use opinion_kinetics::fp::Quadrature;
use opinion_kinetics::grid::OpinionGrid;
use opinion_kinetics::stationary::{g_inf, ProfileVariant, StationaryDegreeLaw, StationaryOpinionProfile};
use opinion_kinetics::Error;

/// Kinetic opinion dynamics on evolving networks.
///
/// Constant characteristic rates V_r, V_a enter the Fokker-Planck network operator with the
/// pairwise factor 2 built in; the Monte Carlo network step uses V_r, V_a as given.
#[derive(Parser)]
#[command(name = "opinion-kinetics", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed of the Monte Carlo streams.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; `reproduce` writes one subdirectory per run below it.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    solver: Option<Solver>,

    #[arg(long, global = true)]
    quadrature: Option<QuadratureArg>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML file.
    Simulate { config: PathBuf },
    /// Rerun a reference experiment with its tabulated parameters.
    Reproduce {
        #[arg(value_parser = experiment::PRESETS)]
        target: String,
    },
    /// Print a closed-form stationary law as CSV.
    Oracle {
        #[command(subcommand)]
        which: Oracle,
    },
}

#[derive(Subcommand)]
enum Oracle {
    /// Stationary degree law on 0..=c_max, columns c,rho.
    RhoInf {
        #[arg(long, default_value_t = 30.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 250)]
        c_max: usize,
        /// Rescale the truncated law to sum one.
        #[arg(long)]
        normalized: bool,
    },
    /// Stationary opinion profile on the N-cell grid, columns w,g.
    GInf {
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0.0)]
        mbar: f64,
        #[arg(long, default_value_t = 0.05)]
        sigma2: f64,
        #[arg(long, value_enum, default_value_t = Variant::Case1)]
        variant: Variant,
        #[arg(long, default_value_t = 80)]
        n: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Fp,
    Mc,
    NetworkOnly,
    Moments,
}

#[derive(Clone, Copy, ValueEnum)]
enum QuadratureArg {
    Midpoint,
    Milne,
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Case1,
    Case2,
}

impl From<Solver> for SolverKind {
    fn from(s: Solver) -> Self {
        match s {
            Solver::Fp => SolverKind::Fp,
            Solver::Mc => SolverKind::Mc,
            Solver::NetworkOnly => SolverKind::NetworkOnly,
            Solver::Moments => SolverKind::Moments,
        }
    }
}

impl From<QuadratureArg> for Quadrature {
    fn from(q: QuadratureArg) -> Self {
        match q {
            QuadratureArg::Midpoint => Quadrature::Midpoint,
            QuadratureArg::Milne => Quadrature::Milne,
        }
    }
}

fn apply_flags(cli: &Cli, cfg: &mut ExperimentConfig) {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(s) = cli.solver {
        cfg.solver = s.into();
    }
    if let Some(q) = cli.quadrature {
        cfg.quadrature = q.into();
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Simulate { config } => {
            let mut cfg = experiment::load_config(config)?;
            apply_flags(cli, &mut cfg);
            if let Some(dir) = &cli.out_dir {
                cfg.out_dir = dir.clone();
            }
            let summary = experiment::run_experiment(&cfg)?;
            println!("{}", json!({ "name": cfg.name, "summary": summary }));
        }
        Command::Reproduce { target } => {
            let base = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            for v in experiment::reproduce_variants(target, cli.quadrature.map(Into::into))? {
                let mut cfg = v.config;
                apply_flags(cli, &mut cfg);
                cfg.out_dir = base.join(target).join(&v.label);
                let summary = experiment::run_experiment(&cfg)?;
                println!("{}", json!({ "name": cfg.name, "run": v.label, "summary": summary }));
            }
        }
        Command::Oracle { which } => match *which {
            Oracle::RhoInf { gamma, alpha, c_max, normalized } => {
                let law = StationaryDegreeLaw::new(gamma, alpha, c_max)?;
                let values = if normalized { law.normalized() } else { law.values() };
                println!("c,rho");
                for (c, v) in values.iter().enumerate() {
                    println!("{c},{v:.16e}");
                }
            }
            Oracle::GInf { kappa, mbar, sigma2, variant, n } => {
                let variant = match variant {
                    Variant::Case1 => ProfileVariant::Case1,
                    Variant::Case2 => ProfileVariant::Case2,
                };
                let grid = OpinionGrid::new(n)?;
                let g = g_inf(&StationaryOpinionProfile { kappa, mbar, sigma2, variant }, &grid)?;
                println!("w,g");
                for (i, v) in g.iter().enumerate() {
                    println!("{:.16e},{v:.16e}", grid.node(i));
                }
            }
        },
    }
    Ok(())
}

fn error_json(e: &Error) -> serde_json::Value {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    match e {
        Error::AtStep { step, time, .. } => {
            v["step"] = json!(step);
            v["time"] = json!(time);
        }
        Error::Config { line, key, .. } => {
            v["line"] = json!(line);
            v["key"] = json!(key);
        }
        _ => {}
    }
    v
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            eprintln!("{}", json!({ "error": "usage", "message": message.trim_end() }));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
