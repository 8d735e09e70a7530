use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use strainloc_core::autodiff::gradcheck_suite;
use strainloc_core::material::{cohesive_energy_density, cohesive_traction};
use strainloc_core::oracle::{solve_bar, solve_shear};
use strainloc_core::report::{read_summary, render_summary, SummaryRow};
use strainloc_core::sweep::{variants, Vary};
use strainloc_core::{load_config, Error, ProblemKind, ProgramOutcome, RunConfig};

#[derive(Parser)]
#[command(
    name = "strainloc",
    version,
    about = "Strain localization by energy minimization with trainable displacement jumps"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the load program of a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory and STRAINLOC_OUTPUT_DIR.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print sharp-limit reference solutions.
    Oracle {
        #[arg(long, value_enum)]
        problem: ProblemArg,
        #[arg(long, num_args = 1.., required = true, value_delimiter = ',')]
        delta: Vec<f64>,
        /// Take material and geometry from this file instead of the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run a parameter study, one output subdirectory per variant.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        vary: VaryArg,
        /// Concurrent runs; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Compare reverse-mode derivatives with central differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Print the summary of a finished run.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Bar1d,
    Shear2d,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Bar1d => ProblemKind::Bar1d,
            ProblemArg::Shear2d => ProblemKind::Shear2d,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VaryArg {
    H,
    Init,
    Collocation,
    Nodes,
}

impl From<VaryArg> for Vary {
    fn from(v: VaryArg) -> Self {
        match v {
            VaryArg::H => Vary::H,
            VaryArg::Init => Vary::Init,
            VaryArg::Collocation => Vary::Collocation,
            VaryArg::Nodes => Vary::Nodes,
        }
    }
}

enum Failure {
    /// Bad configuration or arguments.
    Input(anyhow::Error),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::Config { .. }) => Failure::Input(e),
            _ => Failure::Run(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn load(path: &Path, output_dir: Option<PathBuf>) -> Result<RunConfig, Failure> {
    let mut cfg = load_config(path)
        .with_context(|| format!("loading {}", path.display()))
        .map_err(Failure::Input)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn print_outcome(out: &ProgramOutcome) {
    let rows: Vec<SummaryRow> = out.reports.iter().map(SummaryRow::of).collect();
    print!("{}", render_summary(&rows));
    for r in out.reports.iter().filter(|r| r.flagged) {
        eprintln!(
            "step {} flagged: {}",
            r.delta,
            r.flag_reason.as_deref().unwrap_or("no reason recorded")
        );
    }
}

fn run(config: &Path, output_dir: Option<PathBuf>) -> Result<bool, Failure> {
    let cfg = load(config, output_dir)?;
    let out = cfg.run_and_write()?;
    print_outcome(&out);
    println!("results in {}", cfg.output_dir.display());
    Ok(!out.any_flagged())
}

fn oracle(problem: ProblemKind, deltas: &[f64], config: Option<&Path>) -> Result<bool, Failure> {
    let cfg = match config {
        Some(p) => load(p, None)?,
        None => RunConfig::defaults(problem),
    };
    if cfg.problem != problem {
        return Err(Failure::Input(anyhow::anyhow!(
            "configuration is for {:?}, not {problem:?}",
            cfg.problem
        )));
    }
    match problem {
        ProblemKind::Bar1d => {
            let m = cfg.bar_material();
            println!(
                "{:>10} {:>12} {:>12} {:>8} {:>12} {:>12} {:>12}",
                "delta", "P", "j", "x_band", "energy", "psi", "t_c"
            );
            for &d in deltas {
                let s = solve_bar(d, m, &cfg.geometry.area, cfg.geometry.length)?;
                let j = s.jump.min(-m.yield_stress / m.hbar);
                println!(
                    "{:>10} {:>12.6} {:>12.6} {:>8.4} {:>12.6} {:>12.6} {:>12.6}",
                    d,
                    s.force,
                    s.jump,
                    s.x_band,
                    s.energy,
                    cohesive_energy_density(j, m.hbar, m.yield_stress)?,
                    cohesive_traction(j, m.hbar, m.yield_stress)?
                );
            }
        }
        ProblemKind::Shear2d => {
            let m = cfg.shear_material();
            println!(
                "{:>10} {:>12} {:>12} {:>12} {:>12} {:>12}",
                "delta", "tau", "j", "energy", "psi", "t_c"
            );
            for &d in deltas {
                let s = solve_shear(d, m)?;
                println!(
                    "{:>10} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
                    d, s.tau, s.jump, s.energy, s.cohesive_energy, s.cohesive_force
                );
            }
        }
    }
    Ok(true)
}

fn sweep(config: &Path, vary: Vary, jobs: Option<usize>, output_dir: Option<PathBuf>) -> Result<bool, Failure> {
    let base = load(config, output_dir)?;
    let runs = variants(&base, vary)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .context("starting worker pool")?;
    let results: Vec<_> = pool.install(|| {
        runs.par_iter()
            .map(|v| (v.label.as_str(), v.config.run_and_write()))
            .collect()
    });
    let mut clean = true;
    for (label, res) in results {
        println!("== {label}");
        match res {
            Ok(out) => {
                clean &= !out.any_flagged();
                print_outcome(&out);
            }
            Err(e) => {
                clean = false;
                eprintln!("{label} failed: {e}");
            }
        }
    }
    Ok(clean)
}

fn gradcheck(seed: u64, points: usize, eps: f64, tol: f64) -> Result<bool, Failure> {
    let cases = gradcheck_suite(seed, points, eps)?;
    println!("{:<20} {:>7} {:>12}", "case", "points", "max rel err");
    let mut ok = true;
    for c in &cases {
        let pass = c.worst <= tol;
        ok &= pass;
        println!(
            "{:<20} {:>7} {:>12.3e}  {}",
            c.name,
            c.points,
            c.worst,
            if pass { "ok" } else { "FAIL" }
        );
    }
    Ok(ok)
}

fn report(dir: &Path) -> Result<bool, Failure> {
    let rows = read_summary(dir).map_err(|e| Failure::Input(e.into()))?;
    print!("{}", render_summary(&rows));
    Ok(!rows.iter().any(|r| r.flagged))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let res = match cli.command {
        Command::Run { config, output_dir } => run(&config, output_dir),
        Command::Oracle { problem, delta, config } => oracle(problem.into(), &delta, config.as_deref()),
        Command::Sweep {
            config,
            vary,
            jobs,
            output_dir,
        } => sweep(&config, vary.into(), jobs, output_dir),
        Command::Gradcheck { seed, points, eps, tol } => gradcheck(seed, points, eps, tol),
        Command::Report { dir } => report(&dir),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
