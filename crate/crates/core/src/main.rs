use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cone_spde::apps::{run_check, run_report, run_simulate, run_sweep, CliSettings, RunConfig};
use cone_spde::Error;

/// Cone invariance diagnostics and Monte Carlo simulation for SPDEs.
#[derive(Parser)]
#[command(name = "cone-spde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the invariance checkers; exit 0 (sufficient pass), 2 (necessary
    /// fail) or 3 (inconclusive).
    Check(RunArgs),
    /// Simulate paths and record cone exits.
    Simulate(RunArgs),
    /// Yosida and projection convergence tables and pair-count sensitivity.
    Sweep(RunArgs),
    /// Collate the outputs of a run directory into summary.md.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Application name (cable, heat_anderson, hjmm, mortality, hybrid,
    /// energy, variance_swap, cdo, fx).
    #[arg(long)]
    app: Option<String>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value`; bare keys set application parameters.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory (defaults to `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let cli = CliSettings {
            app: self.app.clone(),
            seed: self.seed,
            paths: self.paths,
            dt: self.dt,
            horizon: self.horizon,
            out: self.out.clone(),
            overrides: self.overrides.clone(),
        };
        RunConfig::resolve(self.config.as_deref(), &cli)
    }
}

fn run(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Check(a) => {
            let cfg = a.resolve()?;
            let out = run_check(&cfg)?;
            println!(
                "{} {} (report in {})",
                cfg.app.name,
                out.report.verdict.label(),
                cfg.out_dir.display()
            );
            Ok(out.exit_code)
        }
        Command::Simulate(a) => {
            let cfg = a.resolve()?;
            let rep = run_simulate(&cfg)?;
            println!(
                "{}: {} of {} paths exited (fraction {:.4}), {} blow-ups, {:.2}s",
                cfg.app.name,
                rep.exits,
                rep.paths,
                rep.exit_fraction,
                rep.blowups,
                rep.runtime_secs
            );
            Ok(0)
        }
        Command::Sweep(a) => {
            let cfg = a.resolve()?;
            let out = run_sweep(&cfg)?;
            for r in &out.lambda_rows {
                println!("lambda {:>8}: mean gap {:.3e}", r.parameter, r.mean_gap);
            }
            match &out.level_rows {
                Some(rows) => {
                    for r in rows {
                        println!("level {:>2}: mean gap {:.3e}", r.parameter, r.mean_gap);
                    }
                }
                None => println!("no dyadic projection for this space; level table left empty"),
            }
            for (n, v) in &out.pair_rows {
                println!("pairs {n:>5}: {}", v.label());
            }
            Ok(0)
        }
        Command::Report(a) => {
            let dir = a.dir.or(a.out).unwrap_or_else(|| PathBuf::from("out"));
            run_report(&dir)?;
            println!("wrote {}", dir.join("summary.md").display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors share exit code 1 with config errors
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
