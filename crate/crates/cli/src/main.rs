use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spar_opf_cli::commands::{cmd_bounds, cmd_compare, cmd_scenarios, cmd_solve, compare_table};
use spar_opf_cli::config::RunConfig;
use spar_opf_cli::error::{code, Result};

#[derive(Parser)]
#[command(name = "spar-opf", version, about = "Stochastic DG siting and sizing with separable value-function learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a plan and write solution.json, vfa.json and trace.csv
    Solve(Common),
    /// Statistical lower and upper bounds; writes bounds.json
    Bounds(Common),
    /// Learned plan against the extensive form; writes compare.csv
    Compare(Common),
    /// Generate scenarios from the history file; writes scenarios.csv
    Scenarios(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// lambda or epigraph
    #[arg(long)]
    encoding: Option<String>,
    /// vdev or ploss
    #[arg(long)]
    objective: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(e) = &self.encoding {
            cfg.encoding = e.clone();
        }
        if let Some(o) = &self.objective {
            cfg.objective = o.clone();
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(c) => {
            let cfg = c.config()?;
            let r = cmd_solve(&cfg)?;
            println!(
                "plan {:?} after {} iterations ({}), expected cost {:.6}",
                r.run.solution.units,
                r.run.iterations,
                if r.run.converged { "converged" } else { "iteration limit" },
                r.expected_cost
            );
            for f in &r.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Bounds(c) => {
            let cfg = c.config()?;
            let out = cmd_bounds(&cfg)?;
            print!("{}", out.report.table());
        }
        Command::Compare(c) => {
            let cfg = c.config()?;
            print!("{}", compare_table(&cmd_compare(&cfg)?));
        }
        Command::Scenarios(c) => {
            let cfg = c.config()?;
            let (scen, path) = cmd_scenarios(&cfg)?;
            println!("wrote {} scenarios to {}", scen.len(), path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { code::USAGE } else { code::OK });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(code::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

