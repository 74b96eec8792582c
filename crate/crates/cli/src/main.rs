use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochctl::config::{RunConfig, VDP_CONFIG};
use stochctl::run;
use stochctl::CliError;

#[derive(Parser)]
#[command(name = "stochctl", version, about = "Solve and simulate stochastic optimal control problems")]
struct Cli {
    /// TOML configuration file. Without it the built-in `vdp` preset is used.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Koopman coefficient expansion of ψ at t_i, written as `n1,n2,nz,value`.
    SolveKoopman {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Finite-difference ψ(·, t_i) on the `[fd]` grid, written as `x1,x2,psi`.
    SolveHjb {
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Feynman–Kac estimates at the `[fk]` points.
    SolveFk {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        npaths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-loop run of the true plant.
    Simulate {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_parser = ["koopman", "fd", "zero"])]
        controller: Option<String>,
        /// Write every n-th sample.
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Koopman against finite-difference ψ on the `[compare]` region.
    ComparePsi {
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p.display(), e))?;
            RunConfig::load(&text)
        }
        None => RunConfig::load(VDP_CONFIG),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = load(cli.config.as_ref())?;
    match cli.command {
        Command::SolveKoopman { out } => run::solve_koopman(&config, &out),
        Command::SolveHjb { out } => run::solve_hjb(&config, &out),
        Command::SolveFk { out, npaths, seed } => {
            let fk = config
                .fk
                .as_mut()
                .ok_or_else(|| CliError::Validation("configuration has no [fk] table".into()))?;
            if let Some(n) = npaths {
                fk.npaths = n;
            }
            if let Some(s) = seed {
                fk.seed = s;
            }
            run::solve_fk(&config, &out)
        }
        Command::Simulate {
            out,
            controller,
            stride,
            seed,
            duration,
        } => {
            let s = config
                .simulate
                .as_mut()
                .ok_or_else(|| CliError::Validation("configuration has no [simulate] table".into()))?;
            if let Some(c) = controller {
                s.controller = c;
            }
            if let Some(v) = stride {
                s.stride = v;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = duration {
                s.duration = v;
            }
            let underflows = run::simulate(&config, &out)?;
            if !underflows.is_empty() {
                eprintln!(
                    "warning: desirability underflow at {} step(s), u = 0 applied; first at step {}",
                    underflows.len(),
                    underflows[0]
                );
            }
            Ok(())
        }
        Command::ComparePsi { out } => {
            let c = run::compare_psi(&config, &out)?;
            println!("points {}", c.rows.len());
            println!("max_rel_err {:e} at ({}, {})", c.max_rel, c.max_at[0], c.max_at[1]);
            println!("mean_rel_err {:e}", c.mean_rel);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
