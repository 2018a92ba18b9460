use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use hydrodarcy::config::RunConfig;
use hydrodarcy::coupling::FieldErrors;
use hydrodarcy::driver;

#[derive(Parser)]
#[command(version, about = "Free-surface flow over a porous bed on a vertical slice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation to its end time.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manufactured-solution convergence study on levels 0..levels.
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        levels: u32,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        orders: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Quick invariant checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let s = driver::run(&cfg, Some(&dir))?;
            println!("{} coupled steps to t = {} in {:.2} s", s.steps, s.time, s.seconds);
            println!("energy {:.6e}, volume {:.12e}", s.energy.total(), s.energy.volume);
            if let Some(e) = s.errors {
                for (name, v) in FieldErrors::NAMES.iter().zip(e.values()) {
                    println!("{name:>8} {v:.4e}");
                }
            }
            println!("output in {}", dir.display());
        }
        Command::Converge {
            config,
            levels,
            orders,
            out,
        } => {
            let cfg = load(&config)?;
            let dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let report = driver::converge(&cfg, levels, &orders, |r| {
                let status = r.outcome.as_ref().map_or_else(|e| format!("failed: {e}"), |_| "done".into());
                eprintln!("p={} j={}: {} steps, {:.1} s, {status}", r.p, r.level, r.steps, r.seconds);
            })?;
            print!("{report}");
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("errors.csv");
            report.write_csv(BufWriter::new(File::create(&path)?))?;
            println!("errors in {}", path.display());
        }
        Command::Selftest { seed } => {
            let checks = hydrodarcy::selftest::run_all(seed)?;
            let mut ok = true;
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} {:<26} {:.2e} (tolerance {:.0e})", c.name, c.value, c.tolerance);
                ok &= c.passed;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
