//! Command-line front end: CRLB sweeps, feasibility tables, the oracle
//! validation suite and per-cell explain traces.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leofim::crlb_cli::{explain_cell, run_sweeps, run_tables, run_validation, RunConfig};
use leofim::feasibility::{CellKey, Mode};
use leofim::{Error, OffsetConfig};

#[derive(Parser)]
#[command(
    name = "leofim",
    version,
    about = "CRLBs and identifiability for LEO-satellite receiver localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores (overrides the config).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every [[sweep]] section and write sweep_<name>.csv.
    Sweep(Common),
    /// Run the [tables] section and write tables.csv and tables.txt.
    Tables(Common),
    /// Compare closed forms with the numerical oracles on random scenarios.
    Validate(Common),
    /// Print the condition trace of one feasibility cell.
    Explain {
        #[command(flatten)]
        common: Common,
        /// p, phi, v, pv, pphi, vphi or 9d.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        n_b: usize,
        #[arg(long)]
        n_k: usize,
        #[arg(long)]
        n_u: usize,
        /// none, time, freq or both.
        #[arg(long, default_value = "none")]
        offsets: String,
    },
}

fn load(c: &Common) -> leofim::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> leofim::Result<bool> {
    match cli.command {
        Command::Sweep(c) => {
            for p in run_sweeps(&load(&c)?)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Tables(c) => {
            let cfg = load(&c)?;
            let files = run_tables(&cfg)?;
            print!("{}", std::fs::read_to_string(&files[1])?);
            for p in files {
                println!("wrote {}", p.display());
            }
        }
        Command::Validate(c) => {
            let cfg = load(&c)?;
            let rep = leofim::crlb_cli::with_pool(cfg.jobs, || run_validation(cfg.seed, &cfg.validate))??;
            println!("scenarios:                 {}", rep.scenarios);
            println!("closed-form FIM blocks:    {:.3e}", rep.fim_block_err);
            println!("closed-form losses:        {:.3e}", rep.loss_err);
            println!("analytic derivatives:      {:.3e}", rep.jacobian_err);
            println!("6D/9D reductions:          {:.3e}", rep.reduction_err);
            println!("{}", if rep.passed() { "PASS" } else { "FAIL" });
            return Ok(rep.passed());
        }
        Command::Explain {
            common,
            mode,
            n_b,
            n_k,
            n_u,
            offsets,
        } => {
            let cfg = load(&common)?;
            let key = CellKey {
                mode: mode.parse::<Mode>().map_err(|e| Error::Config(e.to_string()))?,
                n_b,
                n_k,
                n_u,
                offsets: OffsetConfig::parse(&offsets).map_err(|e| Error::Config(e.to_string()))?,
            };
            if n_b == 0 || n_k == 0 || n_u == 0 {
                return Err(Error::Config("counts must be at least 1".into()));
            }
            print!("{}", explain_cell(&cfg, key)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
