use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serf_cli::{cmd_eig, cmd_fid, cmd_fit, cmd_perturb, cmd_sweep, CliError, CliResult, RunConfig};

/// Alkali spin-exchange simulations: FID runs, field sweeps, eigenmodes, fits.
#[derive(Parser)]
#[command(name = "serfsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single free-induction decay for both probes plus fits.
    Fid(Common),
    /// Field sweep with per-point fits and a threshold summary.
    Sweep(Common),
    /// Eigenvalue table of the linear superoperator.
    Eig(Common),
    /// Perturbative birefringent prediction against the full simulation.
    Perturb(Common),
    /// Fit an external `t_s,value` CSV.
    Fit {
        file: PathBuf,
        /// Value column to fit; defaults to the second column.
        #[arg(long)]
        column: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Default)]
struct Common {
    #[arg(long = "B-nT", allow_hyphen_values = true)]
    b_nt: Option<String>,
    #[arg(long = "B-min-nT")]
    b_min_nt: Option<String>,
    #[arg(long = "B-max-nT")]
    b_max_nt: Option<String>,
    #[arg(long = "B-count")]
    b_count: Option<String>,
    #[arg(long = "P")]
    p: Option<String>,
    #[arg(long = "t-end-ms")]
    t_end_ms: Option<String>,
    #[arg(long = "dt-us")]
    dt_us: Option<String>,
    #[arg(long = "t0-us")]
    t0_us: Option<String>,
    #[arg(long = "R-SE")]
    r_se: Option<String>,
    #[arg(long = "R-SD")]
    r_sd: Option<String>,
    /// Nuclear spin as twice its value (3 for I = 3/2).
    #[arg(long = "I")]
    i: Option<String>,
    #[arg(long = "gamma-e")]
    gamma_e: Option<String>,
    /// circular, linear, or both.
    #[arg(long)]
    probe: Option<String>,
    #[arg(long)]
    jobs: Option<String>,
    /// Flat key=value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "out-dir")]
    out_dir: Option<String>,
}

impl Common {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        let flags = [
            ("B-nT", &self.b_nt),
            ("B-min-nT", &self.b_min_nt),
            ("B-max-nT", &self.b_max_nt),
            ("B-count", &self.b_count),
            ("P", &self.p),
            ("t-end-ms", &self.t_end_ms),
            ("dt-us", &self.dt_us),
            ("t0-us", &self.t0_us),
            ("R-SE", &self.r_se),
            ("R-SD", &self.r_sd),
            ("I", &self.i),
            ("gamma-e", &self.gamma_e),
            ("probe", &self.probe),
            ("jobs", &self.jobs),
            ("out-dir", &self.out_dir),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<Vec<PathBuf>> {
    match cli.command {
        Command::Fid(c) => cmd_fid(&c.resolve()?),
        Command::Sweep(c) => cmd_sweep(&c.resolve()?),
        Command::Eig(c) => cmd_eig(&c.resolve()?),
        Command::Perturb(c) => cmd_perturb(&c.resolve()?),
        Command::Fit { file, column, common } => cmd_fit(&common.resolve()?, &file, column.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("serfsim: {e}");
            let code = e.exit_code();
            if let CliError::Degenerate | CliError::Quorum { .. } = e {
                eprintln!("serfsim: output files were written");
            }
            ExitCode::from(code as u8)
        }
    }
}
