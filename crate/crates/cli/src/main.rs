use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod output;

use commands::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "nonsense",
    version,
    about = "Monte Carlo laboratory for association statistics between independent dependent vectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiments of a config file or preset.
    Simulate(SimulateArgs),
    /// Run the acceptance experiment for one theorem.
    Verify(VerifyArgs),
    /// Compare the eigenvalue profiles of Sigma_X and Sigma_eps.
    OlsCondition(OlsConditionArgs),
    /// Check an interaction matrix against the regularity assumptions.
    Assumptions(AssumptionsArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides every master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: figure1 .. figure5.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, env = "NONSENSE_OUT_DIR", default_value = "nonsense-out")]
    out_dir: PathBuf,
    /// Also write per-replicate CSV.
    #[arg(long)]
    csv: bool,
    /// Also write every Ising spin vector as raw i8 bytes.
    #[arg(long)]
    dump_spins: bool,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// One of T1, T2, C3, T3, T4i, T4ii, C5, T5.
    theorem: String,
    /// Write the reports here as well.
    #[arg(long, env = "NONSENSE_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
pub struct OlsConditionArgs {
    /// Profile of Sigma_X, e.g. `power:2`, `exp:1`, `exp:-0.85`, `const:1`, `file:PATH`.
    f: String,
    /// Profile of Sigma_eps.
    g: String,
    /// Grid size for the finite-n Riemann sums.
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
pub struct AssumptionsArgs {
    /// Graph kind followed by `key=value` parameters, e.g.
    /// `random_regular n=800 degree=200 seed=17`.
    #[arg(conflicts_with = "config", required_unless_present = "config")]
    graph: Vec<String>,
    /// Check every Ising graph in a config file instead.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

fn configure_threads(run: &RunArgs) -> Result<(), CliError> {
    if let Some(t) = run.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => configure_threads(&a.run).and_then(|_| commands::simulate(a)),
        Command::Verify(a) => configure_threads(&a.run).and_then(|_| commands::verify(a)),
        Command::OlsCondition(a) => commands::ols_condition(a),
        Command::Assumptions(a) => commands::assumptions(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code())
        }
    }
}
