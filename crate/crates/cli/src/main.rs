mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;

#[derive(Parser, Debug)]
#[command(name = "quadnet", version = env!("QUADNET_VERSION"), about = "Teacher-student quadratic network experiments")]
struct Cli {
    /// TOML file whose keys mirror the flags; flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gradient descent on the student weights (empirical loss).
    Gd(GdArgs),
    /// Diagonal eigenvalue flow from the identity.
    Eigenflow(EigenflowArgs),
    /// Reduced two-variable eigenvalue system.
    Reduced(ReducedArgs),
    /// Fixed points and timescales of the reduced system.
    LvReport(LvReportArgs),
    /// String method between the identity and the teacher Gram matrix.
    String(StringArgs),
    /// Monte-Carlo extremal-ray counts of random folded cones.
    Cone(ConeArgs),
    /// Cover's expected number of extremal rays.
    ConeExpected(ConeExpectedArgs),
    /// Success-fraction sweep over (d, m*, alpha).
    Phase(PhaseArgs),
    /// Power-law extrapolation of the critical sample ratio.
    FitAlphaC(FitAlphaCArgs),
    /// Proximal iteration on a square Gram factor.
    Prox(ProxArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let file = match cli.config.as_deref().map(config::load).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = quadnet::harness::workers_from_env() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let file = file.as_ref();
    let result = match &cli.command {
        Command::Gd(a) => run_gd(a, file),
        Command::Eigenflow(a) => run_eigenflow(a, file),
        Command::Reduced(a) => run_reduced(a, file),
        Command::LvReport(a) => run_lv_report(a, file),
        Command::String(a) => run_string(a, file),
        Command::Cone(a) => run_cone(a, file),
        Command::ConeExpected(a) => run_cone_expected(a, file),
        Command::Phase(a) => run_phase(a, file),
        Command::FitAlphaC(a) => run_fit_alpha_c(a, file),
        Command::Prox(a) => run_prox(a, file),
    };
    match result {
        Ok(summary) => {
            let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
            let _ = writeln!(std::io::stdout(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
