use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use shapeband::bands::levy_diagnostic;
use shapeband::cli::{
    read_band, run_band, run_coverage, run_simulate, run_verify_kernels, CliError, CoverageConfig,
    KappaSource, KernelSet, RunConfig,
};
use shapeband::critical::{SimulationConfig, DEFAULT_REPS};
use shapeband::generators::TestFunction;
use shapeband::kernels::ShapeClass;

/// Simultaneous confidence bands for monotone and convex regression.
#[derive(Parser)]
#[command(name = "shapeband", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a confidence band from a CSV of observations.
    Band(BandArgs),
    /// Simulate a critical-value table.
    Simulate(SimulateArgs),
    /// Monte-Carlo coverage of the raw band for a named test function.
    Coverage(CoverageArgs),
    /// Check kernel constants, discrete sums and the bias-sign property.
    VerifyKernels {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Lévy distance and D_eps between the bounds of a band file.
    Levy {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Use the raw bounds even when postprocessed ones are present.
        #[arg(long)]
        raw: bool,
    },
}

#[derive(Args)]
struct KappaArgs {
    #[arg(long, group = "kappa_src")]
    kappa: Option<f64>,
    #[arg(long, group = "kappa_src")]
    kappa_table: Option<PathBuf>,
    #[arg(long, group = "kappa_src")]
    simulate_kappa: bool,
}

#[derive(Args)]
struct BandArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    shape: ShapeClass,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, conflicts_with = "estimate_sigma")]
    sigma: Option<f64>,
    /// Estimate sigma from first differences (the default without --sigma).
    #[arg(long)]
    estimate_sigma: bool,
    #[command(flatten)]
    kappa: KappaArgs,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    postprocess: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    shape: ShapeClass,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.1, 0.05])]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    shape: ShapeClass,
    #[arg(long)]
    function: TestFunction,
    #[arg(long)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Band(a) => {
            let kappa = match (a.kappa.kappa, a.kappa.kappa_table) {
                (Some(k), _) => KappaSource::Inline(k),
                (None, Some(p)) => KappaSource::Table(p),
                (None, None) => KappaSource::Auto {
                    simulate: a.kappa.simulate_kappa,
                },
            };
            let run = run_band(&RunConfig {
                input: a.input,
                output: a.output.clone(),
                shape: a.shape,
                alpha: a.alpha,
                sigma: a.sigma,
                kappa,
                reps: a.reps,
                seed: a.seed,
                postprocess: a.postprocess,
            })?;
            let s = &run.sidecar;
            println!(
                "n = {}, kappa = {}, sigma = {}{}",
                s.n,
                s.kappa,
                s.sigma_used,
                if s.sigma_estimated {
                    " (estimated; band is approximate)"
                } else {
                    ""
                }
            );
            match run.feasibility.witness_violation_index {
                None => println!("feasible: band contains a {} curve", s.shape),
                Some(k) => println!(
                    "infeasible: no {} curve fits inside the band (grid index {})",
                    s.shape,
                    k + 1
                ),
            }
            println!("wrote {}", a.output.display());
            Ok(run.exit_code())
        }
        Command::Simulate(a) => {
            let table = run_simulate(
                &SimulationConfig {
                    n: a.n,
                    shape: a.shape,
                    reps: a.reps,
                    base_seed: a.seed,
                    alphas: a.alpha,
                },
                &a.output,
            )?;
            for e in &table.entries {
                println!("alpha = {}: kappa = {:.6}", e.alpha, e.kappa);
            }
            Ok(0)
        }
        Command::Coverage(a) => {
            let r = run_coverage(&CoverageConfig {
                shape: a.shape,
                n: a.n,
                kappa: a.kappa,
                sigma: a.sigma,
                reps: a.reps,
                seed: a.seed,
                function: a.function,
            })?;
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("serializable")
            );
            Ok(0)
        }
        Command::VerifyKernels { trials, seed } => {
            let report = run_verify_kernels(&KernelSet::default(), trials, seed);
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Command::Levy {
            input,
            epsilon,
            raw,
        } => {
            let (raw_band, post) = read_band(&input)?;
            let band = match post {
                Some(p) if !raw => p,
                _ => raw_band,
            };
            let d = levy_diagnostic(&band.lower, &band.upper, epsilon)?;
            println!(
                "epsilon = {}, D_eps = {}, levy = {}",
                d.epsilon, d.d_epsilon, d.levy
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors share the parse-error code; help and version exit 0
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
