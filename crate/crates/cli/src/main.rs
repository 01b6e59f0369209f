use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dfq_cli::bits::parse_bits;
use dfq_cli::commands::{self, SynthKinds};
use dfq_cli::{CliError, DesignBank, DesignSettings, Method, Result};
use dfq_core::quantizer::{OptimizeOptions, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// Design MSE-optimal weight quantizers and compare them with baselines.
#[derive(Parser)]
#[command(name = "dfq", version)]
struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Solver {
    /// Stop when no level moves more than this in one iteration.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,

    /// Iteration budget per quantizer.
    #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
    max_iter: usize,
}

impl Solver {
    fn options(self) -> Result<OptimizeOptions> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Usage(format!("--tol must be positive, got {}", self.tol)));
        }
        Ok(OptimizeOptions {
            tol: self.tol,
            max_iter: self.max_iter,
            ..OptimizeOptions::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Precompute optimal quantizers for the standard Gaussian and Laplace.
    Tables {
        /// Bit widths: `4`, `4-8`, `4..8` or `2,4,8`.
        #[arg(long, default_value = "1-8")]
        bits: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: Solver,
    },
    /// Fit both families to every tensor and pick one by K-S distance.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Quantize every tensor and write QDFQ files plus a report.
    Quantize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        bits: u32,
        #[arg(long, value_enum, default_value_t = Method::Optimal)]
        method: Method,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Reuse optimal quantizers from a `tables` file.
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        solver: Solver,
    },
    /// Compare optimal, uniform and APoT quantizers on every tensor.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "4-8")]
        bits: String,
        /// CSV report; a JSON twin is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        table: Option<PathBuf>,
        #[command(flatten)]
        solver: Solver,
    },
    /// Write random Gaussian/Laplace tensors and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        layers: usize,
        #[arg(long, default_value_t = 100_000)]
        size: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = SynthKinds::Mixed)]
        kinds: SynthKinds,
    },
}

fn bank(solver: Solver, table: Option<&PathBuf>) -> Result<DesignBank> {
    let mut bank = DesignBank::new(DesignSettings {
        optimize: solver.options()?,
    });
    if let Some(path) = table {
        bank.seed_from_table(&commands::read_table(path)?)
            .map_err(|e| CliError::bad_input(path, e))?;
    }
    Ok(bank)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Tables { bits, out, solver } => {
            let bits = parse_bits(&bits)?;
            let table = commands::tables(&bits, &solver.options()?, &out)?;
            println!("wrote {} quantizers to {}", table.entries.len(), out.display());
            Ok(())
        }
        Command::Fit { manifest, out } => {
            let (output, tally) = commands::fit(&manifest, &out)?;
            for l in &output.layers {
                match (&l.fit, &l.error) {
                    (Some(f), _) => println!(
                        "{}\t{}\tks_gaussian={:.4}\tks_laplace={:.4}",
                        l.layer, f.selected, f.ks_gaussian, f.ks_laplace
                    ),
                    (None, Some(e)) => println!("{}\terror: {e}", l.layer),
                    (None, None) => {}
                }
            }
            tally.check()
        }
        Command::Quantize {
            manifest,
            bits,
            method,
            out,
            table,
            solver,
        } => {
            let mut bank = bank(solver, table.as_ref())?;
            let (output, tally) = commands::quantize(&manifest, bits, method, &out, &mut bank)?;
            for l in &output.layers {
                println!(
                    "{}\t{}\tanalytic={:.6e}\tempirical={:.6e}",
                    l.row.layer, l.file, l.row.analytic_mse, l.row.empirical_mse
                );
            }
            tally.check()
        }
        Command::Compare {
            manifest,
            bits,
            out,
            table,
            solver,
        } => {
            let bits = parse_bits(&bits)?;
            let mut bank = bank(solver, table.as_ref())?;
            let (output, tally) = commands::compare(&manifest, &bits, &out, &mut bank)?;
            println!(
                "wrote {} rows ({} failures) to {}",
                output.rows.len(),
                output.failures.len(),
                out.display()
            );
            tally.check()
        }
        Command::Synth {
            out,
            layers,
            size,
            seed,
            kinds,
        } => {
            let path = commands::synth(&out, layers, size, seed, kinds)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
