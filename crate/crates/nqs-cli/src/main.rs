use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use nqs_cli::config::{template, ExperimentConfig, ExperimentKind};
use nqs_cli::experiments::{check_circuit_file, expand_state_file, run_experiment};
use nqs_cli::verify::verify_suite;

/// Simulate quantum circuits on neural-network quantum states.
#[derive(Parser)]
#[command(name = "nqs", version, about, max_term_width = 100)]
struct Cli {
    /// Worker thread count for sampling and noise trajectories
    /// (overrides the NQS_THREADS environment variable; default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file
    Run {
        /// Path to a TOML experiment config (see `init`)
        config: PathBuf,
    },
    /// Print a commented config template for an experiment type
    Init {
        /// One of: hadamard_transform, truncated_fourier, noise_sweep,
        /// prepare_ground_state, run_circuit_file
        experiment: String,
        /// Write the template to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the invariant battery and report pass/fail per property
    Verify {
        /// Base seed for the battery's random instances
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Expand an RBM parameter file into a dense statevector dump
    Expand {
        /// RBM parameter file (JSON)
        state: PathBuf,
        /// Output path (default: the input path with extension .nqsvec)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Parse a circuit file and report its composition without running it
    CircuitCheck {
        /// Circuit text file, one gate per line
        circuit: PathBuf,
    },
}

fn configure_threads(flag: Option<usize>) {
    let count = flag.or_else(|| {
        std::env::var("NQS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(count) = count.filter(|&c| c > 0) {
        // Ignore failure: the pool can only be configured once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(count)
            .build_global();
    }
}

fn run_command(command: Command) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match command {
        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let summary = run_experiment(&config)?;
            println!(
                "{}: wrote {}",
                summary.experiment_id,
                config.output_dir.join("summary.json").display()
            );
            if let Some(product) = summary.overlap_product {
                println!("  overlap product {product:.6}");
            }
            if let Some(overlap) = summary.final_exact_overlap {
                println!("  final overlap vs dense backend {overlap:.6}");
            }
            if let Some(energy) = summary.energy_estimate {
                println!("  energy estimate {energy:.8}");
            }
            if let Some(err) = summary.relative_energy_error {
                println!("  relative energy error {err:.2e}");
            }
            if let Some((lo, hi)) = summary.effective_rate_bracket {
                println!("  effective noise rate in [{lo:.1e}, {hi:.1e}]");
            }
            if let Some(reason) = &summary.aborted {
                eprintln!("aborted: {reason}");
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Init { experiment, out } => {
            let kind = ExperimentKind::from_name(&experiment).ok_or_else(|| {
                format!(
                    "unknown experiment {experiment:?}; expected one of: {}",
                    ExperimentKind::ALL
                        .iter()
                        .map(|k| k.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            })?;
            let text = template(kind);
            match out {
                Some(path) => {
                    std::fs::write(&path, &text)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed } => {
            let report = verify_suite(seed)?;
            for check in &report.checks {
                let status = if check.passed { "PASS" } else { "FAIL" };
                println!("{status}  {} ({})", check.name, check.detail);
            }
            if report.all_passed() {
                println!("all {} properties hold", report.checks.len());
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Expand { state, out } => {
            let out = out.unwrap_or_else(|| state.with_extension("nqsvec"));
            let n = expand_state_file(&state, &out)?;
            println!("wrote {} ({n} qubits)", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::CircuitCheck { circuit } => {
            println!("{}", check_circuit_file(&circuit)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads(cli.threads);
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
