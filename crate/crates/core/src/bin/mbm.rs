use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mbm_core::experiment::{
    parse_spec, run, validate, write_outputs, ExperimentError, ExperimentKind, ExperimentSpec,
    Violation,
};

const EXIT_INVALID: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

#[derive(Parser)]
#[command(name = "mbm", version, about = "Achievable-rate experiments for media-based modulation links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec and write its CSV and manifest.
    Run {
        spec: PathBuf,
        /// Output directory; the file name comes from the spec's output_path.
        #[arg(long, env = "MBM_OUT_DIR")]
        out: Option<PathBuf>,
        /// Override the spec's master_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a spec file and list every violation.
    Validate { spec: PathBuf },
    /// Print the available experiments.
    ListExperiments,
}

enum Failure {
    Invalid(Vec<Violation>),
    Runtime(String),
}

fn load(path: &Path) -> Result<ExperimentSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let spec = parse_spec(&text).map_err(Failure::Invalid)?;
    let violations = validate(&spec);
    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(Failure::Invalid(violations))
    }
}

fn run_command(
    path: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: Option<usize>,
) -> Result<(), Failure> {
    let mut spec = load(path)?;
    if let Some(seed) = seed {
        spec.master_seed = seed;
    }
    let csv_path = match out {
        Some(dir) => dir.join(spec.output_path.file_name().unwrap_or_default()),
        None => spec.output_path.clone(),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Failure::Runtime(e.to_string()))?;
    let output = pool.install(|| run(&spec)).map_err(|e| match e {
        ExperimentError::Invalid(v) => Failure::Invalid(v),
        other => Failure::Runtime(other.to_string()),
    })?;
    let (csv, manifest) =
        write_outputs(&output, &csv_path).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!(
        "{}: {} rows -> {} ({})",
        spec.experiment.as_str(),
        output.rows.len(),
        csv.display(),
        manifest.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            spec,
            out,
            seed,
            threads,
        } => run_command(&spec, out, seed, threads),
        Command::Validate { spec } => load(&spec).map(|s| {
            println!("ok: {}", s.experiment.as_str());
        }),
        Command::ListExperiments => {
            for kind in ExperimentKind::ALL {
                println!("{:<18} {}", kind.as_str(), kind.description());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(violations)) => {
            for v in violations {
                eprintln!("invalid: {v}");
            }
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
