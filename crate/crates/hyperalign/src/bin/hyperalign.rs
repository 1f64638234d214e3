//! Command-line front end. All logic lives in the library; this binary
//! parses flags, applies output/seed overrides, and maps errors to exit
//! codes (0 success, 1 config error, 2 runtime error, 3 report error).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hyperalign::cube::{load_cube, load_labels};
use hyperalign::experiment::ExperimentConfig;
use hyperalign::runner;
use hyperalign::Error;

#[derive(Parser)]
#[command(
    name = "hyperalign",
    version,
    about = "Hyperspectral classification under label scarcity and domain shift"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured synthetic scene pair and write it to disk.
    GenSynth {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's report.out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load and validate a cube (and optionally its labels), printing a
    /// summary.
    Ingest {
        #[arg(long)]
        cube: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Run the configured experiment over all seeds.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Run an explicit seed list, comma separated.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Export features at a layer as CSV (domain, label, f0..).
    ExportFeatures {
        /// Checkpoint base path (without .bin/.json extension).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// `input`, a layer index, or `fa<k>`/`concat` for adaptation
        /// models.
        #[arg(long)]
        layer: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a run directory into report.md and summary.csv.
    Report {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(
    path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    seeds: Option<Vec<u64>>,
) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    runner::apply_env_overrides(&mut cfg)?;
    if let Some(out) = out {
        cfg.report.out_dir = out;
    }
    if let Some(seeds) = seeds {
        if seeds.is_empty() {
            return Err(Error::Config {
                field: "seeds".into(),
                msg: "the seed list cannot be empty".into(),
            });
        }
        cfg.report.seeds = seeds;
    }
    if let Some(seed) = seed {
        cfg.report.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenSynth { config, out } => {
            let cfg = load_config(&config, out, None, None)?;
            let summary = runner::gen_synth(&cfg, &cfg.report.out_dir.clone())?;
            println!("wrote {} files to {:?}", summary.files.len(), summary.out_dir);
            for f in &summary.files {
                println!("  {f}");
            }
            println!("shift metadata: {}", summary.shift_metadata);
            Ok(())
        }
        Command::Ingest { cube, labels } => {
            let cube = load_cube(&cube)?;
            println!(
                "cube: {}x{} pixels, {} bands, {} data, {:.1}-{:.1} nm",
                cube.height(),
                cube.width(),
                cube.bands(),
                cube.kind(),
                cube.wavelengths_nm().first().copied().unwrap_or(f64::NAN),
                cube.wavelengths_nm().last().copied().unwrap_or(f64::NAN),
            );
            if let Some(labels_path) = labels {
                let labels = load_labels(&labels_path, cube.height(), cube.width())?;
                let counts = labels.class_counts();
                println!("labels: {} classes", labels.num_classes());
                for (id, count) in counts.iter().enumerate().skip(1) {
                    let name = labels.class_name(id as u32).unwrap_or("<unnamed>");
                    println!("  {id} {name}: {count} pixels");
                }
            }
            Ok(())
        }
        Command::Run {
            config,
            out,
            seed,
            seeds,
        } => {
            let cfg = load_config(&config, out, seed, seeds)?;
            let outcome = runner::run(&cfg)?;
            println!(
                "mode {}: OA {} over seeds {:?}",
                outcome.metrics.mode, outcome.metrics.oa_formatted, outcome.metrics.seeds
            );
            for failure in &outcome.metrics.failures {
                eprintln!("warning: {failure}");
            }
            println!("artifacts in {:?}", outcome.out_dir);
            Ok(())
        }
        Command::ExportFeatures {
            checkpoint,
            config,
            layer,
            out,
        } => {
            let cfg = load_config(&config, None, None, None)?;
            let rows = runner::export_features(&checkpoint, &cfg, &layer, &out)?;
            println!("wrote {rows} feature rows to {out:?}");
            Ok(())
        }
        Command::Report { run_dir } => {
            let md = runner::report(&run_dir)?;
            println!("{md}");
            Ok(())
        }
    }
}
