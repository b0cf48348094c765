use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tomatoscan::edgeops::{DEFAULT_ACUTANCE, DEFAULT_CONTRAST};
use tomatoscan::fusion::DepthMode;
use tomatoscan::metrics::DEFAULT_EDGE_SAMPLES;
use tomatoscan::pipeline::{self, ErrorSource, EvalKind, PhenotypeOptions, StatsInput};
use tomatoscan::Error;

#[derive(Parser)]
#[command(name = "tomatoscan", version, about = "Fruit phenotyping and segmentation evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DepthModeArg {
    Center,
    MaskMedian,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Printed,
    Recomputed,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalKindArg {
    Mee,
    Map,
    Edgeloss,
}

#[derive(Subcommand)]
enum Command {
    /// Measure every fruit of a scene and report metric phenotypes as JSON.
    Phenotype {
        #[arg(long)]
        manifest: PathBuf,
        /// Model file (`k=<value>`) or calibration CSV.
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, value_enum, default_value = "center")]
        depth_mode: DepthModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Include wall-clock timing in the report.
        #[arg(long)]
        timing: bool,
        /// Directory for pose-corrected fruit crops.
        #[arg(long)]
        crops: Option<PathBuf>,
    },
    /// Fit the depth-to-scale coefficient from ruler samples.
    Calibrate {
        #[arg(long)]
        csv: PathBuf,
        /// Model file to write; defaults to the CSV path with a `.model` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Box-plot statistics of relative errors per trait.
    Stats {
        #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
        bundled: bool,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Which errors feed the CSV output.
        #[arg(long, value_enum, default_value = "printed")]
        source: SourceArg,
    },
    /// Segmentation metrics between prediction and ground-truth manifests.
    Eval {
        #[arg(value_enum)]
        kind: EvalKindArg,
        #[arg(long, required = true)]
        pred: Vec<PathBuf>,
        #[arg(long)]
        gt: Vec<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_EDGE_SAMPLES)]
        samples: usize,
        /// CSV report path.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contrast-then-acutance enhancement of a PPM/PGM image.
    Boost {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CONTRAST)]
        contrast: f64,
        #[arg(long, default_value_t = DEFAULT_ACUTANCE)]
        acutance: f64,
    },
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Phenotype {
            manifest,
            calibration,
            depth_mode,
            out,
            timing,
            crops,
        } => {
            let options = PhenotypeOptions {
                depth_mode: match depth_mode {
                    DepthModeArg::Center => DepthMode::Center,
                    DepthModeArg::MaskMedian => DepthMode::MaskMedian,
                },
                timing,
                crops_dir: crops,
            };
            let report = pipeline::cmd_phenotype(&manifest, &calibration, &options)?;
            for f in &report.fruits {
                for w in &f.warnings {
                    eprintln!("warning: fruit {}: {w}", f.id);
                }
                if let pipeline::FruitOutcome::Error { error } = &f.outcome {
                    eprintln!("warning: fruit {} not measured: {error}", f.id);
                }
            }
            match out {
                Some(path) => write(&path, &report.to_json())?,
                None => print!("{}", report.to_json()),
            }
        }
        Command::Calibrate { csv, out } => {
            let out = out.unwrap_or_else(|| csv.with_extension("model"));
            let model = pipeline::cmd_calibrate(&csv, Some(&out))?;
            println!("k={}", model.k);
            println!("rms_residual={}", model.rms_residual);
            println!("n_samples={}", model.n_samples);
            eprintln!("model written to {}", out.display());
        }
        Command::Stats {
            bundled,
            csv,
            out,
            source,
        } => {
            let report = match (&csv, bundled) {
                (Some(path), _) => pipeline::cmd_stats(StatsInput::Csv(path))?,
                (None, _) => pipeline::cmd_stats(StatsInput::Bundled)?,
            };
            let source = match source {
                SourceArg::Printed => ErrorSource::Printed,
                SourceArg::Recomputed => ErrorSource::Recomputed,
            };
            match out {
                Some(path) => {
                    write(&path, &report.to_csv(source))?;
                    print!("{}", report.to_json());
                }
                None => print!("{}", report.to_csv(source)),
            }
        }
        Command::Eval {
            kind,
            pred,
            gt,
            samples,
            out,
        } => {
            let kind = match kind {
                EvalKindArg::Mee => EvalKind::Mee,
                EvalKindArg::Map => EvalKind::Map,
                EvalKindArg::Edgeloss => EvalKind::Edgeloss,
            };
            let report = pipeline::cmd_eval(kind, &pred, &gt, samples)?;
            if let Some(path) = out {
                write(&path, &report.to_csv())?;
            }
            print!("{}", report.to_json());
        }
        Command::Boost {
            input,
            out,
            contrast,
            acutance,
        } => {
            pipeline::cmd_boost(&input, &out, contrast, acutance)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
