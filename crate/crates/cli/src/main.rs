use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Parser, Subcommand};
use depthforge::synth::Preset;
use depthforge::CategoryMapping;
use depthforge_cli::batch::{evaluate_batch, metric_row, METRIC_COLUMNS};
use depthforge_cli::commands::{self, FitArgs, LossArgs, SynthSource};
use depthforge_cli::error::exit;
use depthforge_cli::{load_config, run_batch, BatchCommand, CliError, Overrides, PipelineConfig};

#[derive(Parser)]
#[command(name = "depthforge", version, about = "Depth supervision from multi-view-stereo output")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true, env = "DEPTHFORGE_CONFIG")]
    config: Option<PathBuf>,
    /// Worker threads for batch commands.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Emit logs as JSON lines on stderr.
    #[arg(long, global = true)]
    log_json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse, stabilise and semantically filter each image's depth.
    Refine {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Raw class to category table for `DFS1` label maps.
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Classify each image as Euclidean or ordinal training data.
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
    },
    /// Sample ordinal pairs for images curated as ordinal.
    LabelOrdinal {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Label every image that is not rejected, whatever its verdict.
        #[arg(long)]
        all: bool,
    },
    /// Evaluate the training objective and its gradient.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        image_id: Option<String>,
        /// Write the gradient with respect to predicted log depth as a grid.
        #[arg(long)]
        emit_grad: Option<PathBuf>,
    },
    /// Evaluation metrics for one prediction or a manifest of them.
    Metrics {
        #[arg(long, required_unless_present = "manifest")]
        pred: Option<PathBuf>,
        #[arg(long, required_unless_present = "manifest")]
        gt: Option<PathBuf>,
        #[arg(long, conflicts_with_all = ["pred", "gt"], requires = "pred_dir")]
        manifest: Option<PathBuf>,
        /// Directory holding `<image_id>.dfd` predictions.
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        image_id: Option<String>,
        /// Print a CSV table instead of JSON.
        #[arg(long)]
        csv: bool,
    },
    /// Fit a log-depth grid to a ground-truth map by gradient descent.
    Fit {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        image_id: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Write the loss after every step as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Render a synthetic scene with its noisy iteration stack.
    Synth {
        #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_parser = ["bleed", "transient", "speckle", "mixed"])]
        preset: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn init_logging(json: bool) {
    let filter = tracing_subscriber::EnvFilter::try_from_env("DEPTHFORGE_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let builder = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr);
    if json {
        builder.json().init();
    } else {
        builder.compact().init();
    }
}

fn mapping(path: Option<&Path>) -> Result<CategoryMapping> {
    let Some(path) = path else {
        return Ok(CategoryMapping::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read mapping {}", path.display()))?;
    CategoryMapping::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())).into())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn print_table(rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(METRIC_COLUMNS)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    let overrides = Overrides {
        workers: cli.workers,
        seed: cli.seed,
    };
    let cfg: PipelineConfig = load_config(cli.config.as_deref(), &overrides)?;
    let batch = |manifest: &Path, out_dir: &Path, map: Option<&Path>, cmd| -> Result<u8> {
        let summary = run_batch(manifest, out_dir, &cfg, &mapping(map)?, cmd)?;
        eprintln!(
            "{}: {} records, {} failed",
            out_dir.display(),
            summary.records,
            summary.failed
        );
        Ok(summary.exit_code())
    };
    match cli.command {
        Command::Refine { manifest, out_dir, mapping } => {
            batch(&manifest, &out_dir, mapping.as_deref(), BatchCommand::Refine)
        }
        Command::Curate { manifest, out_dir, mapping } => {
            batch(&manifest, &out_dir, mapping.as_deref(), BatchCommand::Curate)
        }
        Command::LabelOrdinal { manifest, out_dir, mapping, all } => batch(
            &manifest,
            &out_dir,
            mapping.as_deref(),
            BatchCommand::LabelOrdinal { all },
        ),
        Command::Loss { pred, gt, pairs, image_id, emit_grad } => {
            let args = LossArgs {
                pred: &pred,
                gt: &gt,
                pairs: pairs.as_deref(),
                image_id: image_id.as_deref(),
                emit_grad: emit_grad.as_deref(),
            };
            print_json(&commands::loss(&args, &cfg)?)?;
            Ok(exit::SUCCESS)
        }
        Command::Metrics { pred, gt, manifest, pred_dir, pairs, image_id, csv } => {
            if let Some(manifest) = manifest {
                let pred_dir = pred_dir.expect("clap requires pred_dir with manifest");
                let pair_records = pairs.as_deref().map(commands::load_pairs).transpose()?;
                let results = evaluate_batch(&manifest, &pred_dir, pair_records.as_deref(), &cfg)?;
                let failed = results.iter().filter(|(_, r)| r.is_err()).count();
                if csv {
                    let rows: Vec<Vec<String>> = results
                        .iter()
                        .filter_map(|(id, r)| r.as_ref().ok().map(|r| metric_row(id, r)))
                        .collect();
                    print_table(&rows)?;
                } else {
                    let mut out = std::io::stdout().lock();
                    for (id, r) in &results {
                        let line = match r {
                            Ok(r) => serde_json::json!({ "image_id": id, "metrics": r }),
                            Err(e) => serde_json::json!({ "image_id": id, "error": e }),
                        };
                        writeln!(out, "{line}")?;
                    }
                }
                return Ok(if failed == 0 { exit::SUCCESS } else { exit::PARTIAL_FAILURE });
            }
            let (pred, gt) = (pred.expect("clap requires pred"), gt.expect("clap requires gt"));
            let report = commands::metrics(&pred, &gt, pairs.as_deref(), image_id.as_deref(), &cfg)?;
            if csv {
                print_table(&[metric_row(image_id.as_deref().unwrap_or(""), &report)])?;
            } else {
                print_json(&report)?;
            }
            Ok(exit::SUCCESS)
        }
        Command::Fit { gt, pairs, image_id, out, trace } => {
            let args = FitArgs {
                gt: &gt,
                pairs: pairs.as_deref(),
                image_id: image_id.as_deref(),
                out: &out,
                trace: trace.as_deref(),
            };
            print_json(&commands::fit(&args, &cfg)?)?;
            Ok(exit::SUCCESS)
        }
        Command::Synth { spec, preset, out_dir } => {
            let source = match (&spec, preset) {
                (Some(path), _) => SynthSource::File(path),
                (None, Some(name)) => SynthSource::Preset(name.parse::<Preset>()?),
                (None, None) => unreachable!("clap requires spec or preset"),
            };
            let manifest = commands::synth(source, cli.seed, &out_dir, &cfg)?;
            println!("{}", manifest.display());
            Ok(exit::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log_json);
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let code = match err.downcast_ref::<CliError>() {
                // already carries its cause in the message
                Some(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code());
                }
                None => match err.downcast_ref::<depthforge::Error>() {
                    Some(depthforge::Error::Config(_)) => exit::CONFIG,
                    Some(_) => exit::PARTIAL_FAILURE,
                    None => exit::IO,
                },
            };
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
