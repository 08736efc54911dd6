//! Manifest-driven batch runs over a fixed-size worker pool.
//!
//! Every image is processed independently on owned data; results are
//! gathered in manifest order before anything shared is written, so the
//! outputs do not depend on the number of workers.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use depthforge::curate::{classify_image, extract_ordinal_regions, sample_ordinal_pairs};
use depthforge::io::{read_depth, read_mask_any, write_depth};
use depthforge::manifest::{read_manifest, write_manifest};
use depthforge::metrics::{evaluate, MetricReport};
use depthforge::ordinal::{pairs_for, write_pairs, PairRecord};
use depthforge::refine::refine_pipeline;
use depthforge::semantic::valid_fraction;
use depthforge::{CategoryMapping, DepthMap, ImageRecord, Verdict};
use rayon::prelude::*;
use tracing::{info, warn};

use crate::config::PipelineConfig;
use crate::error::{exit, CliError, CliResult, Context};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const DEPTH_DIR: &str = "depth";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchCommand {
    Refine,
    Curate,
    /// `all` also labels images not curated as ordinal.
    LabelOrdinal { all: bool },
}

impl BatchCommand {
    pub fn name(self) -> &'static str {
        match self {
            BatchCommand::Refine => "refine",
            BatchCommand::Curate => "curate",
            BatchCommand::LabelOrdinal { .. } => "label-ordinal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchSummary {
    pub records: usize,
    pub failed: usize,
}

impl BatchSummary {
    pub fn exit_code(&self) -> u8 {
        if self.failed == 0 {
            exit::SUCCESS
        } else {
            exit::PARTIAL_FAILURE
        }
    }
}

/// Inputs shared read-only by every worker.
struct Inputs<'a> {
    base: PathBuf,
    out_dir: &'a Path,
    cfg: &'a PipelineConfig,
    mapping: &'a CategoryMapping,
}

impl Inputs<'_> {
    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

/// Reads a manifest and the absolute directory its relative paths are
/// resolved against.
pub fn load_manifest(path: &Path) -> CliResult<(Vec<ImageRecord>, PathBuf)> {
    let file = fs::File::open(path).context(|| format!("cannot open manifest {}", path.display()))?;
    let records = read_manifest(BufReader::new(file))
        .context(|| format!("cannot read manifest {}", path.display()))?;
    let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let base = parent
        .canonicalize()
        .context(|| format!("cannot resolve {}", parent.display()))?;
    Ok((records, base))
}

fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Applies `f` to every item on `workers` threads, returning results in
/// input order.
pub fn map_ordered<T, R, F>(workers: usize, items: Vec<T>, f: F) -> CliResult<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    Ok(pool(workers)?.install(|| items.into_par_iter().map(f).collect()))
}

/// Loads the iteration stack of an image: every `.dfd` file of a directory
/// in name order, or a single file.
pub fn load_iterations(path: &Path) -> depthforge::Result<Vec<DepthMap>> {
    if !path.is_dir() {
        return Ok(vec![read_depth(path)?]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "dfd"));
    files.sort();
    if files.is_empty() {
        return Err(depthforge::Error::Format(format!(
            "no .dfd files in {}",
            path.display()
        )));
    }
    files.iter().map(read_depth).collect()
}

fn check_id(id: &str) -> depthforge::Result<()> {
    let bad = id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']);
    if bad {
        return Err(depthforge::Error::Format(format!(
            "image id {id:?} cannot name an output file"
        )));
    }
    Ok(())
}

struct Processed {
    record: ImageRecord,
    pairs: Vec<PairRecord>,
    failed: bool,
}

fn process(command: BatchCommand, inp: &Inputs, mut rec: ImageRecord) -> Processed {
    let depth_path = inp.resolve(&rec.depth_path);
    let mask_path = inp.resolve(&rec.mask_path);
    // input files are referenced by absolute path from the output manifest
    rec.depth_path = depth_path.display().to_string();
    rec.mask_path = mask_path.display().to_string();
    let mut pairs = Vec::new();
    let result = (|| -> depthforge::Result<()> {
        let mask = || read_mask_any(&mask_path, inp.mapping);
        match command {
            BatchCommand::Refine => {
                check_id(&rec.image_id)?;
                let its = load_iterations(&depth_path)?;
                let mask = mask()?;
                let refined = refine_pipeline(&its, &mask, &inp.cfg.refine)?;
                let rel = format!("{DEPTH_DIR}/{}.dfd", rec.image_id);
                write_depth(inp.out_dir.join(&rel), &refined)?;
                rec.depth_path = rel;
                rec.valid_fraction = valid_fraction(&refined, &mask)?;
                rec.note(format!("refine:{}_iterations", its.len()));
            }
            BatchCommand::Curate => {
                let depth = read_depth(&depth_path)?;
                let mask = mask()?;
                rec.valid_fraction = valid_fraction(&depth, &mask)?;
                let verdict = classify_image(&depth, &mask, &inp.cfg.curate)?;
                rec.curation_verdict = Some(verdict);
                rec.note(format!("curate:{verdict:?}").to_lowercase());
            }
            BatchCommand::LabelOrdinal { all } => {
                let wanted = match rec.curation_verdict {
                    Some(Verdict::Ordinal) => true,
                    Some(Verdict::Rejected) => false,
                    _ => all,
                };
                if !wanted {
                    return Ok(());
                }
                let depth = read_depth(&depth_path)?;
                let mask = mask()?;
                let regions = extract_ordinal_regions(&depth, &mask, &inp.cfg.curate)?;
                let sampled = sample_ordinal_pairs(&regions, &rec.image_id, &inp.cfg.curate)?;
                rec.note(format!("label-ordinal:{}_pairs", sampled.len()));
                pairs = sampled
                    .into_iter()
                    .map(|pair| PairRecord {
                        image_id: rec.image_id.clone(),
                        pair,
                    })
                    .collect();
            }
        }
        Ok(())
    })();
    match result {
        Ok(()) => {
            info!(image_id = %rec.image_id, command = command.name(), "processed");
            Processed {
                record: rec,
                pairs,
                failed: false,
            }
        }
        Err(e) => {
            warn!(image_id = %rec.image_id, command = command.name(), error = %e, "image failed");
            rec.note(format!("failed:{}:{e}", command.name()));
            rec.curation_verdict = Some(Verdict::Rejected);
            Processed {
                record: rec,
                pairs: Vec::new(),
                failed: true,
            }
        }
    }
}

/// Runs `command` over every record of `manifest`, writing the updated
/// manifest, the resolved configuration and any per-image outputs under
/// `out_dir`. Per-image failures are recorded in provenance and counted.
pub fn run_batch(
    manifest: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    mapping: &CategoryMapping,
    command: BatchCommand,
) -> CliResult<BatchSummary> {
    cfg.validate()?;
    let (records, base) = load_manifest(manifest)?;
    fs::create_dir_all(out_dir).context(|| format!("cannot create {}", out_dir.display()))?;
    if command == BatchCommand::Refine {
        let dir = out_dir.join(DEPTH_DIR);
        fs::create_dir_all(&dir).context(|| format!("cannot create {}", dir.display()))?;
    }
    let inputs = Inputs {
        base,
        out_dir,
        cfg,
        mapping,
    };
    let total = records.len();
    info!(command = command.name(), records = total, workers = cfg.workers, "batch start");
    let results = map_ordered(cfg.workers, records, |rec| process(command, &inputs, rec))?;

    let failed = results.iter().filter(|r| r.failed).count();
    let mut out_records = Vec::with_capacity(total);
    let mut all_pairs = Vec::new();
    for r in results {
        out_records.push(r.record);
        all_pairs.extend(r.pairs);
    }
    let path = out_dir.join(MANIFEST_FILE);
    let file = fs::File::create(&path).context(|| format!("cannot create {}", path.display()))?;
    write_manifest(std::io::BufWriter::new(file), &out_records)
        .context(|| format!("cannot write {}", path.display()))?;
    if let BatchCommand::LabelOrdinal { .. } = command {
        let path = out_dir.join(PAIRS_FILE);
        let file = fs::File::create(&path).context(|| format!("cannot create {}", path.display()))?;
        write_pairs(file, &all_pairs).context(|| format!("cannot write {}", path.display()))?;
    }
    write_config(out_dir, cfg)?;
    info!(command = command.name(), records = total, failed, "batch done");
    Ok(BatchSummary {
        records: total,
        failed,
    })
}

/// Writes the resolved configuration next to a run's outputs.
pub fn write_config(out_dir: &Path, cfg: &PipelineConfig) -> CliResult<()> {
    let path = out_dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_json()).context(|| format!("cannot write {}", path.display()))
}

/// Column order of metric tables.
pub const METRIC_COLUMNS: [&str; 17] = [
    "image_id", "si_rmse", "sdr", "sdr_eq", "sdr_neq", "whdr", "rms", "rms_log", "abs_rel",
    "sq_rel", "log10", "n_pairs", "n_eq_pairs", "n_neq_pairs", "n_whdr_pairs", "n_pixels", "scale",
];

/// One table row per [`METRIC_COLUMNS`]; absent metrics are empty cells.
pub fn metric_row(image_id: &str, r: &MetricReport) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    vec![
        image_id.to_string(),
        opt(r.si_rmse),
        opt(r.sdr),
        opt(r.sdr_eq),
        opt(r.sdr_neq),
        opt(r.whdr),
        opt(r.rms),
        opt(r.rms_log),
        opt(r.abs_rel),
        opt(r.sq_rel),
        opt(r.log10),
        r.n_pairs.to_string(),
        r.n_eq_pairs.to_string(),
        r.n_neq_pairs.to_string(),
        r.n_whdr_pairs.to_string(),
        r.n_pixels.to_string(),
        r.scale.to_string(),
    ]
}

/// Evaluates `pred_dir/<image_id>.dfd` against each record's depth map.
/// Images that cannot be evaluated get `Err` with the reason.
pub fn evaluate_batch(
    manifest: &Path,
    pred_dir: &Path,
    pairs: Option<&[PairRecord]>,
    cfg: &PipelineConfig,
) -> CliResult<Vec<(String, Result<MetricReport, String>)>> {
    cfg.validate()?;
    let (records, base) = load_manifest(manifest)?;
    let inputs = Inputs {
        base,
        out_dir: pred_dir,
        cfg,
        mapping: &CategoryMapping::default(),
    };
    map_ordered(cfg.workers, records, |rec| {
        let result = (|| -> depthforge::Result<MetricReport> {
            check_id(&rec.image_id)?;
            let gt = read_depth(inputs.resolve(&rec.depth_path))?;
            let pred = read_depth(pred_dir.join(format!("{}.dfd", rec.image_id)))?;
            let own = pairs.map(|p| pairs_for(p, Some(&rec.image_id)));
            evaluate(&pred, &gt, own.as_deref().filter(|p| !p.is_empty()), &inputs.cfg.metrics)
        })();
        if let Err(e) = &result {
            warn!(image_id = %rec.image_id, error = %e, "evaluation failed");
        }
        (rec.image_id, result.map_err(|e| e.to_string()))
    })
}
