//! Single-input subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use depthforge::fitkit::fit_log_depth;
use depthforge::io::{encode_grid, read_depth, write_depth, write_mask};
use depthforge::loss::{total_loss, LossReport};
use depthforge::manifest::write_manifest;
use depthforge::metrics::{evaluate, si_rmse, MetricReport};
use depthforge::ordinal::{pairs_for, read_pairs, PairRecord};
use depthforge::synth::{corrupt, preset, render, Preset, SynthFixture};
use depthforge::{ImageRecord, OrdinalPair};
use serde::Serialize;

use crate::batch::{write_config, MANIFEST_FILE};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, Context};

pub fn load_pairs(path: &Path) -> CliResult<Vec<PairRecord>> {
    let file = fs::File::open(path).context(|| format!("cannot open pairs {}", path.display()))?;
    read_pairs(file).context(|| format!("cannot read pairs {}", path.display()))
}

fn select_pairs(path: Option<&Path>, image_id: Option<&str>) -> CliResult<Vec<OrdinalPair>> {
    match path {
        Some(p) => Ok(pairs_for(&load_pairs(p)?, image_id)),
        None => Ok(Vec::new()),
    }
}

fn depth(path: &Path) -> CliResult<depthforge::DepthMap> {
    read_depth(path).context(|| format!("cannot read depth {}", path.display()))
}

pub struct LossArgs<'a> {
    pub pred: &'a Path,
    pub gt: &'a Path,
    pub pairs: Option<&'a Path>,
    pub image_id: Option<&'a str>,
    /// Where to write the gradient with respect to predicted log depth.
    pub emit_grad: Option<&'a Path>,
}

pub fn loss(args: &LossArgs, cfg: &PipelineConfig) -> CliResult<LossReport> {
    let pred = depth(args.pred)?;
    let gt = depth(args.gt)?;
    let pairs = select_pairs(args.pairs, args.image_id)?;
    let report = total_loss(&pred.to_log(), &gt.to_log(), &pairs, &cfg.loss)
        .context(|| "loss evaluation".into())?;
    if let Some(path) = args.emit_grad {
        let grid: Vec<f32> = report.grad_wrt_log_depth.iter().map(|&g| g as f32).collect();
        let file = fs::File::create(path).context(|| format!("cannot create {}", path.display()))?;
        encode_grid(std::io::BufWriter::new(file), pred.width(), pred.height(), &grid)
            .context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(report)
}

pub fn metrics(
    pred: &Path,
    gt: &Path,
    pairs: Option<&Path>,
    image_id: Option<&str>,
    cfg: &PipelineConfig,
) -> CliResult<MetricReport> {
    let pred = depth(pred)?;
    let gt = depth(gt)?;
    let pairs = select_pairs(pairs, image_id)?;
    let pairs = (!pairs.is_empty()).then_some(pairs.as_slice());
    evaluate(&pred, &gt, pairs, &cfg.metrics).context(|| "evaluation".into())
}

#[derive(Clone, Debug, Serialize)]
pub struct FitSummary {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Against the ground truth the fit was run on.
    pub si_rmse: f64,
    pub audits: Vec<(usize, f64)>,
}

pub struct FitArgs<'a> {
    pub gt: &'a Path,
    pub pairs: Option<&'a Path>,
    pub image_id: Option<&'a str>,
    pub out: &'a Path,
    /// CSV of `step,loss`.
    pub trace: Option<&'a Path>,
}

pub fn fit(args: &FitArgs, cfg: &PipelineConfig) -> CliResult<FitSummary> {
    let gt = depth(args.gt)?;
    let pairs = select_pairs(args.pairs, args.image_id)?;
    let result = fit_log_depth(&gt.to_log(), &pairs, &cfg.fit_config()).context(|| "fit".into())?;
    let fitted = result.fitted.to_depth().context(|| "fitted depth".into())?;
    write_depth(args.out, &fitted).context(|| format!("cannot write {}", args.out.display()))?;
    if let Some(path) = args.trace {
        let write = || -> csv::Result<()> {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(["step", "loss"])?;
            for (step, loss) in result.trace.iter().enumerate() {
                w.write_record([step.to_string(), loss.to_string()])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| CliError::Io {
            context: format!("cannot write {}", path.display()),
            source: e.into(),
        })?;
    }
    Ok(FitSummary {
        steps: result.trace.len() - 1,
        initial_loss: result.trace[0],
        final_loss: *result.trace.last().unwrap(),
        si_rmse: si_rmse(&fitted, &gt).context(|| "si-RMSE".into())?,
        audits: result.audits,
    })
}

pub enum SynthSource<'a> {
    Preset(Preset),
    File(&'a Path),
}

/// Files written by [`synth`], relative to its output directory.
pub const SYNTH_CLEAN: &str = "clean.dfd";
pub const SYNTH_MASK: &str = "mask.dfm";
pub const SYNTH_ITERATIONS: &str = "iterations";
pub const SYNTH_FIXTURE: &str = "fixture.json";

/// Renders a scene and its noisy iteration stack, plus a one-record manifest
/// ready for `refine`. `seed` replaces the scene and noise seeds.
pub fn synth(
    source: SynthSource,
    seed: Option<u64>,
    out_dir: &Path,
    cfg: &PipelineConfig,
) -> CliResult<PathBuf> {
    let (name, mut fixture) = match source {
        SynthSource::Preset(p) => (format!("{p:?}").to_lowercase(), preset(p)),
        SynthSource::File(path) => {
            let text = fs::read_to_string(path)
                .context(|| format!("cannot read scene {}", path.display()))?;
            let fx: SynthFixture = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("scene {}: {e}", path.display())))?;
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scene".into());
            (stem, fx)
        }
    };
    if let Some(seed) = seed {
        fixture.scene.seed = seed;
        fixture.noise.seed = seed;
    }
    let (clean, mask) = render(&fixture.scene).context(|| "scene".into())?;
    let iterations = corrupt(&clean, &mask, &fixture.noise).context(|| "noise".into())?;

    let it_dir = out_dir.join(SYNTH_ITERATIONS);
    fs::create_dir_all(&it_dir).context(|| format!("cannot create {}", it_dir.display()))?;
    let io_err = |p: &Path| {
        let p = p.display().to_string();
        move || format!("cannot write {p}")
    };
    let p = out_dir.join(SYNTH_CLEAN);
    write_depth(&p, &clean).context(io_err(&p))?;
    let p = out_dir.join(SYNTH_MASK);
    write_mask(&p, &mask).context(io_err(&p))?;
    for (k, it) in iterations.iter().enumerate() {
        let p = it_dir.join(format!("iter_{k:03}.dfd"));
        write_depth(&p, it).context(io_err(&p))?;
    }
    let p = out_dir.join(SYNTH_FIXTURE);
    let mut json = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
    json.push('\n');
    fs::write(&p, json).context(io_err(&p))?;

    let mut record = ImageRecord::new(name, SYNTH_ITERATIONS, SYNTH_MASK);
    record.note("synth");
    let p = out_dir.join(MANIFEST_FILE);
    let file = fs::File::create(&p).context(io_err(&p))?;
    write_manifest(std::io::BufWriter::new(file), &[record]).context(io_err(&p))?;
    write_config(out_dir, cfg)?;
    Ok(p)
}
