//! Direct gradient descent on a per-pixel log-depth grid.
//!
//! There is no network here: the free variables are the log depths
//! themselves. This exercises the losses and their gradients end to end.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::depth::LogDepthMap;
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig};
use crate::ordinal::OrdinalPair;
use crate::rng;

/// Central-difference step in log depth.
pub const FD_STEP: f64 = 1e-4;

/// Pixels whose analytic gradient is smaller than this are not audited.
pub const FD_MIN_GRADIENT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Init {
    ConstantZero,
    Random { seed: u64, stddev: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Multiplicative decay of the step size after every step; 1 keeps it
    /// constant.
    pub lr_decay: f64,
    pub init: Init,
    pub loss: LossConfig,
    /// Run a finite-difference audit every this many steps.
    pub fd_check_every: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            learning_rate: 1.0,
            lr_decay: 1.0,
            init: Init::ConstantZero,
            loss: LossConfig::default(),
            fd_check_every: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if let Init::Random { stddev, .. } = self.init {
            if !(stddev >= 0.0 && stddev.is_finite()) {
                return Err(Error::Config(format!("init stddev must be >= 0, got {stddev}")));
            }
        }
        if self.fd_check_every == Some(0) {
            return Err(Error::Config("fd_check_every must be >= 1".into()));
        }
        self.loss.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub fitted: LogDepthMap,
    /// Total loss at the initial grid and after every step.
    pub trace: Vec<f64>,
    /// `(step, max relative gradient error)` for each audit that ran.
    pub audits: Vec<(usize, f64)>,
}

/// Pixels optimised by the fit: ground-truth support plus pair endpoints.
fn support(gt: &LogDepthMap, pairs: &[OrdinalPair]) -> Result<Vec<bool>> {
    let (w, h) = gt.shape();
    let mut free: Vec<bool> = (0..gt.len()).map(|i| gt.is_valid(i)).collect();
    for p in pairs {
        p.check_bounds(w, h)?;
        let (i, j) = p.indices(w);
        free[i] = true;
        free[j] = true;
    }
    Ok(free)
}

/// Fits a log-depth grid to `gt` (and `pairs`) from the configured
/// initialisation.
pub fn fit_log_depth(gt: &LogDepthMap, pairs: &[OrdinalPair], cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    if gt.valid_count() == 0 {
        return Err(Error::EmptyOverlap);
    }
    let free = support(gt, pairs)?;
    let values = match cfg.init {
        Init::ConstantZero => free.iter().map(|&f| if f { 0.0 } else { f64::NAN }).collect(),
        Init::Random { seed, stddev } => {
            let normal = Normal::new(0.0, stddev)
                .map_err(|e| Error::Config(format!("init distribution: {e}")))?;
            let mut rng = rng::substream(seed, 0);
            free.iter()
                .map(|&f| {
                    let v = normal.sample(&mut rng);
                    if f {
                        v
                    } else {
                        f64::NAN
                    }
                })
                .collect()
        }
    };
    let init = LogDepthMap::new(gt.width(), gt.height(), values)?;
    fit_log_depth_from(init, gt, pairs, cfg)
}

/// Gradient descent from an explicit starting grid. Pixels invalid in
/// `init` stay invalid.
pub fn fit_log_depth_from(
    init: LogDepthMap,
    gt: &LogDepthMap,
    pairs: &[OrdinalPair],
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let mut x = init;
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut audits = Vec::new();
    let mut lr = cfg.learning_rate;
    for step in 0..=cfg.steps {
        let report = total_loss(&x, gt, pairs, &cfg.loss)?;
        if !report.total.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: report.total,
            });
        }
        trace.push(report.total);
        if let Some(every) = cfg.fd_check_every {
            if step % every == 0 {
                audits.push((step, finite_diff_audit(&x, gt, pairs, &cfg.loss)?.max_rel_error));
            }
        }
        if step == cfg.steps {
            break;
        }
        for (i, g) in report.grad_wrt_log_depth.iter().enumerate() {
            if let Some(v) = x.get(i) {
                x.set(i, v - lr * g);
            }
        }
        lr *= cfg.lr_decay;
    }
    Ok(FitResult {
        fitted: x,
        trace,
        audits,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    /// Largest `|analytic - numeric| / |analytic|` over audited pixels.
    pub max_rel_error: f64,
    pub evaluated_pixels: usize,
}

/// Compares the analytic gradient of the total loss with central finite
/// differences at every valid pixel of `pred`.
pub fn finite_diff_audit(
    pred: &LogDepthMap,
    gt: &LogDepthMap,
    pairs: &[OrdinalPair],
    cfg: &LossConfig,
) -> Result<AuditReport> {
    let analytic = total_loss(pred, gt, pairs, cfg)?.grad_wrt_log_depth;
    let mut probe = pred.clone();
    let mut max_rel_error = 0.0f64;
    let mut evaluated = 0usize;
    for (i, &a) in analytic.iter().enumerate() {
        let Some(v) = pred.get(i) else { continue };
        if a.abs() <= FD_MIN_GRADIENT {
            continue;
        }
        probe.set(i, v + FD_STEP);
        let plus = total_loss(&probe, gt, pairs, cfg)?.total;
        probe.set(i, v - FD_STEP);
        let minus = total_loss(&probe, gt, pairs, cfg)?.total;
        probe.set(i, v);
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        max_rel_error = max_rel_error.max((a - numeric).abs() / a.abs());
        evaluated += 1;
    }
    Ok(AuditReport {
        max_rel_error,
        evaluated_pixels: evaluated,
    })
}
