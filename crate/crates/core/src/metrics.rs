//! Evaluation metrics for predicted depth maps.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{check_shape, Error, Result};
use crate::loss::data_loss;
use crate::ordinal::OrdinalPair;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Ratio tolerance of the same-depth band used by SDR.
    pub delta: f64,
    /// Ratio tolerance used when turning predictions into relations for WHDR.
    pub whdr_delta: f64,
    /// SDR samples this many pairs when more are available.
    pub sdr_max_pairs: usize,
    pub rng_seed: u64,
    /// Ground-truth depths above this are ignored by the standard metrics.
    pub depth_cap: Option<f64>,
    /// Rescale predictions by the least-squares factor before the standard
    /// metrics.
    pub align_scale: bool,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            whdr_delta: 0.1,
            sdr_max_pairs: 1_000_000,
            rng_seed: 0,
            depth_cap: None,
            align_scale: false,
        }
    }
}

impl MetricConfig {
    /// Evaluation protocol used for Make3D: 70 m cap with scale alignment.
    pub fn make3d() -> Self {
        Self {
            depth_cap: Some(70.0),
            align_scale: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("delta", self.delta), ("whdr_delta", self.whdr_delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if self.sdr_max_pairs == 0 {
            return Err(Error::Config("sdr_max_pairs must be >= 1".into()));
        }
        if let Some(cap) = self.depth_cap {
            if !(cap > 0.0) {
                return Err(Error::Config(format!("depth_cap must be > 0, got {cap}")));
            }
        }
        Ok(())
    }
}

fn mutual_pixels(pred: &DepthMap, gt: &DepthMap) -> Result<Vec<usize>> {
    check_shape(gt.shape(), pred.shape())?;
    Ok((0..pred.len())
        .filter(|&i| pred.is_valid(i) && gt.is_valid(i))
        .collect())
}

fn scale_over(pred: &DepthMap, gt: &DepthMap, pixels: &[usize]) -> Result<f64> {
    if pixels.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for &i in pixels {
        let d = f64::from(pred.as_slice()[i]);
        let g = f64::from(gt.as_slice()[i]);
        num += d * g;
        den += d * d;
    }
    if den == 0.0 {
        return Err(Error::Degenerate("prediction is zero on the overlap"));
    }
    Ok(num / den)
}

/// Least-squares factor `s` minimising `sum (s * pred - gt)^2` over mutually
/// valid pixels. Multiply the prediction by `s` to align it.
pub fn align_scale(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let pixels = mutual_pixels(pred, gt)?;
    scale_over(pred, gt, &pixels)
}

/// Scale-invariant RMSE: square root of the log-domain data term.
pub fn si_rmse(pred: &DepthMap, gt: &DepthMap) -> Result<f64> {
    let term = data_loss(&pred.to_log(), &gt.to_log())?;
    Ok(term.value.max(0.0).sqrt())
}

/// Three-way depth relation: `1` if `a / b > 1 + delta`, `-1` if
/// `a / b < 1 - delta`, `0` otherwise (band edges inclusive).
pub fn ord(a: f64, b: f64, delta: f64) -> i8 {
    let ratio = a / b;
    if ratio > 1.0 + delta {
        1
    } else if ratio < 1.0 - delta {
        -1
    } else {
        0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SdrReport {
    pub sdr: f64,
    pub sdr_eq: f64,
    pub sdr_neq: f64,
    pub n_pairs: usize,
    /// Evaluated pairs whose ground-truth relation is 0.
    pub n_eq: usize,
    pub n_neq: usize,
}

/// Splits linear pair index `k` into `(a, b)` with `a < b < m`, enumerating
/// pairs as (0,1), (0,2), ..., (0,m-1), (1,2), ...
fn pair_from_index(k: usize, m: usize) -> (usize, usize) {
    // number of pairs whose first element is below `a`
    let offset = |a: usize| a * (2 * m - a - 1) / 2;
    // invariant: offset(lo) <= k < offset(hi)
    let (mut lo, mut hi) = (0usize, m - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if offset(mid) <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, lo + 1 + (k - offset(lo)))
}

/// Ordinal disagreement rate between a prediction and sparse ground truth.
///
/// All unordered pairs of mutually valid pixels are compared, first element
/// earlier in row-major order. When there are more than `sdr_max_pairs`
/// pairs, a uniform sample without replacement drawn from the stream seeded
/// by `rng_seed` is used instead. Empty subsets report a rate of 0.
pub fn sdr(pred: &DepthMap, gt: &DepthMap, cfg: &MetricConfig) -> Result<SdrReport> {
    cfg.validate()?;
    let pixels = mutual_pixels(pred, gt)?;
    let m = pixels.len();
    if m < 2 {
        return Err(Error::Empty("SDR needs at least two mutually valid pixels"));
    }
    let total = m * (m - 1) / 2;
    let mut eq = (0usize, 0usize);
    let mut neq = (0usize, 0usize);
    let mut tally = |a: usize, b: usize| {
        let (i, j) = (pixels[a], pixels[b]);
        let p = ord(
            f64::from(pred.as_slice()[i]),
            f64::from(pred.as_slice()[j]),
            cfg.delta,
        );
        let g = ord(
            f64::from(gt.as_slice()[i]),
            f64::from(gt.as_slice()[j]),
            cfg.delta,
        );
        let bucket = if g == 0 { &mut eq } else { &mut neq };
        bucket.0 += 1;
        if p != g {
            bucket.1 += 1;
        }
    };
    if total <= cfg.sdr_max_pairs {
        for a in 0..m {
            for b in a + 1..m {
                tally(a, b);
            }
        }
    } else {
        let mut rng = rng::stream(cfg.rng_seed, "sdr");
        let mut picks = index::sample(&mut rng, total, cfg.sdr_max_pairs).into_vec();
        picks.sort_unstable();
        for k in picks {
            let (a, b) = pair_from_index(k, m);
            tally(a, b);
        }
    }
    let rate = |(n, bad): (usize, usize)| if n == 0 { 0.0 } else { bad as f64 / n as f64 };
    let n_pairs = eq.0 + neq.0;
    Ok(SdrReport {
        sdr: rate((n_pairs, eq.1 + neq.1)),
        sdr_eq: rate(eq),
        sdr_neq: rate(neq),
        n_pairs,
        n_eq: eq.0,
        n_neq: neq.0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhdrReport {
    pub whdr: f64,
    pub n_pairs: usize,
    pub skipped_pairs: usize,
}

/// Weighted fraction of labelled pairs whose predicted relation (with
/// tolerance `whdr_delta`) differs from the label. With unit weights this is
/// the plain disagreement frequency. Pairs touching an invalid prediction
/// are skipped.
pub fn whdr(pred: &DepthMap, pairs: &[OrdinalPair], cfg: &MetricConfig) -> Result<WhdrReport> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("no labelled pairs"));
    }
    let (w, h) = pred.shape();
    let (mut weight, mut wrong) = (0.0f64, 0.0f64);
    let (mut used, mut skipped) = (0usize, 0usize);
    for pair in pairs {
        pair.check_bounds(w, h)?;
        let (i, j) = pair.indices(w);
        let (Some(di), Some(dj)) = (pred.get(i), pred.get(j)) else {
            skipped += 1;
            continue;
        };
        used += 1;
        weight += pair.weight;
        if ord(f64::from(di), f64::from(dj), cfg.whdr_delta) != pair.relation.sign() {
            wrong += pair.weight;
        }
    }
    if used == 0 {
        return Err(Error::Empty("every labelled pair touches an invalid pixel"));
    }
    if weight <= 0.0 {
        return Err(Error::Degenerate("labelled pairs carry zero total weight"));
    }
    Ok(WhdrReport {
        whdr: wrong / weight,
        n_pairs: used,
        skipped_pairs: skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StandardMetrics {
    pub rms: f64,
    pub rms_log: f64,
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub log10: f64,
    pub n_pixels: usize,
    /// Factor applied to the prediction (1 without alignment).
    pub scale: f64,
}

/// RMS, RMS(log), Abs Rel, Sq Rel and log10 error over mutually valid pixels
/// that survive the depth cap, after optional least-squares alignment.
pub fn standard_metrics(pred: &DepthMap, gt: &DepthMap, cfg: &MetricConfig) -> Result<StandardMetrics> {
    cfg.validate()?;
    let mut pixels = mutual_pixels(pred, gt)?;
    if let Some(cap) = cfg.depth_cap {
        pixels.retain(|&i| f64::from(gt.as_slice()[i]) <= cap);
    }
    if pixels.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    let scale = if cfg.align_scale {
        scale_over(pred, gt, &pixels)?
    } else {
        1.0
    };
    let (mut sq, mut sq_log, mut abs_rel, mut sq_rel, mut l10) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &i in &pixels {
        let d = scale * f64::from(pred.as_slice()[i]);
        let g = f64::from(gt.as_slice()[i]);
        let diff = d - g;
        sq += diff * diff;
        sq_log += (d.ln() - g.ln()).powi(2);
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        l10 += (d.log10() - g.log10()).abs();
    }
    let n = pixels.len() as f64;
    Ok(StandardMetrics {
        rms: (sq / n).sqrt(),
        rms_log: (sq_log / n).sqrt(),
        abs_rel: abs_rel / n,
        sq_rel: sq_rel / n,
        log10: l10 / n,
        n_pixels: pixels.len(),
        scale,
    })
}

/// Every metric the inputs support. Entries are `None` when the inputs lack
/// the data they need.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub si_rmse: Option<f64>,
    pub sdr: Option<f64>,
    pub sdr_eq: Option<f64>,
    pub sdr_neq: Option<f64>,
    pub whdr: Option<f64>,
    pub rms: Option<f64>,
    pub rms_log: Option<f64>,
    pub abs_rel: Option<f64>,
    pub sq_rel: Option<f64>,
    pub log10: Option<f64>,
    /// SDR pairs evaluated.
    pub n_pairs: usize,
    pub n_eq_pairs: usize,
    pub n_neq_pairs: usize,
    pub n_whdr_pairs: usize,
    /// Pixels entering the standard metrics.
    pub n_pixels: usize,
    pub scale: f64,
}

fn optional<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyOverlap | Error::Empty(_) | Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn evaluate(
    pred: &DepthMap,
    gt: &DepthMap,
    pairs: Option<&[OrdinalPair]>,
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    check_shape(gt.shape(), pred.shape())?;
    let mut report = MetricReport {
        scale: 1.0,
        si_rmse: optional(si_rmse(pred, gt))?,
        ..MetricReport::default()
    };
    if let Some(s) = optional(sdr(pred, gt, cfg))? {
        report.sdr = Some(s.sdr);
        report.sdr_eq = Some(s.sdr_eq);
        report.sdr_neq = Some(s.sdr_neq);
        report.n_pairs = s.n_pairs;
        report.n_eq_pairs = s.n_eq;
        report.n_neq_pairs = s.n_neq;
    }
    if let Some(pairs) = pairs {
        if let Some(w) = optional(whdr(pred, pairs, cfg))? {
            report.whdr = Some(w.whdr);
            report.n_whdr_pairs = w.n_pairs;
        }
    }
    if let Some(m) = optional(standard_metrics(pred, gt, cfg))? {
        report.rms = Some(m.rms);
        report.rms_log = Some(m.rms_log);
        report.abs_rel = Some(m.abs_rel);
        report.sq_rel = Some(m.sq_rel);
        report.log10 = Some(m.log10);
        report.n_pixels = m.n_pixels;
        report.scale = m.scale;
    }
    Ok(report)
}
