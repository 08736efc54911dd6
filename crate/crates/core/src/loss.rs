//! Scale-invariant training losses on log-depth maps, with analytic
//! gradients with respect to the predicted log depth.
//!
//! The total loss is `data + alpha * grad + beta * ord`:
//!
//! * `data`: variance of the log residual `R = pred - gt` over mutually valid
//!   pixels, equal to the mean squared difference over all residual pairs.
//! * `grad`: l1 norm of horizontal and vertical forward differences of `R`,
//!   summed over a pyramid of average-pooled residual maps and divided by
//!   the full-resolution valid count.
//! * `ord`: robust logistic loss on ordinal pairs, which switches to
//!   square-root growth beyond the knee `tau`.
//!
//! All reductions run in row-major (or list) order so results are
//! bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::depth::LogDepthMap;
use crate::error::{check_shape, Error, Result};
use crate::ordinal::OrdinalPair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the multi-scale gradient term.
    pub alpha: f64,
    /// Weight of the ordinal term.
    pub beta: f64,
    /// Knee of the robust ordinal loss.
    pub tau: f64,
    /// Pyramid levels used by the gradient term.
    pub num_scales: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.1,
            tau: 0.25,
            num_scales: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.num_scales == 0 {
            return Err(Error::Config("num_scales must be >= 1".into()));
        }
        Ok(())
    }
}

/// A scalar loss term and its gradient over the full pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Ordinal term plus the number of pairs skipped for touching an invalid
/// pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct OrdTerm {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub used_pairs: usize,
    pub skipped_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub data_term: f64,
    pub grad_term: f64,
    pub ord_term: f64,
    pub total: f64,
    pub n_pixels: usize,
    pub n_pairs: usize,
    pub skipped_pairs: usize,
    /// Zero at pixels that receive no contribution.
    #[serde(skip)]
    pub grad_wrt_log_depth: Vec<f64>,
}

/// Residuals at mutually valid pixels; `None` elsewhere.
fn residuals(pred: &LogDepthMap, gt: &LogDepthMap) -> Result<(Vec<Option<f64>>, usize)> {
    check_shape(gt.shape(), pred.shape())?;
    let mut n = 0;
    let r = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .map(|(&p, &g)| {
            if p.is_nan() || g.is_nan() {
                None
            } else {
                n += 1;
                Some(p - g)
            }
        })
        .collect();
    if n == 0 {
        return Err(Error::EmptyOverlap);
    }
    Ok((r, n))
}

/// Scale-invariant data term: `(1/n) sum R^2 - (1/n^2) (sum R)^2`, evaluated
/// in the centred form `(1/n) sum (R - mean)^2`.
pub fn data_loss(pred: &LogDepthMap, gt: &LogDepthMap) -> Result<Term> {
    let (r, n) = residuals(pred, gt)?;
    let nf = n as f64;
    let mean = r.iter().flatten().sum::<f64>() / nf;
    let value = r.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let gradient = r
        .iter()
        .map(|v| v.map_or(0.0, |v| 2.0 * (v - mean) / nf))
        .collect();
    Ok(Term { value, gradient })
}

/// One pyramid level of the residual map.
struct Level {
    width: usize,
    height: usize,
    values: Vec<f64>,
    /// Number of valid children pooled into each pixel; 0 marks invalid.
    counts: Vec<u32>,
}

impl Level {
    fn valid(&self, i: usize) -> bool {
        self.counts[i] > 0
    }

    /// Factor-2 average over valid children; odd edges pool partial blocks.
    fn pool(&self) -> Level {
        let width = self.width.div_ceil(2);
        let height = self.height.div_ceil(2);
        let mut values = vec![0.0; width * height];
        let mut counts = vec![0u32; width * height];
        for y in 0..height {
            for x in 0..width {
                let p = y * width + x;
                let mut sum = 0.0;
                let mut count = 0u32;
                for cy in 2 * y..(2 * y + 2).min(self.height) {
                    for cx in 2 * x..(2 * x + 2).min(self.width) {
                        let c = cy * self.width + cx;
                        if self.valid(c) {
                            sum += self.values[c];
                            count += 1;
                        }
                    }
                }
                if count > 0 {
                    values[p] = sum / f64::from(count);
                    counts[p] = count;
                }
            }
        }
        Level {
            width,
            height,
            values,
            counts,
        }
    }

    /// Calls `f(a, b)` for every forward difference `R[b] - R[a]` between
    /// horizontally or vertically adjacent valid pixels.
    fn for_each_difference(&self, mut f: impl FnMut(usize, usize)) {
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                if !self.valid(i) {
                    continue;
                }
                if x + 1 < self.width && self.valid(i + 1) {
                    f(i, i + 1);
                }
                if y + 1 < self.height && self.valid(i + self.width) {
                    f(i, i + self.width);
                }
            }
        }
    }
}

fn residual_pyramid(
    pred: &LogDepthMap,
    gt: &LogDepthMap,
    num_scales: usize,
) -> Result<(Vec<Level>, usize)> {
    let (w, h) = pred.shape();
    if w < 2 && h < 2 {
        return Err(Error::TooSmall {
            width: w,
            height: h,
            reason: "gradient term needs at least two pixels along one axis",
        });
    }
    let (r, n) = residuals(pred, gt)?;
    let base = Level {
        width: w,
        height: h,
        values: r.iter().map(|v| v.unwrap_or(0.0)).collect(),
        counts: r.iter().map(|v| u32::from(v.is_some())).collect(),
    };
    let mut levels = vec![base];
    for _ in 1..num_scales {
        let next = levels.last().unwrap().pool();
        levels.push(next);
    }
    Ok((levels, n))
}

/// Multi-scale gradient-matching term with its (sub)gradient; the l1
/// subgradient at zero is taken as zero.
pub fn grad_loss(pred: &LogDepthMap, gt: &LogDepthMap, cfg: &LossConfig) -> Result<Term> {
    cfg.validate()?;
    let (levels, n) = residual_pyramid(pred, gt, cfg.num_scales)?;
    let nf = n as f64;

    let mut total = 0.0;
    let mut upstream: Vec<Vec<f64>> = Vec::with_capacity(levels.len());
    for level in &levels {
        let mut g = vec![0.0; level.values.len()];
        level.for_each_difference(|a, b| {
            let d = level.values[b] - level.values[a];
            total += d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            g[b] += s / nf;
            g[a] -= s / nf;
        });
        upstream.push(g);
    }

    // back through the pooling, coarse to fine
    for k in (1..levels.len()).rev() {
        let (fine_levels, coarse_levels) = upstream.split_at_mut(k);
        let fine_grad = &mut fine_levels[k - 1];
        let coarse_grad = &coarse_levels[0];
        let coarse = &levels[k];
        let fine = &levels[k - 1];
        for y in 0..coarse.height {
            for x in 0..coarse.width {
                let p = y * coarse.width + x;
                if !coarse.valid(p) || coarse_grad[p] == 0.0 {
                    continue;
                }
                let share = coarse_grad[p] / f64::from(coarse.counts[p]);
                for cy in 2 * y..(2 * y + 2).min(fine.height) {
                    for cx in 2 * x..(2 * x + 2).min(fine.width) {
                        let c = cy * fine.width + cx;
                        if fine.valid(c) {
                            fine_grad[c] += share;
                        }
                    }
                }
            }
        }
    }

    let gradient = upstream.swap_remove(0);
    Ok(Term {
        value: total / nf,
        gradient,
    })
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Offset that joins the two ordinal branches at `p = tau`.
pub fn knee_offset(tau: f64) -> f64 {
    softplus(tau) - softplus(tau.sqrt())
}

/// Robust ordinal penalty for `p = -r (L_i - L_j)`.
pub fn ord_penalty(p: f64, tau: f64) -> f64 {
    if p <= tau {
        softplus(p)
    } else {
        softplus(p.sqrt()) + knee_offset(tau)
    }
}

/// Derivative of [`ord_penalty`] with respect to `p`.
pub fn ord_penalty_slope(p: f64, tau: f64) -> f64 {
    if p <= tau {
        sigmoid(p)
    } else {
        let s = p.sqrt();
        sigmoid(s) / (2.0 * s)
    }
}

/// Mean robust ordinal loss over pairs whose endpoints are both valid in
/// `pred`. Pairs touching an invalid pixel are skipped and tallied.
pub fn ord_loss(pred: &LogDepthMap, pairs: &[OrdinalPair], cfg: &LossConfig) -> Result<OrdTerm> {
    cfg.validate()?;
    let (w, h) = pred.shape();
    let mut gradient = vec![0.0; pred.len()];
    let mut value = 0.0;
    let (mut used, mut skipped) = (0usize, 0usize);
    for pair in pairs {
        pair.check_bounds(w, h)?;
        let (i, j) = pair.indices(w);
        let (Some(li), Some(lj)) = (pred.get(i), pred.get(j)) else {
            skipped += 1;
            continue;
        };
        let r = f64::from(pair.relation.sign());
        let p = -r * (li - lj);
        value += ord_penalty(p, cfg.tau);
        let slope = ord_penalty_slope(p, cfg.tau);
        gradient[i] -= slope * r;
        gradient[j] += slope * r;
        used += 1;
    }
    if used > 0 {
        let m = used as f64;
        value /= m;
        for g in &mut gradient {
            *g /= m;
        }
    }
    Ok(OrdTerm {
        value,
        gradient,
        used_pairs: used,
        skipped_pairs: skipped,
    })
}

/// `data + alpha * grad + beta * ord`, with the matching gradient. Terms
/// with zero weight are still evaluated and reported.
pub fn total_loss(
    pred: &LogDepthMap,
    gt: &LogDepthMap,
    pairs: &[OrdinalPair],
    cfg: &LossConfig,
) -> Result<LossReport> {
    cfg.validate()?;
    let data = data_loss(pred, gt)?;
    let grad = grad_loss(pred, gt, cfg)?;
    let ord = ord_loss(pred, pairs, cfg)?;
    let total = data.value + cfg.alpha * grad.value + cfg.beta * ord.value;
    let gradient = data
        .gradient
        .iter()
        .zip(&grad.gradient)
        .zip(&ord.gradient)
        .map(|((d, g), o)| d + cfg.alpha * g + cfg.beta * o)
        .collect();
    let n_pixels = pred
        .as_slice()
        .iter()
        .zip(gt.as_slice())
        .filter(|(p, g)| !p.is_nan() && !g.is_nan())
        .count();
    Ok(LossReport {
        data_term: data.value,
        grad_term: grad.value,
        ord_term: ord.value,
        total,
        n_pixels,
        n_pairs: ord.used_pairs,
        skipped_pairs: ord.skipped_pairs,
        grad_wrt_log_depth: gradient,
    })
}

/// Distance of the configuration from the nearest non-smooth point of the
/// total loss: the smallest absolute pyramid difference and the smallest
/// `|p - tau|` over usable pairs. Infinite when there is none.
pub fn kink_margin(
    pred: &LogDepthMap,
    gt: &LogDepthMap,
    pairs: &[OrdinalPair],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (levels, _) = residual_pyramid(pred, gt, cfg.num_scales)?;
    let mut margin = f64::INFINITY;
    for level in &levels {
        level.for_each_difference(|a, b| {
            margin = margin.min((level.values[b] - level.values[a]).abs());
        });
    }
    let w = pred.width();
    for pair in pairs {
        pair.check_bounds(w, pred.height())?;
        let (i, j) = pair.indices(w);
        if let (Some(li), Some(lj)) = (pred.get(i), pred.get(j)) {
            let p = -f64::from(pair.relation.sign()) * (li - lj);
            margin = margin.min((p - cfg.tau).abs());
        }
    }
    Ok(margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordinal::Relation;

    fn log_map(w: usize, h: usize, v: &[f64]) -> LogDepthMap {
        LogDepthMap::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn data_loss_zero_when_equal() {
        let gt = log_map(3, 2, &[0.1, 0.2, 0.3, 0.4, 0.5, f64::NAN]);
        let t = data_loss(&gt, &gt).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn data_loss_shift_is_zero() {
        let gt = log_map(3, 1, &[0.1, -2.0, 0.7]);
        let t = data_loss(&gt.shifted(1.75), &gt).unwrap();
        assert!(t.value.abs() < 1e-15);
    }

    #[test]
    fn data_loss_two_pixels() {
        // pairwise oracle: (0 + 1 + 1 + 0) / (2 * 2^2) = 0.25
        let gt = log_map(2, 1, &[0.0, 0.0]);
        let pred = log_map(2, 1, &[0.0, 1.0]);
        let t = data_loss(&pred, &gt).unwrap();
        assert!((t.value - 0.25).abs() < 1e-15);
        // (2/n) (R_i - mean)
        assert_eq!(t.gradient, vec![-0.5, 0.5]);
    }

    #[test]
    fn data_loss_empty_overlap() {
        let a = log_map(2, 1, &[0.0, f64::NAN]);
        let b = log_map(2, 1, &[f64::NAN, 0.0]);
        assert!(matches!(data_loss(&a, &b), Err(Error::EmptyOverlap)));
    }

    #[test]
    fn grad_loss_two_by_one() {
        let gt = log_map(2, 1, &[0.0, 0.0]);
        let pred = log_map(2, 1, &[0.0, 1.0]);
        let cfg = LossConfig {
            num_scales: 1,
            ..LossConfig::default()
        };
        let t = grad_loss(&pred, &gt, &cfg).unwrap();
        assert_eq!(t.value, 0.5);
        assert_eq!(t.gradient, vec![-0.5, 0.5]);
    }

    #[test]
    fn grad_loss_single_pixel_is_too_small() {
        let m = log_map(1, 1, &[0.0]);
        assert!(matches!(
            grad_loss(&m, &m, &LossConfig::default()),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn grad_loss_skips_invalid_neighbours() {
        // the middle pixel is invalid, so no adjacent valid pair exists
        let gt = log_map(3, 1, &[0.0, f64::NAN, 0.0]);
        let pred = log_map(3, 1, &[0.0, 0.0, 5.0]);
        let cfg = LossConfig {
            num_scales: 1,
            ..LossConfig::default()
        };
        assert_eq!(grad_loss(&pred, &gt, &cfg).unwrap().value, 0.0);
    }

    #[test]
    fn pooled_level_values() {
        // 3x2 residual: pooled to 2x1 with partial block on the right
        let gt = log_map(3, 2, &[0.0; 6]);
        let pred = log_map(3, 2, &[1.0, 3.0, 10.0, 5.0, f64::NAN, 20.0]);
        let (levels, n) = residual_pyramid(&pred, &gt, 2).unwrap();
        assert_eq!(n, 5);
        assert_eq!(levels[1].values, vec![3.0, 15.0]);
        assert_eq!(levels[1].counts, vec![3, 2]);
    }

    #[test]
    fn penalty_values() {
        assert!((ord_penalty(0.0, 0.25) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(ord_penalty(-20.0, 0.25) < 1e-8);
        // frozen from a 30-digit evaluation
        assert!((knee_offset(0.25) - (-0.148_137_564_301_263_1)).abs() < 1e-15);
        assert!((ord_penalty(0.25, 0.25) - 0.825_939_419_878_843_6).abs() < 1e-15);
        assert!((ord_penalty(1.0, 0.25) - 1.165_124_123_216_959_7).abs() < 1e-14);
        assert!((ord_penalty(4.0, 0.25) - 1.978_790_446_741_709_4).abs() < 1e-14);
    }

    #[test]
    fn softplus_does_not_overflow() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
    }

    #[test]
    fn ord_loss_saturates_for_correct_order() {
        let pred = log_map(2, 1, &[20.0, 0.0]);
        let pair = OrdinalPair::new((0, 0), (1, 0), Relation::Further).unwrap();
        let t = ord_loss(&pred, &[pair], &LossConfig::default()).unwrap();
        assert!(t.value < 1e-8);
    }

    #[test]
    fn ord_loss_empty_and_skipped() {
        let pred = log_map(3, 1, &[0.0, f64::NAN, 1.0]);
        let cfg = LossConfig::default();
        let t = ord_loss(&pred, &[], &cfg).unwrap();
        assert_eq!(t.value, 0.0);
        assert!(t.gradient.iter().all(|&g| g == 0.0));

        let bad = OrdinalPair::new((0, 0), (1, 0), Relation::Closer).unwrap();
        let good = OrdinalPair::new((0, 0), (2, 0), Relation::Closer).unwrap();
        let t = ord_loss(&pred, &[bad, good], &cfg).unwrap();
        assert_eq!((t.used_pairs, t.skipped_pairs), (1, 1));
        // r = -1, L_i - L_j = -1 -> p = -1
        assert!((t.value - softplus(-1.0)).abs() < 1e-15);

        let outside = OrdinalPair::new((0, 0), (3, 0), Relation::Closer).unwrap();
        assert!(matches!(
            ord_loss(&pred, &[outside], &cfg),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn total_weights() {
        let gt = log_map(2, 2, &[0.0, 0.3, -0.2, 0.9]);
        let pred = log_map(2, 2, &[0.5, 0.1, 0.4, 0.2]);
        let pairs = [OrdinalPair::new((0, 0), (1, 1), Relation::Further).unwrap()];
        let zero = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            ..LossConfig::default()
        };
        let r = total_loss(&pred, &gt, &pairs, &zero).unwrap();
        assert_eq!(r.total, r.data_term);
        let r = total_loss(&gt, &gt, &[], &LossConfig::default()).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        for bad in [
            LossConfig {
                alpha: -1.0,
                ..LossConfig::default()
            },
            LossConfig {
                tau: 0.0,
                ..LossConfig::default()
            },
            LossConfig {
                num_scales: 0,
                ..LossConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
