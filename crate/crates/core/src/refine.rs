//! Cleaning of raw multi-view-stereo depth maps.
//!
//! The pipeline fuses per-iteration depth maps by keeping the closer value,
//! drops depths that disagree with their local median, discards foreground
//! objects that are mostly unreconstructed, and clears the sky.

use serde::{Deserialize, Serialize};

use crate::components::components4;
use crate::depth::DepthMap;
use crate::error::{check_shape, Error, Result};
use crate::semantic::{Category, SemanticCategoryMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Side of the square median window; odd, at least 3.
    pub median_kernel: usize,
    /// A pixel is unstable when `|d - median| / median` exceeds this.
    pub instability_rel_tol: f64,
    /// Foreground components with a smaller valid fraction lose all depths.
    pub fg_valid_threshold: f64,
    /// The median test is skipped with fewer valid neighbours than this.
    pub min_valid_neighbors: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            median_kernel: 5,
            instability_rel_tol: 0.25,
            fg_valid_threshold: 0.5,
            min_valid_neighbors: 3,
        }
    }
}

impl RefineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_kernel < 3 || self.median_kernel % 2 == 0 {
            return Err(Error::Config(format!(
                "median_kernel must be odd and >= 3, got {}",
                self.median_kernel
            )));
        }
        for (name, v) in [
            ("instability_rel_tol", self.instability_rel_tol),
            ("fg_valid_threshold", self.fg_valid_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if self.min_valid_neighbors == 0 {
            return Err(Error::Config("min_valid_neighbors must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-pixel minimum over all iterations; a pixel is valid if any
/// iteration has a depth for it.
pub fn keep_closer_fuse(iterations: &[DepthMap]) -> Result<DepthMap> {
    let (first, rest) = iterations
        .split_first()
        .ok_or(Error::Empty("no depth-map iterations to fuse"))?;
    let mut fused = first.as_slice().to_vec();
    for map in rest {
        check_shape(first.shape(), map.shape())?;
        for (acc, &v) in fused.iter_mut().zip(map.as_slice()) {
            if v.is_nan() {
                continue;
            }
            if acc.is_nan() || v < *acc {
                *acc = v;
            }
        }
    }
    DepthMap::new(first.width(), first.height(), fused)
}

/// Lower median: element `(k - 1) / 2` of the sorted values.
fn lower_median(values: &mut [f32]) -> f32 {
    let k = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(k, f32::total_cmp).1
}

/// Invalidates pixels whose depth deviates from the median of their valid
/// neighbours by more than `instability_rel_tol` (relative to the median).
/// Surviving depths are never altered.
pub fn median_stabilize(map: &DepthMap, cfg: &RefineConfig) -> Result<DepthMap> {
    cfg.validate()?;
    let (w, h) = map.shape();
    let r = cfg.median_kernel / 2;
    let mut out = map.clone();
    let mut window = Vec::with_capacity(cfg.median_kernel * cfg.median_kernel);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let Some(d) = map.get(i) else { continue };
            window.clear();
            for ny in y.saturating_sub(r)..=(y + r).min(h - 1) {
                for nx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                    if (nx, ny) == (x, y) {
                        continue;
                    }
                    if let Some(v) = map.at(nx, ny) {
                        window.push(v);
                    }
                }
            }
            if window.len() < cfg.min_valid_neighbors {
                continue;
            }
            let med = f64::from(lower_median(&mut window));
            if (f64::from(d) - med).abs() / med > cfg.instability_rel_tol {
                out.invalidate(i);
            }
        }
    }
    Ok(out)
}

/// Drops every depth inside 4-connected foreground components whose valid
/// fraction is below `fg_valid_threshold`.
pub fn semantic_filter(
    map: &DepthMap,
    mask: &SemanticCategoryMask,
    cfg: &RefineConfig,
) -> Result<DepthMap> {
    check_shape(map.shape(), mask.shape())?;
    cfg.validate()?;
    let mut out = map.clone();
    let comps = components4(map.width(), map.height(), |i| {
        mask.get(i) == Category::Foreground
    });
    for comp in comps {
        let valid = comp.iter().filter(|&&i| map.is_valid(i)).count();
        if (valid as f64) / (comp.len() as f64) < cfg.fg_valid_threshold {
            for &i in &comp {
                out.invalidate(i);
            }
        }
    }
    Ok(out)
}

/// Invalidates every pixel labelled sky.
pub fn remove_sky(map: &DepthMap, mask: &SemanticCategoryMask) -> Result<DepthMap> {
    check_shape(map.shape(), mask.shape())?;
    let mut out = map.clone();
    for (i, &c) in mask.as_slice().iter().enumerate() {
        if c == Category::Sky {
            out.invalidate(i);
        }
    }
    Ok(out)
}

/// Fusion, median stabilization, semantic filtering, then sky removal.
pub fn refine_pipeline(
    iterations: &[DepthMap],
    mask: &SemanticCategoryMask,
    cfg: &RefineConfig,
) -> Result<DepthMap> {
    cfg.validate()?;
    let fused = keep_closer_fuse(iterations)?;
    check_shape(fused.shape(), mask.shape())?;
    let stable = median_stabilize(&fused, cfg)?;
    let filtered = semantic_filter(&stable, mask, cfg)?;
    remove_sky(&filtered, mask)
}
