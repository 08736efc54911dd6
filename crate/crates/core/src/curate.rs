//! Sorting refined images into Euclidean and ordinal training data, and
//! automatic ordinal labelling of foreground/background pixel pairs.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::components::components4;
use crate::depth::DepthMap;
use crate::error::{check_shape, Error, Result};
use crate::manifest::Verdict;
use crate::ordinal::{OrdinalPair, Relation};
use crate::rng;
use crate::semantic::{valid_fraction, Category, SemanticCategoryMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateConfig {
    /// Images at or above this non-sky valid fraction are Euclidean.
    pub euclidean_threshold: f64,
    /// Minimum component area, as a fraction of the image, to count as large.
    pub min_component_fraction: f64,
    /// Background components need a depth at or beyond this fraction of the
    /// image's depth range.
    pub quartile_fraction: f64,
    pub pairs_per_image: usize,
    pub rng_seed_base: u64,
}

impl Default for CurateConfig {
    fn default() -> Self {
        Self {
            euclidean_threshold: 0.3,
            min_component_fraction: 0.05,
            quartile_fraction: 0.75,
            pairs_per_image: 16,
            rng_seed_base: 0,
        }
    }
}

impl CurateConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("euclidean_threshold", self.euclidean_threshold),
            ("min_component_fraction", self.min_component_fraction),
            ("quartile_fraction", self.quartile_fraction),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must be in (0, 1), got {v}")));
            }
        }
        if self.pairs_per_image == 0 {
            return Err(Error::Config("pairs_per_image must be >= 1".into()));
        }
        Ok(())
    }
}

/// Euclidean when at least `euclidean_threshold` of the non-sky pixels hold
/// a valid depth, ordinal otherwise.
pub fn classify_image(
    map: &DepthMap,
    mask: &SemanticCategoryMask,
    cfg: &CurateConfig,
) -> Result<Verdict> {
    let fraction = valid_fraction(map, mask)?;
    Ok(if fraction >= cfg.euclidean_threshold {
        Verdict::Euclidean
    } else {
        Verdict::Ordinal
    })
}

/// Pixels likely closer to the camera (`f_ord`) and pixels likely further
/// away (`b_ord`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrdinalRegions {
    pub width: usize,
    pub height: usize,
    pub f_ord: Vec<bool>,
    pub b_ord: Vec<bool>,
}

impl OrdinalRegions {
    pub fn f_count(&self) -> usize {
        self.f_ord.iter().filter(|&&b| b).count()
    }

    pub fn b_count(&self) -> usize {
        self.b_ord.iter().filter(|&&b| b).count()
    }
}

/// Large foreground components form `f_ord`; large background components
/// that reach into the last part of the depth range form `b_ord`.
pub fn extract_ordinal_regions(
    map: &DepthMap,
    mask: &SemanticCategoryMask,
    cfg: &CurateConfig,
) -> Result<OrdinalRegions> {
    check_shape(map.shape(), mask.shape())?;
    cfg.validate()?;
    let (w, h) = map.shape();
    let floor = cfg.min_component_fraction * (w * h) as f64;
    let mut f_ord = vec![false; w * h];
    let mut b_ord = vec![false; w * h];

    for comp in components4(w, h, |i| mask.get(i) == Category::Foreground) {
        if comp.len() as f64 >= floor {
            for &i in &comp {
                f_ord[i] = true;
            }
        }
    }

    if let Some((d_min, d_max)) = map.valid_range() {
        let (d_min, d_max) = (f64::from(d_min), f64::from(d_max));
        let cutoff = d_min + cfg.quartile_fraction * (d_max - d_min);
        for comp in components4(w, h, |i| mask.get(i) == Category::Background) {
            if (comp.len() as f64) < floor {
                continue;
            }
            let reaches_far = comp
                .iter()
                .any(|&i| map.get(i).is_some_and(|d| f64::from(d) >= cutoff));
            if reaches_far {
                for &i in &comp {
                    b_ord[i] = true;
                }
            }
        }
    }

    Ok(OrdinalRegions {
        width: w,
        height: h,
        f_ord,
        b_ord,
    })
}

/// Draws `pairs_per_image` pairs with pixel i uniform over `b_ord` and pixel
/// j uniform over `f_ord`, labelled i-further-than-j. The stream is keyed by
/// `(rng_seed_base, image_id)`. Returns nothing if either region is empty.
pub fn sample_ordinal_pairs(
    regions: &OrdinalRegions,
    image_id: &str,
    cfg: &CurateConfig,
) -> Result<Vec<OrdinalPair>> {
    cfg.validate()?;
    let members = |set: &[bool]| -> Vec<usize> {
        set.iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    };
    let far = members(&regions.b_ord);
    let near = members(&regions.f_ord);
    if far.is_empty() || near.is_empty() {
        return Ok(Vec::new());
    }
    let w = regions.width;
    let mut rng = rng::stream(cfg.rng_seed_base, image_id);
    let mut pairs = Vec::with_capacity(cfg.pairs_per_image);
    for _ in 0..cfg.pairs_per_image {
        let i = far[rng.random_range(0..far.len())];
        let j = near[rng.random_range(0..near.len())];
        pairs.push(OrdinalPair::new(
            (i % w, i / w),
            (j % w, j / w),
            Relation::Further,
        )?);
    }
    Ok(pairs)
}
