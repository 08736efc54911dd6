//! Synthetic scenes with exact ground truth, and the noise processes that
//! turn them into raw multi-view-stereo iteration stacks.
//!
//! Scenes are painted back to front from rectangles and discs with constant
//! or planar depth. The noise model covers background bleeding at
//! foreground boundaries, transient objects with sparse spurious depths,
//! and multiplicative speckle outliers.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::components::components4;
use crate::depth::DepthMap;
use crate::error::{check_shape, Error, Result};
use crate::ordinal::OrdinalPair;
use crate::rng;
use crate::semantic::{Category, SemanticCategoryMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Shape {
    /// Pixels with `x0 <= x < x1` and `y0 <= y < y1`.
    Rect {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
    },
    /// Pixels whose centre lies within `radius` of `(cx, cy)`.
    Disc { cx: f64, cy: f64, radius: f64 },
}

impl Shape {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, radius } => {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                dx * dx + dy * dy <= radius * radius
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DepthProfile {
    Constant { value: f64 },
    /// `a + b * x + c * y`.
    Ramp { a: f64, b: f64, c: f64 },
}

impl DepthProfile {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        match *self {
            DepthProfile::Constant { value } => value,
            DepthProfile::Ramp { a, b, c } => a + b * x as f64 + c * y as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub shape: Shape,
    /// Foreground or background.
    pub category: Category,
    pub depth: DepthProfile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Painted in order; later layers occlude earlier ones.
    pub layers: Vec<Layer>,
    /// Number of top rows that are sky.
    #[serde(default)]
    pub sky_band: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Width of the foreground boundary band overwritten by the depth of the
    /// surrounding scene in every iteration after the first.
    pub bleed_width: usize,
    /// Foreground component (in row-major discovery order) treated as a
    /// transient object. `None` disables transient noise.
    pub transient_component: Option<usize>,
    /// Fraction of the transient component that receives spurious depths;
    /// the rest of it is unreconstructed.
    pub transient_valid_fraction: f64,
    /// Per-pixel probability of a multiplicative U(2, 10) outlier.
    pub speckle_rate: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transient_valid_fraction", self.transient_valid_fraction),
            ("speckle_rate", self.speckle_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("scene must be at least 1x1".into()));
        }
        if self.sky_band > self.height {
            return Err(Error::Config(format!(
                "sky_band {} exceeds height {}",
                self.sky_band, self.height
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if !matches!(layer.category, Category::Foreground | Category::Background) {
                return Err(Error::Config(format!(
                    "layer {k}: category must be foreground or background, got {}",
                    layer.category
                )));
            }
            if let Shape::Disc { radius, .. } = layer.shape {
                if !(radius >= 0.0 && radius.is_finite()) {
                    return Err(Error::Config(format!("layer {k}: bad radius {radius}")));
                }
            }
        }
        Ok(())
    }
}

/// Paints the scene. Pixels covered by no layer are unknown with no depth;
/// sky rows have no depth.
pub fn render(spec: &SceneSpec) -> Result<(DepthMap, SemanticCategoryMask)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut depth = vec![f32::NAN; w * h];
    let mut codes = vec![Category::Unknown; w * h];
    for (k, layer) in spec.layers.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if !layer.shape.contains(x, y) {
                    continue;
                }
                let d = layer.depth.at(x, y);
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::Config(format!(
                        "layer {k}: depth {d} at ({x}, {y}) is not positive"
                    )));
                }
                depth[y * w + x] = d as f32;
                codes[y * w + x] = layer.category;
            }
        }
    }
    for i in 0..spec.sky_band * w {
        depth[i] = f32::NAN;
        codes[i] = Category::Sky;
    }
    Ok((
        DepthMap::new(w, h, depth)?,
        SemanticCategoryMask::new(w, h, codes)?,
    ))
}

const NEIGHBOURS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Multi-source breadth-first search over 8-connected pixels. Returns, per
/// pixel, the Chebyshev distance to the nearest source and that source.
fn nearest_source(w: usize, h: usize, is_source: impl Fn(usize) -> bool) -> Vec<Option<(usize, usize)>> {
    let mut out: Vec<Option<(usize, usize)>> = vec![None; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        if is_source(i) {
            out[i] = Some((0, i));
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (dist, src) = out[i].unwrap();
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for (dx, dy) in NEIGHBOURS8 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if out[j].is_none() {
                out[j] = Some((dist + 1, src));
                queue.push_back(j);
            }
        }
    }
    out
}

/// Foreground pixels within Chebyshev distance `width` of a non-foreground
/// pixel, each paired with the depth of the nearest valid non-foreground
/// pixel. Pixels with no such depth anywhere are left out.
pub fn bleed_band(
    clean: &DepthMap,
    mask: &SemanticCategoryMask,
    width: usize,
) -> Result<Vec<(usize, f32)>> {
    check_shape(clean.shape(), mask.shape())?;
    if width == 0 {
        return Ok(Vec::new());
    }
    let (w, h) = clean.shape();
    let is_fg = |i: usize| mask.get(i) == Category::Foreground;
    let boundary = nearest_source(w, h, |i| !is_fg(i));
    let behind = nearest_source(w, h, |i| !is_fg(i) && clean.is_valid(i));
    let mut band = Vec::new();
    for i in 0..w * h {
        if !is_fg(i) || !clean.is_valid(i) {
            continue;
        }
        let Some((dist, _)) = boundary[i] else { continue };
        if dist > width {
            continue;
        }
        if let Some((_, src)) = behind[i] {
            band.push((i, clean.as_slice()[src]));
        }
    }
    Ok(band)
}

/// Produces `noise.iterations` raw depth maps from a clean one.
///
/// The first iteration keeps true depths at the foreground boundary; every
/// later iteration has the bleed band overwritten, so the closer value is
/// always available to fusion. Transient corruption is identical across
/// iterations; speckle is drawn independently per iteration.
pub fn corrupt(
    clean: &DepthMap,
    mask: &SemanticCategoryMask,
    noise: &NoiseSpec,
) -> Result<Vec<DepthMap>> {
    check_shape(clean.shape(), mask.shape())?;
    noise.validate()?;
    let (w, h) = clean.shape();
    let band = bleed_band(clean, mask, noise.bleed_width)?;

    // transient pixels: (index, Some(spurious depth) or None for no depth)
    let mut transient: Vec<(usize, Option<f32>)> = Vec::new();
    if let Some(k) = noise.transient_component {
        let comps = components4(w, h, |i| mask.get(i) == Category::Foreground);
        if let Some(comp) = comps.get(k) {
            let (lo, hi) = clean.valid_range().unwrap_or((1.0, 2.0));
            let keep = (noise.transient_valid_fraction * comp.len() as f64).round() as usize;
            let mut rng = rng::stream(noise.seed, "transient");
            let mut chosen = index::sample(&mut rng, comp.len(), keep.min(comp.len())).into_vec();
            chosen.sort_unstable();
            let mut spurious = vec![None; comp.len()];
            for c in chosen {
                let d = if hi > lo { rng.random_range(lo..=hi) } else { lo };
                spurious[c] = Some(d);
            }
            transient = comp.iter().copied().zip(spurious).collect();
        }
    }

    let mut out = Vec::with_capacity(noise.iterations);
    for t in 0..noise.iterations {
        let mut data = clean.as_slice().to_vec();
        if t > 0 {
            for &(i, d) in &band {
                data[i] = d;
            }
        }
        for &(i, d) in &transient {
            data[i] = d.unwrap_or(f32::NAN);
        }
        if noise.speckle_rate > 0.0 {
            let mut rng = rng::stream(noise.seed, &format!("speckle/{t}"));
            for v in data.iter_mut().filter(|v| !v.is_nan()) {
                if rng.random::<f64>() < noise.speckle_rate {
                    *v *= rng.random_range(2.0f32..10.0);
                }
            }
        }
        out.push(DepthMap::new(w, h, data)?);
    }
    Ok(out)
}

/// Exact ordering of the clean depths at a pair: `1` if pixel i is further,
/// `-1` if closer, `0` if equal.
pub fn true_ordinal(clean: &DepthMap, pair: &OrdinalPair) -> Result<i8> {
    pair.check_bounds(clean.width(), clean.height())?;
    let depth = |(x, y): (usize, usize)| clean.at(x, y).ok_or(Error::InvalidPixel { x, y });
    let di = depth(pair.pixel_i)?;
    let dj = depth(pair.pixel_j)?;
    Ok(match di.partial_cmp(&dj) {
        Some(std::cmp::Ordering::Greater) => 1,
        Some(std::cmp::Ordering::Less) => -1,
        _ => 0,
    })
}

/// A scene together with the noise that goes with it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthFixture {
    pub scene: SceneSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Bleed,
    Transient,
    Speckle,
    Mixed,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bleed" => Ok(Preset::Bleed),
            "transient" => Ok(Preset::Transient),
            "speckle" => Ok(Preset::Speckle),
            "mixed" => Ok(Preset::Mixed),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }
}

fn rect(x0: usize, y0: usize, x1: usize, y1: usize, category: Category, depth: DepthProfile) -> Layer {
    Layer {
        shape: Shape::Rect { x0, y0, x1, y1 },
        category,
        depth,
    }
}

fn disc(cx: f64, cy: f64, radius: f64, category: Category, depth: DepthProfile) -> Layer {
    Layer {
        shape: Shape::Disc { cx, cy, radius },
        category,
        depth,
    }
}

fn constant(value: f64) -> DepthProfile {
    DepthProfile::Constant { value }
}

/// Street-level scene shared by the refinement presets: a gently sloping
/// background, a statue (disc), a kiosk (rectangle) and a pedestrian
/// (rectangle, the first foreground component in row-major order).
/// Foreground depths stay within the default median tolerance of the
/// background around them, so the clean scene passes refinement unchanged.
fn street(with_person: bool) -> SceneSpec {
    let (w, h) = (64, 48);
    let mut layers = vec![rect(
        0,
        0,
        w,
        h,
        Category::Background,
        DepthProfile::Ramp {
            a: 12.94,
            b: 0.0,
            c: -0.02,
        },
    )];
    if with_person {
        layers.push(rect(6, 12, 14, 40, Category::Foreground, constant(10.8)));
    }
    layers.push(disc(26.0, 28.0, 9.0, Category::Foreground, constant(10.5)));
    layers.push(rect(42, 20, 58, 40, Category::Foreground, constant(10.2)));
    SceneSpec {
        width: w,
        height: h,
        layers,
        sky_band: 6,
        seed: 1,
    }
}

/// Landmark scene used for ordinal labelling: a far facade above a ground
/// plane that runs from the horizon to near the camera, with a pedestrian,
/// a car and a statue standing on the ground.
fn landmark() -> SceneSpec {
    let (w, h) = (96, 72);
    let layers = vec![
        rect(0, 10, w, 30, Category::Background, constant(60.0)),
        rect(
            0,
            30,
            w,
            h,
            Category::Background,
            DepthProfile::Ramp {
                a: 50.0 + 30.0 * 0.8,
                b: 0.0,
                c: -0.8,
            },
        ),
        rect(14, 34, 26, 66, Category::Foreground, constant(12.0)),
        rect(58, 50, 86, 68, Category::Foreground, constant(14.0)),
        disc(42.0, 34.0, 6.0, Category::Foreground, constant(40.0)),
    ];
    SceneSpec {
        width: w,
        height: h,
        layers,
        sky_band: 10,
        seed: 2,
    }
}

/// Standard fixtures.
pub fn preset(which: Preset) -> SynthFixture {
    match which {
        Preset::Bleed => SynthFixture {
            scene: street(false),
            noise: NoiseSpec {
                bleed_width: 2,
                iterations: 3,
                seed: 11,
                ..NoiseSpec::default()
            },
        },
        Preset::Transient => SynthFixture {
            scene: street(true),
            noise: NoiseSpec {
                transient_component: Some(0),
                transient_valid_fraction: 0.2,
                iterations: 3,
                seed: 12,
                ..NoiseSpec::default()
            },
        },
        Preset::Speckle => SynthFixture {
            scene: SceneSpec {
                width: 100,
                height: 100,
                layers: vec![
                    rect(0, 0, 100, 100, Category::Background, constant(20.0)),
                    disc(50.0, 50.0, 20.0, Category::Foreground, constant(17.0)),
                ],
                sky_band: 0,
                seed: 3,
            },
            noise: NoiseSpec {
                speckle_rate: 0.01,
                iterations: 3,
                seed: 13,
                ..NoiseSpec::default()
            },
        },
        Preset::Mixed => SynthFixture {
            scene: landmark(),
            noise: NoiseSpec {
                bleed_width: 2,
                transient_component: Some(0),
                transient_valid_fraction: 0.2,
                speckle_rate: 0.005,
                iterations: 3,
                seed: 14,
            },
        },
    }
}
