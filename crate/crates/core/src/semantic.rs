//! Semantic category masks and the raw-class to category mapping.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{check_shape, Error, Result};

/// Coarse semantic category of a pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Sky,
    Foreground,
    Background,
    Unknown,
}

impl Category {
    /// On-disk code.
    pub fn code(self) -> u8 {
        match self {
            Category::Sky => 0,
            Category::Foreground => 1,
            Category::Background => 2,
            Category::Unknown => 255,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Category::Sky),
            1 => Some(Category::Foreground),
            2 => Some(Category::Background),
            255 => Some(Category::Unknown),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Sky => "sky",
            Category::Foreground => "foreground",
            Category::Background => "background",
            Category::Unknown => "unknown",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sky" => Ok(Category::Sky),
            "foreground" | "fg" => Ok(Category::Foreground),
            "background" | "bg" => Ok(Category::Background),
            "unknown" => Ok(Category::Unknown),
            other => Err(Error::Format(format!("unknown category name {other:?}"))),
        }
    }
}

/// Per-pixel semantic categories, same layout as a [`DepthMap`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SemanticCategoryMask {
    width: usize,
    height: usize,
    codes: Vec<Category>,
}

impl SemanticCategoryMask {
    pub fn new(width: usize, height: usize, codes: Vec<Category>) -> Result<Self> {
        if width.checked_mul(height) != Some(codes.len()) {
            return Err(Error::GridLength {
                width,
                height,
                len: codes.len(),
            });
        }
        Ok(Self {
            width,
            height,
            codes,
        })
    }

    pub fn filled(width: usize, height: usize, category: Category) -> Self {
        Self {
            width,
            height,
            codes: vec![category; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_slice(&self) -> &[Category] {
        &self.codes
    }

    pub fn get(&self, i: usize) -> Category {
        self.codes[i]
    }

    pub fn at(&self, x: usize, y: usize) -> Category {
        self.codes[y * self.width + x]
    }

    pub fn set(&mut self, i: usize, category: Category) {
        self.codes[i] = category;
    }

    pub fn count(&self, category: Category) -> usize {
        self.codes.iter().filter(|&&c| c == category).count()
    }
}

/// Fraction of non-sky pixels that carry a valid depth; 0 when every pixel
/// is sky.
pub fn valid_fraction(map: &DepthMap, mask: &SemanticCategoryMask) -> Result<f64> {
    check_shape(map.shape(), mask.shape())?;
    let (mut valid, mut total) = (0usize, 0usize);
    for (i, &c) in mask.as_slice().iter().enumerate() {
        if c == Category::Sky {
            continue;
        }
        total += 1;
        if map.is_valid(i) {
            valid += 1;
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(valid as f64 / total as f64)
}

/// Number of raw classes produced by the segmentation network.
pub const NUM_RAW_CLASSES: usize = 150;

/// Maps raw segmentation class ids to coarse categories.
///
/// Ids that are not listed resolve to [`Category::Unknown`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryMapping {
    entries: Vec<(u8, Category)>,
    table: [Category; 256],
}

impl CategoryMapping {
    pub fn new(entries: Vec<(u8, Category)>) -> Result<Self> {
        let mut table = [Category::Unknown; 256];
        let mut seen = [false; 256];
        for &(id, category) in &entries {
            if usize::from(id) >= NUM_RAW_CLASSES {
                return Err(Error::Config(format!(
                    "class id {id} outside [0, {}]",
                    NUM_RAW_CLASSES - 1
                )));
            }
            if seen[usize::from(id)] {
                return Err(Error::Config(format!("class id {id} mapped twice")));
            }
            seen[usize::from(id)] = true;
            table[usize::from(id)] = category;
        }
        Ok(Self { entries, table })
    }

    pub fn entries(&self) -> &[(u8, Category)] {
        &self.entries
    }

    pub fn resolve(&self, raw: u8) -> Category {
        self.table[usize::from(raw)]
    }

    pub fn apply(&self, width: usize, height: usize, raw: &[u8]) -> Result<SemanticCategoryMask> {
        SemanticCategoryMask::new(width, height, raw.iter().map(|&r| self.resolve(r)).collect())
    }

    /// Parses `<category>\t<id>,<id>,...` lines. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (name, ids) = line.split_once('\t').ok_or_else(|| {
                Error::Format(format!("line {}: expected <category>\\t<ids>", lineno + 1))
            })?;
            let category: Category = name.parse()?;
            for id in ids.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let id: u8 = id.parse().map_err(|_| {
                    Error::Format(format!("line {}: bad class id {id:?}", lineno + 1))
                })?;
                entries.push((id, category));
            }
        }
        Self::new(entries)
    }

    /// Serializes in the text format accepted by [`CategoryMapping::parse`],
    /// one line per category in first-appearance order.
    pub fn to_text(&self) -> String {
        let mut order: Vec<Category> = Vec::new();
        for &(_, c) in &self.entries {
            if !order.contains(&c) {
                order.push(c);
            }
        }
        let mut out = String::new();
        for c in order {
            let ids: Vec<String> = self
                .entries
                .iter()
                .filter(|(_, e)| *e == c)
                .map(|(id, _)| id.to_string())
                .collect();
            out.push_str(&format!("{}\t{}\n", c.name(), ids.join(",")));
        }
        out
    }
}

impl Default for CategoryMapping {
    /// Best-effort grouping of the 150 scene-parsing classes (0-based ids).
    fn default() -> Self {
        const SKY: &[u8] = &[2];
        // people, vehicles, statues, fountains, street furniture, plants
        const FOREGROUND: &[u8] = &[
            4, 12, 17, 20, 43, 66, 69, 72, 76, 80, 82, 83, 87, 90, 93, 102, 103, 104, 116, 126,
            127, 132, 136, 138, 149,
        ];
        // buildings, terrain, large static structure
        const BACKGROUND: &[u8] = &[
            0, 1, 3, 5, 6, 9, 11, 13, 16, 21, 25, 26, 29, 32, 34, 38, 42, 46, 48, 51, 52, 53, 59,
            60, 61, 68, 84, 91, 94, 101, 113, 121, 128, 140,
        ];
        let entries = SKY
            .iter()
            .map(|&id| (id, Category::Sky))
            .chain(FOREGROUND.iter().map(|&id| (id, Category::Foreground)))
            .chain(BACKGROUND.iter().map(|&id| (id, Category::Background)))
            .collect();
        Self::new(entries).expect("default mapping is well-formed")
    }
}
