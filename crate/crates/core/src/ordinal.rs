//! Ordinal depth pairs and their CSV file format.

use std::io::{Read, Write};

use serde::Deserialize;

use crate::error::{Error, Result};

/// Pixel coordinate `(x, y)`.
pub type Pixel = (usize, usize);

/// Ground-truth ordering of a pair: `Further` means pixel i lies further from
/// the camera than pixel j.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    Further,
    Closer,
}

impl Relation {
    pub fn sign(self) -> i8 {
        match self {
            Relation::Further => 1,
            Relation::Closer => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Option<Self> {
        match sign {
            1 => Some(Relation::Further),
            -1 => Some(Relation::Closer),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrdinalPair {
    pub pixel_i: Pixel,
    pub pixel_j: Pixel,
    pub relation: Relation,
    /// Confidence weight; 1 unless a file supplies one.
    pub weight: f64,
}

impl OrdinalPair {
    pub fn new(pixel_i: Pixel, pixel_j: Pixel, relation: Relation) -> Result<Self> {
        if pixel_i == pixel_j {
            return Err(Error::Format(format!(
                "ordinal pair endpoints coincide at {pixel_i:?}"
            )));
        }
        Ok(Self {
            pixel_i,
            pixel_j,
            relation,
            weight: 1.0,
        })
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// Checks both endpoints against an image of the given size.
    pub fn check_bounds(&self, width: usize, height: usize) -> Result<()> {
        for (x, y) in [self.pixel_i, self.pixel_j] {
            if x >= width || y >= height {
                return Err(Error::OutOfBounds {
                    x,
                    y,
                    width,
                    height,
                });
            }
        }
        Ok(())
    }

    /// Row-major linear indices of (i, j) in an image of width `width`.
    pub fn indices(&self, width: usize) -> (usize, usize) {
        (
            self.pixel_i.1 * width + self.pixel_i.0,
            self.pixel_j.1 * width + self.pixel_j.0,
        )
    }
}

/// A pair tagged with the image it belongs to.
#[derive(Clone, Debug, PartialEq)]
pub struct PairRecord {
    pub image_id: String,
    pub pair: OrdinalPair,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    image_id: String,
    ix: usize,
    iy: usize,
    jx: usize,
    jy: usize,
    r: i64,
    #[serde(default)]
    w: Option<f64>,
}

const HEADER: [&str; 6] = ["image_id", "ix", "iy", "jx", "jy", "r"];

/// Reads pairs from CSV with header `image_id,ix,iy,jx,jy,r`; an optional
/// trailing `w` column carries per-pair weights.
pub fn read_pairs<R: Read>(reader: R) -> Result<Vec<PairRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    let ok = names.len() >= 6
        && names[..6] == HEADER
        && (names.len() == 6 || (names.len() == 7 && names[6] == "w"));
    if !ok {
        return Err(Error::Format(format!(
            "unexpected pair CSV header {names:?}"
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        let relation = Relation::from_sign(row.r)
            .ok_or_else(|| Error::Format(format!("relation must be 1 or -1, got {}", row.r)))?;
        let mut pair = OrdinalPair::new((row.ix, row.iy), (row.jx, row.jy), relation)?;
        if let Some(w) = row.w {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Format(format!("bad pair weight {w}")));
            }
            pair.weight = w;
        }
        out.push(PairRecord {
            image_id: row.image_id,
            pair,
        });
    }
    Ok(out)
}

/// Writes pairs with the six-column header. Weights are not written.
pub fn write_pairs<W: Write>(writer: W, pairs: &[PairRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HEADER)?;
    for rec in pairs {
        let p = &rec.pair;
        wtr.write_record([
            rec.image_id.clone(),
            p.pixel_i.0.to_string(),
            p.pixel_i.1.to_string(),
            p.pixel_j.0.to_string(),
            p.pixel_j.1.to_string(),
            p.relation.sign().to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Pairs belonging to `image_id`, or all pairs when `image_id` is `None`.
pub fn pairs_for(records: &[PairRecord], image_id: Option<&str>) -> Vec<OrdinalPair> {
    records
        .iter()
        .filter(|r| image_id.is_none_or(|id| r.image_id == id))
        .map(|r| r.pair)
        .collect()
}
