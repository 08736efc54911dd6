//! Depth and log-depth grids.
//!
//! Invalid pixels carry a NaN sentinel; every other value is finite and
//! strictly positive. Grids are row-major with a top-left origin.

use crate::error::{Error, Result};

/// A dense depth map with NaN marking pixels that have no depth.
#[derive(Clone, Debug)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl PartialEq for DepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DepthMap {
    /// Builds a map from a row-major grid. NaN entries become invalid pixels;
    /// any other value must be finite and positive.
    pub fn new(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if width.checked_mul(height) != Some(data.len()) {
            return Err(Error::GridLength {
                width,
                height,
                len: data.len(),
            });
        }
        for (index, v) in data.iter_mut().enumerate() {
            if v.is_nan() {
                // canonical sentinel so serialization is bit-stable
                *v = f32::NAN;
            } else if !(v.is_finite() && *v > 0.0) {
                return Err(Error::InvalidValue {
                    index,
                    value: f64::from(*v),
                });
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a map where `None` marks invalid pixels.
    pub fn from_options(width: usize, height: usize, data: Vec<Option<f32>>) -> Result<Self> {
        Self::new(
            width,
            height,
            data.into_iter().map(|d| d.unwrap_or(f32::NAN)).collect(),
        )
    }

    pub fn filled(width: usize, height: usize, depth: f32) -> Result<Self> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn invalid(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![f32::NAN; width * height],
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Raw payload, NaN where invalid.
    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn is_valid(&self, i: usize) -> bool {
        !self.data[i].is_nan()
    }

    pub fn get(&self, i: usize) -> Option<f32> {
        let v = self.data[i];
        (!v.is_nan()).then_some(v)
    }

    pub fn at(&self, x: usize, y: usize) -> Option<f32> {
        self.get(self.index(x, y))
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|v| !v.is_nan()).count()
    }

    pub fn validity(&self) -> Vec<bool> {
        self.data.iter().map(|v| !v.is_nan()).collect()
    }

    /// Marks pixel `i` invalid.
    pub fn invalidate(&mut self, i: usize) {
        self.data[i] = f32::NAN;
    }

    /// Sets pixel `i` to `depth`, which must be finite and positive.
    pub fn set(&mut self, i: usize, depth: f32) -> Result<()> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidValue {
                index: i,
                value: f64::from(depth),
            });
        }
        self.data[i] = depth;
        Ok(())
    }

    /// Minimum and maximum over valid pixels.
    pub fn valid_range(&self) -> Option<(f32, f32)> {
        self.data
            .iter()
            .filter(|v| !v.is_nan())
            .fold(None, |acc, &v| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Multiplies every valid depth by `factor`.
    pub fn scaled(&self, factor: f32) -> Result<Self> {
        Self::new(
            self.width,
            self.height,
            self.data.iter().map(|v| v * factor).collect(),
        )
    }

    /// Natural-log map; validity is preserved.
    pub fn to_log(&self) -> LogDepthMap {
        LogDepthMap {
            width: self.width,
            height: self.height,
            values: self
                .data
                .iter()
                .map(|&v| if v.is_nan() { f64::NAN } else { f64::from(v).ln() })
                .collect(),
        }
    }
}

/// Log-depth grid in double precision, NaN where invalid.
///
/// Unlike [`DepthMap`], any finite value is a valid log depth.
#[derive(Clone, Debug)]
pub struct LogDepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl PartialEq for LogDepthMap {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl LogDepthMap {
    /// Builds a log map; non-finite entries become invalid.
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::GridLength {
                width,
                height,
                len: values.len(),
            });
        }
        let values = values
            .into_iter()
            .map(|v| if v.is_finite() { v } else { f64::NAN })
            .collect();
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
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

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn is_valid(&self, i: usize) -> bool {
        !self.values[i].is_nan()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        let v = self.values[i];
        (!v.is_nan()).then_some(v)
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| !v.is_nan()).count()
    }

    /// Overwrites pixel `i`; a non-finite value invalidates it.
    pub fn set(&mut self, i: usize, value: f64) {
        self.values[i] = if value.is_finite() { value } else { f64::NAN };
    }

    pub fn shifted(&self, offset: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|v| v + offset).collect(),
        }
    }

    /// Per-pixel exponential back to depth, rounded to single precision.
    pub fn to_depth(&self) -> Result<DepthMap> {
        DepthMap::new(
            self.width,
            self.height,
            self.values
                .iter()
                .map(|&v| if v.is_nan() { f32::NAN } else { v.exp() as f32 })
                .collect(),
        )
    }
}
