//! JSON-lines manifest of image records.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Euclidean,
    Ordinal,
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub depth_path: String,
    pub mask_path: String,
    /// `None` until the image has been curated.
    #[serde(default)]
    pub curation_verdict: Option<Verdict>,
    #[serde(default)]
    pub valid_fraction: f64,
    #[serde(default)]
    pub provenance: String,
}

impl ImageRecord {
    pub fn new(
        image_id: impl Into<String>,
        depth_path: impl Into<String>,
        mask_path: impl Into<String>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            depth_path: depth_path.into(),
            mask_path: mask_path.into(),
            curation_verdict: None,
            valid_fraction: 0.0,
            provenance: String::new(),
        }
    }

    /// Appends a `;`-separated note to the provenance field.
    pub fn note(&mut self, entry: impl AsRef<str>) {
        if !self.provenance.is_empty() {
            self.provenance.push(';');
        }
        self.provenance.push_str(entry.as_ref());
    }
}

/// Parses one record per non-blank line.
pub fn read_manifest<R: BufRead>(reader: R) -> Result<Vec<ImageRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ImageRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("manifest line {}: {e}", lineno + 1)))?;
        if !(0.0..=1.0).contains(&rec.valid_fraction) {
            return Err(Error::Format(format!(
                "manifest line {}: valid_fraction {} outside [0, 1]",
                lineno + 1,
                rec.valid_fraction
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_manifest<W: Write>(mut writer: W, records: &[ImageRecord]) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
