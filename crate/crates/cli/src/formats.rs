//! On-disk JSON schemas shared by the commands: box priors, per-image box
//! predictions, per-image class scores and labels. Every file is a plain
//! JSON array (or object) so other tools can produce or consume it.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use rgt_core::byoa::{BoundingBox, ClassBoxPrior};
use rgt_core::{Error, Result};

/// Written by `gen-data`, consumed by `byoa` and anything re-training on a
/// generated corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorsFile {
    pub class_names: Vec<String>,
    pub priors: ClassBoxPrior,
}

/// One image's boxes for one class; used for both predictions and truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxesEntry {
    pub image_id: String,
    pub class_id: usize,
    pub boxes: Vec<BoundingBox>,
}

/// One image's per-class scores in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoresEntry {
    pub image_id: String,
    pub scores: Vec<f64>,
}

/// One image's binary label per class.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsEntry {
    pub image_id: String,
    pub labels: Vec<u8>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(path, text + "\n")
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Split "a,b,c" on commas, trimming whitespace; rejects empty pieces.
pub fn parse_list<T: std::str::FromStr>(what: &str, text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|piece| {
            let piece = piece.trim();
            piece
                .parse::<T>()
                .map_err(|e| Error::Config(format!("{what} {piece:?}: {e}")))
        })
        .collect()
}

/// Parse "x,y,w,h" into a box for the given class.
pub fn parse_box(text: &str, class_id: usize) -> Result<BoundingBox> {
    let parts: Vec<usize> = parse_list("box coordinate", text)?;
    if parts.len() != 4 {
        return Err(Error::Config(format!(
            "box {text:?} must be x,y,width,height"
        )));
    }
    if parts[2] == 0 || parts[3] == 0 {
        return Err(Error::Config(format!("box {text:?} has an empty side")));
    }
    Ok(BoundingBox {
        x: parts[0],
        y: parts[1],
        width: parts[2],
        height: parts[3],
        class_id,
    })
}
