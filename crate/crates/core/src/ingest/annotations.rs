//! JSON-lines annotation files, one frame per line:
//!
//! ```json
//! {"frame_id": "f0001", "time_ms": 200, "boxes": [{"x1": 10, "y1": 20, "x2": 50, "y2": 60, "category": "car"}]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};
use crate::grid::{BoundingBox, ObjectCategory};

#[derive(Debug, Clone, PartialEq)]
pub struct FrameAnnotation {
    pub frame_id: String,
    pub time_ms: u64,
    pub boxes: Vec<(BoundingBox, ObjectCategory)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBox {
    x1: i64,
    y1: i64,
    x2: i64,
    y2: i64,
    category: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    frame_id: String,
    time_ms: u64,
    boxes: Vec<RawBox>,
}

fn convert(raw: RawFrame) -> std::result::Result<FrameAnnotation, String> {
    let mut boxes = Vec::with_capacity(raw.boxes.len());
    for (i, b) in raw.boxes.into_iter().enumerate() {
        if b.x1 >= b.x2 || b.y1 >= b.y2 {
            return Err(format!(
                "box {i} of frame `{}` is degenerate: x1={} x2={} y1={} y2={}",
                raw.frame_id, b.x1, b.x2, b.y1, b.y2
            ));
        }
        let category: ObjectCategory = b.category.parse().map_err(|e: Error| e.to_string())?;
        boxes.push((
            BoundingBox::new(b.x1 as f64, b.y1 as f64, b.x2 as f64, b.y2 as f64),
            category,
        ));
    }
    Ok(FrameAnnotation {
        frame_id: raw.frame_id,
        time_ms: raw.time_ms,
        boxes,
    })
}

/// Parses every line; all malformed records are reported together.
pub fn read_annotations<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<FrameAnnotation>> {
    let mut frames = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<RawFrame>(&line)
            .map_err(|e| e.to_string())
            .and_then(convert);
        match parsed {
            Ok(frame) => frames.push(frame),
            Err(message) => errors.push(RecordError { line: line_no, message }),
        }
    }
    if errors.is_empty() {
        Ok(frames)
    } else {
        Err(Error::Parse {
            path: origin.to_path_buf(),
            errors,
        })
    }
}

pub fn parse_annotations(path: &Path) -> Result<Vec<FrameAnnotation>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_annotations(BufReader::new(file), path)
}

/// Serializes frames in the same JSON-lines schema [`parse_annotations`] reads.
pub fn write_annotations(path: &Path, frames: &[FrameAnnotation]) -> Result<()> {
    let mut out = String::new();
    for f in frames {
        let raw = RawFrame {
            frame_id: f.frame_id.clone(),
            time_ms: f.time_ms,
            boxes: f
                .boxes
                .iter()
                .map(|(b, c)| RawBox {
                    x1: b.x_min.round() as i64,
                    y1: b.y_min.round() as i64,
                    x2: b.x_max.round() as i64,
                    y2: b.y_max.round() as i64,
                    category: c.name().to_string(),
                })
                .collect(),
        };
        out.push_str(&serde_json::to_string(&raw).expect("plain struct serializes"));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
