//! Annotation and telemetry ingestion, and the on-disk dataset layout.
//!
//! A dataset named `name` in directory `dir` is two index-aligned files:
//! `name.grids` (binary grid container) and `name.gps.csv` with header
//! `index,source_frame,lat,lon,alt`.

mod annotations;
mod flight;
mod gps;
mod join;
mod split;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use annotations::{parse_annotations, read_annotations, write_annotations, FrameAnnotation};
pub use flight::{
    parse_flight_log, read_flight_log, validate_flight_record, write_flight_log, FlightRecord, DATE_FORMAT,
};
pub use gps::{normalize_gps, AxisRange, GeoBounds, GpsFeature, GPS_LEN};
pub use join::{frame_times, join_by_time, DEFAULT_MAX_GAP_MS};
pub use split::{split, Split, SplitRatios};

use crate::error::{Error, Result};
use crate::grid::{io as grid_io, rasterize, GridSpec, GridVector};
use crate::numfmt::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub grid: GridVector,
    pub gps: GpsFeature,
    pub source_frame: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: GridSpec,
    pub samples: Vec<Sample>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GpsRow {
    index: usize,
    source_frame: String,
    lat: String,
    lon: String,
    alt: String,
}

pub fn dataset_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.grids")), dir.join(format!("{name}.gps.csv")))
}

impl Dataset {
    pub fn new(spec: GridSpec, samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.grid.spec().same_shape(&spec) {
                return Err(Error::shape(format!("sample {i} does not match dataset grid spec")));
            }
            if !s.gps.values.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("GPS feature of sample {i}")));
            }
        }
        Ok(Dataset { spec, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn save(&self, dir: &Path, name: &str) -> Result<()> {
        let (grids_path, gps_path) = dataset_paths(dir, name);
        let grids: Vec<GridVector> = self.samples.iter().map(|s| s.grid.clone()).collect();
        grid_io::save_container(&grids_path, &self.spec, &grids)?;
        let mut w = csv::Writer::from_path(&gps_path).map_err(|e| Error::io(&gps_path, e.into()))?;
        for (index, s) in self.samples.iter().enumerate() {
            let [lat, lon, alt] = s.gps.values.map(fmt_f64);
            w.serialize(GpsRow {
                index,
                source_frame: s.source_frame.clone(),
                lat,
                lon,
                alt,
            })
            .map_err(|e| Error::io(&gps_path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(&gps_path, e))
    }

    pub fn load(dir: &Path, name: &str) -> Result<Self> {
        let (grids_path, gps_path) = dataset_paths(dir, name);
        let (spec, grids) = grid_io::load_container(&grids_path)?;
        let mut rdr = csv::Reader::from_path(&gps_path).map_err(|e| Error::io(&gps_path, e.into()))?;
        let mut samples = Vec::with_capacity(grids.len());
        let mut grids = grids.into_iter();
        for (i, row) in rdr.deserialize::<GpsRow>().enumerate() {
            let bad = |msg: String| Error::Format(format!("{}: row {}: {msg}", gps_path.display(), i + 1));
            let row = row.map_err(|e| bad(e.to_string()))?;
            if row.index != i {
                return Err(bad(format!("index {} out of sequence", row.index)));
            }
            let parse = |s: &str| s.parse::<f64>().map_err(|e| bad(e.to_string()));
            let grid = grids.next().ok_or_else(|| bad("more GPS rows than grids".into()))?;
            samples.push(Sample {
                grid,
                gps: GpsFeature::new(parse(&row.lat)?, parse(&row.lon)?, parse(&row.alt)?),
                source_frame: row.source_frame,
            });
        }
        if grids.next().is_some() {
            return Err(Error::Format(format!(
                "{}: fewer GPS rows than grids",
                gps_path.display()
            )));
        }
        Dataset::new(spec, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub ratios: SplitRatios,
    pub seed: u64,
    pub max_gap_ms: u64,
    /// Overrides the bounds otherwise computed from the training split.
    pub bounds: Option<GeoBounds>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            ratios: SplitRatios::default(),
            seed: 0,
            max_gap_ms: DEFAULT_MAX_GAP_MS,
            bounds: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub bounds: GeoBounds,
    /// Boxes entirely outside their frame.
    pub skipped_boxes: usize,
}

/// Join, rasterize, split, then normalize GPS with bounds from the training
/// split (unless overridden).
pub fn build_datasets(
    annotations: &[FrameAnnotation],
    flight: &[FlightRecord],
    spec: &GridSpec,
    opts: &IngestOptions,
) -> Result<Ingested> {
    let pairs = join_by_time(annotations, flight, &frame_times(annotations), opts.max_gap_ms)?;
    let mut skipped_boxes = 0;
    let mut rows = Vec::with_capacity(pairs.len());
    for (ann, rec) in pairs {
        let r = rasterize(&ann.boxes, spec)?;
        skipped_boxes += r.skipped;
        rows.push((r.grid, rec, ann.frame_id));
    }
    let parts = split(rows, opts.ratios, opts.seed)?;
    let bounds = match opts.bounds {
        Some(b) => b,
        None => GeoBounds::from_records(parts.train.iter().map(|(_, r, _)| r))?,
    };
    bounds.validate()?;
    let to_dataset = |rows: Vec<(GridVector, FlightRecord, String)>| -> Result<Dataset> {
        let samples = rows
            .into_iter()
            .map(|(grid, rec, source_frame)| {
                Ok(Sample {
                    grid,
                    gps: normalize_gps(&rec, &bounds)?,
                    source_frame,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(*spec, samples)
    };
    Ok(Ingested {
        train: to_dataset(parts.train)?,
        val: to_dataset(parts.val)?,
        test: to_dataset(parts.test)?,
        bounds,
        skipped_boxes,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundingBox, ObjectCategory};

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = GridSpec::default();
        let g = GridVector::zeros(spec)
            .set_cell(&spec.cell(3, 4, ObjectCategory::Bus).unwrap())
            .unwrap();
        let ds = Dataset::new(
            spec,
            vec![
                Sample {
                    grid: g.clone(),
                    gps: GpsFeature::new(0.1, 1.0 / 3.0, 0.9),
                    source_frame: "a".into(),
                },
                Sample {
                    grid: GridVector::zeros(spec),
                    gps: GpsFeature::default(),
                    source_frame: "b,c".into(),
                },
            ],
        )
        .unwrap();
        ds.save(dir.path(), "train").unwrap();
        assert_eq!(Dataset::load(dir.path(), "train").unwrap(), ds);
    }

    #[test]
    fn build_splits_and_normalizes() {
        let spec = GridSpec::default();
        let flight: Vec<FlightRecord> = (0..50)
            .map(|i| FlightRecord {
                date_time: chrono::NaiveDate::from_ymd_opt(2019, 3, 1)
                    .unwrap()
                    .and_hms_opt(10, 0, 0)
                    .unwrap(),
                t: i * 20,
                lat: 56.0 + i as f64 * 1e-4,
                lon: 10.0,
                altitude: 10_000.0 + i as f64 * 10.0,
                roll: 0.0,
                pitch: 0.0,
                yaw: 0.0,
                vx: 0.0,
                vy: 0.0,
                vz: 0.0,
            })
            .collect();
        let anns: Vec<FrameAnnotation> = (0..10)
            .map(|i| FrameAnnotation {
                frame_id: format!("f{i}"),
                time_ms: i * 100,
                boxes: vec![(BoundingBox::new(0.0, 0.0, 100.0, 100.0), ObjectCategory::Person)],
            })
            .collect();
        let out = build_datasets(&anns, &flight, &spec, &IngestOptions::default()).unwrap();
        assert_eq!((out.train.len(), out.val.len(), out.test.len()), (6, 1, 3));
        assert!(out.train.samples.iter().all(|s| s.gps.is_valid()));
        let lats: Vec<f64> = out.train.samples.iter().map(|s| s.gps.values[0]).collect();
        assert!(lats.contains(&0.0) && lats.contains(&1.0));
    }
}
