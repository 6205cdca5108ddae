//! Reconstruction-based anomaly detection.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridCell, GridSpec, GridVector, ObjectCategory};
use crate::ingest::{GpsFeature, Sample};
use crate::nn::Network;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Thresholds of a sweep: 0.1, 0.2, ..., 0.9.
pub fn sweep_thresholds() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

pub fn check_threshold(threshold: f64) -> Result<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!("threshold must lie in (0, 1), got {threshold}")))
    }
}

/// Bit `i` is set iff `probs[i] > threshold`.
pub fn binarize(spec: &GridSpec, probs: &[f64], threshold: f64) -> Result<GridVector> {
    check_threshold(threshold)?;
    if probs.len() != spec.len() {
        return Err(Error::shape(format!(
            "{} probabilities for a grid of {}",
            probs.len(),
            spec.len()
        )));
    }
    GridVector::from_bits(*spec, probs.iter().map(|&p| u8::from(p > threshold)).collect())
}

/// Deterministic reconstruction (z = mu), passing GPS only when the model uses it.
pub fn reconstruct(net: &Network, grid: &GridVector, gps: &GpsFeature) -> Result<Vec<f64>> {
    net.reconstruct(grid, net.config().use_gps.then_some(gps))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub input: GridVector,
    pub reconstruction: Vec<f64>,
    pub m_grid: GridVector,
    /// Set in `input`, cleared in `m_grid`; in linear-index order.
    pub anomalous_cells: Vec<GridCell>,
    pub scene_anomalous: bool,
    pub threshold: f64,
}

/// Cells present in `input` that the model did not reproduce.
pub fn flagged_cells(input: &GridVector, m_grid: &GridVector) -> Result<Vec<GridCell>> {
    if !input.spec().same_shape(m_grid.spec()) {
        return Err(Error::shape("input and m_grid differ in shape"));
    }
    let spec = input.spec();
    input
        .bits()
        .iter()
        .zip(m_grid.bits())
        .enumerate()
        .filter(|(_, (&x, &m))| x == 1 && m == 0)
        .map(|(i, _)| spec.cell_at(i))
        .collect()
}

pub fn detect(net: &Network, sample: &Sample, threshold: f64) -> Result<AnomalyReport> {
    check_threshold(threshold)?;
    let reconstruction = reconstruct(net, &sample.grid, &sample.gps)?;
    let m_grid = binarize(sample.grid.spec(), &reconstruction, threshold)?;
    let anomalous_cells = flagged_cells(&sample.grid, &m_grid)?;
    Ok(AnomalyReport {
        input: sample.grid.clone(),
        reconstruction,
        m_grid,
        scene_anomalous: !anomalous_cells.is_empty(),
        anomalous_cells,
        threshold,
    })
}

pub fn detect_all(net: &Network, samples: &[Sample], threshold: f64) -> Result<Vec<AnomalyReport>> {
    samples.par_iter().map(|s| detect(net, s, threshold)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CellJson {
    row: usize,
    col: usize,
    category: ObjectCategory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportJson {
    pub spec: GridSpec,
    pub input: String,
    pub m_grid: String,
    /// Each probability written with 17 significant digits.
    pub reconstruction: Vec<String>,
    anomalous_cells: Vec<CellJson>,
    pub scene_anomalous: bool,
    pub threshold: f64,
}

impl AnomalyReport {
    pub fn to_json(&self) -> ReportJson {
        ReportJson {
            spec: *self.input.spec(),
            input: self.input.to_bit_string(),
            m_grid: self.m_grid.to_bit_string(),
            reconstruction: self.reconstruction.iter().map(|&p| crate::numfmt::fmt_f64(p)).collect(),
            anomalous_cells: self
                .anomalous_cells
                .iter()
                .map(|c| CellJson {
                    row: c.row,
                    col: c.col,
                    category: c.category,
                })
                .collect(),
            scene_anomalous: self.scene_anomalous,
            threshold: self.threshold,
        }
    }

    /// Rebuilds a report; the flags are re-derived from the stored grids and
    /// must agree with the stored list.
    pub fn from_json(j: &ReportJson) -> Result<Self> {
        let input = GridVector::from_bit_string(j.spec, &j.input)?;
        let m_grid = GridVector::from_bit_string(j.spec, &j.m_grid)?;
        let reconstruction = j
            .reconstruction
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("reconstruction value `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let anomalous_cells = flagged_cells(&input, &m_grid)?;
        let stored = j
            .anomalous_cells
            .iter()
            .map(|c| j.spec.cell(c.row, c.col, c.category))
            .collect::<Result<Vec<_>>>()?;
        if stored != anomalous_cells || j.scene_anomalous == anomalous_cells.is_empty() {
            return Err(Error::Format("report flags disagree with its grids".into()));
        }
        Ok(AnomalyReport {
            input,
            reconstruction,
            m_grid,
            scene_anomalous: j.scene_anomalous,
            anomalous_cells,
            threshold: j.threshold,
        })
    }
}

pub fn write_reports(path: &Path, reports: &[AnomalyReport]) -> Result<()> {
    let json: Vec<ReportJson> = reports.iter().map(AnomalyReport::to_json).collect();
    crate::ingest::write_json(path, &json)
}

pub fn read_reports(path: &Path) -> Result<Vec<AnomalyReport>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json: Vec<ReportJson> =
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    json.iter().map(AnomalyReport::from_json).collect()
}
