use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Scenario, ZoneRule};
use crate::error::{Error, Result};
use crate::grid::{GridCell, GridSpec, GridVector, ObjectCategory};
use crate::ingest::{Dataset, Sample};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InjectionResult {
    pub grid: GridVector,
    /// Added cells, in linear-index order.
    pub injected: Vec<GridCell>,
    pub scenario: Scenario,
    pub source_sample: usize,
}

impl InjectionResult {
    /// The grid before injection. Injection only fills empty cells, so
    /// clearing the injected cells restores it exactly.
    pub fn source_grid(&self) -> GridVector {
        let mut g = self.grid.clone();
        for c in &self.injected {
            g.clear_in_place(c).expect("injected cells lie inside the grid");
        }
        g
    }
}

/// Cells that a rule of the scenario's kind marks and that are empty in `source`.
pub fn eligible_cells(source: &GridVector, scenario: Scenario, rules: &[ZoneRule]) -> Result<Vec<GridCell>> {
    let spec = source.spec();
    let matching: Vec<&ZoneRule> = rules.iter().filter(|r| r.kind == scenario.kind()).collect();
    if matching.is_empty() {
        return Err(Error::config(format!(
            "no {} rule available for {scenario}",
            scenario.kind().name()
        )));
    }
    let mut cells = BTreeSet::new();
    for rule in matching {
        if rule.rows != spec.rows || rule.cols != spec.cols {
            return Err(Error::config(format!(
                "rule mask {}x{} does not match grid {}x{}",
                rule.rows, rule.cols, spec.rows, spec.cols
            )));
        }
        for (row, col) in rule.cells() {
            let cell = GridCell {
                row,
                col,
                category: rule.category,
            };
            if !source.get(&cell)? {
                cells.insert((spec.linear_index(&cell)?, cell));
            }
        }
    }
    Ok(cells.into_iter().map(|(_, c)| c).collect())
}

/// Adds `count` distinct objects, drawn uniformly from the eligible cells.
pub fn inject(
    source: &GridVector,
    scenario: Scenario,
    rules: &[ZoneRule],
    count: usize,
    rng_seed: u64,
) -> Result<InjectionResult> {
    if count == 0 {
        return Err(Error::Argument("injection count must be at least 1".into()));
    }
    let eligible = eligible_cells(source, scenario, rules)?;
    if eligible.len() < count {
        return Err(Error::Saturation {
            needed: count,
            eligible: eligible.len(),
        });
    }
    let mut picks = index::sample(&mut seed::rng(rng_seed), eligible.len(), count).into_vec();
    picks.sort_unstable();
    let injected: Vec<GridCell> = picks.into_iter().map(|i| eligible[i]).collect();
    let mut grid = source.clone();
    for c in &injected {
        grid.set_in_place(c)?;
    }
    Ok(InjectionResult {
        grid,
        injected,
        scenario,
        source_sample: 0,
    })
}

/// `per_source` injections for every source; source `i` uses seed
/// `seed ^ i`, and its `j`-th injection a stream derived from that.
pub fn generate_test_set(
    sources: &[Sample],
    scenario: Scenario,
    per_source: usize,
    count: usize,
    rules: &[ZoneRule],
    seed: u64,
) -> Result<Vec<(Sample, InjectionResult)>> {
    if sources.is_empty() {
        return Err(Error::Argument("no source samples to inject into".into()));
    }
    let nested = sources
        .par_iter()
        .enumerate()
        .map(|(i, src)| {
            let source_seed = seed ^ i as u64;
            (0..per_source)
                .map(|j| {
                    let mut r = inject(
                        &src.grid,
                        scenario,
                        rules,
                        count,
                        seed::derive(source_seed, &[j as u64]),
                    )
                    .map_err(|e| Error::Source {
                        index: i,
                        source: Box::new(e),
                    })?;
                    r.source_sample = i;
                    let sample = Sample {
                        grid: r.grid.clone(),
                        gps: src.gps,
                        source_frame: src.source_frame.clone(),
                    };
                    Ok((sample, r))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(nested.into_iter().flatten().collect())
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    sample: usize,
    source: usize,
    scenario: u8,
    row: usize,
    col: usize,
    category: ObjectCategory,
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest.csv"))
}

/// Writes the injected grids as a dataset plus a manifest with one row per
/// injected cell: `sample,source,scenario,row,col,category`.
pub fn save_synthetic(dir: &Path, name: &str, spec: &GridSpec, set: &[(Sample, InjectionResult)]) -> Result<()> {
    let ds = Dataset::new(*spec, set.iter().map(|(s, _)| s.clone()).collect())?;
    ds.save(dir, name)?;
    let path = manifest_path(dir, name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
    for (i, (_, r)) in set.iter().enumerate() {
        for c in &r.injected {
            w.serialize(ManifestRow {
                sample: i,
                source: r.source_sample,
                scenario: r.scenario.id(),
                row: c.row,
                col: c.col,
                category: c.category,
            })
            .map_err(|e| Error::io(&path, e.into()))?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

pub fn load_synthetic(dir: &Path, name: &str) -> Result<(GridSpec, Vec<(Sample, InjectionResult)>)> {
    let ds = Dataset::load(dir, name)?;
    let path = manifest_path(dir, name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut results: Vec<Option<InjectionResult>> = vec![None; ds.len()];
    for (line, row) in rdr.deserialize::<ManifestRow>().enumerate() {
        let bad = |m: String| Error::Format(format!("{}: row {}: {m}", path.display(), line + 1));
        let row = row.map_err(|e| bad(e.to_string()))?;
        let sample = ds
            .samples
            .get(row.sample)
            .ok_or_else(|| bad(format!("sample {} out of range", row.sample)))?;
        let cell = ds.spec.cell(row.row, row.col, row.category)?;
        if !sample.grid.get(&cell)? {
            return Err(bad("injected cell is empty in the stored grid".into()));
        }
        let scenario = Scenario::new(row.scenario)?;
        let entry = results[row.sample].get_or_insert_with(|| InjectionResult {
            grid: sample.grid.clone(),
            injected: Vec::new(),
            scenario,
            source_sample: row.source,
        });
        entry.injected.push(cell);
    }
    let mut set = Vec::with_capacity(ds.len());
    for (i, (sample, r)) in ds.samples.into_iter().zip(results).enumerate() {
        let mut r = r.ok_or_else(|| Error::Format(format!("{}: sample {i} has no injected cells", path.display())))?;
        r.injected
            .sort_by_key(|c| ds.spec.linear_index(c).expect("validated cell"));
        set.push((sample, r));
    }
    Ok((ds.spec, set))
}
