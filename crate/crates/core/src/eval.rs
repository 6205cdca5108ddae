//! Cell-level confusion counts, precision/recall/F1, scene-level accuracy
//! and result tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{binarize, detect, reconstruct, AnomalyReport};
use crate::error::{Error, Result};
use crate::grid::{ensure_same_shape, GridVector};
use crate::ingest::Sample;
use crate::nn::{Network, Variant};
use crate::synth::{InjectionResult, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        ConfusionCounts {
            tp: self.tp + o.tp,
            tn: self.tn + o.tn,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Counts with `ground` as G and `model_out` as M.
pub fn confusion(ground: &GridVector, model_out: &GridVector) -> Result<ConfusionCounts> {
    ensure_same_shape(ground, model_out)?;
    let mut c = ConfusionCounts::default();
    for (&g, &m) in ground.bits().iter().zip(model_out.bits()) {
        match (g, m) {
            (1, 1) => c.tp += 1,
            (0, 0) => c.tn += 1,
            (0, _) => c.fp += 1,
            _ => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model_name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Harmonic mean; `None` when both inputs are 0.
pub fn f1_score(precision: f64, recall: f64) -> Option<f64> {
    let s = precision + recall;
    (s > 0.0).then(|| 2.0 * precision * recall / s)
}

pub fn metrics(counts: &ConfusionCounts) -> MetricRow {
    let p = ratio(counts.tp, counts.tp + counts.fp);
    let r = ratio(counts.tp, counts.tp + counts.fn_);
    let f = match (p, r) {
        (Some(p), Some(r)) => f1_score(p, r),
        _ => None,
    };
    MetricRow {
        model_name: String::new(),
        precision: p.unwrap_or(0.0),
        recall: r.unwrap_or(0.0),
        f1: f.unwrap_or(0.0),
        degenerate: p.is_none() || r.is_none() || f.is_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Sum counts over samples, then compute metrics.
    #[default]
    Micro,
    /// Mean of per-sample metrics.
    Macro,
}

#[derive(Debug, Clone)]
pub struct ScenarioEval {
    pub counts: ConfusionCounts,
    pub row: MetricRow,
    pub reports: Vec<AnomalyReport>,
}

/// Scores a model on injected samples: G is each sample's pre-injection
/// grid, M the binarized reconstruction of the injected grid.
pub fn evaluate_scenario(
    net: &Network,
    test_set: &[(Sample, InjectionResult)],
    threshold: f64,
    averaging: Averaging,
) -> Result<ScenarioEval> {
    if test_set.is_empty() {
        return Err(Error::Argument("empty test set".into()));
    }
    let per_sample = test_set
        .par_iter()
        .map(|(sample, inj)| -> Result<(ConfusionCounts, AnomalyReport)> {
            let report = detect(net, sample, threshold)?;
            Ok((confusion(&inj.source_grid(), &report.m_grid)?, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let counts = per_sample
        .iter()
        .fold(ConfusionCounts::default(), |acc, (c, _)| acc + *c);
    let mut row = match averaging {
        Averaging::Micro => metrics(&counts),
        Averaging::Macro => {
            let n = per_sample.len() as f64;
            let rows: Vec<MetricRow> = per_sample.iter().map(|(c, _)| metrics(c)).collect();
            MetricRow {
                model_name: String::new(),
                precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
                recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
                f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
                degenerate: rows.iter().any(|r| r.degenerate),
            }
        }
    };
    row.model_name = net.config().variant().display_name().to_string();
    Ok(ScenarioEval {
        counts,
        row,
        reports: per_sample.into_iter().map(|(_, r)| r).collect(),
    })
}

/// Confusion counts of plain reconstruction (G = input) over clean samples.
pub fn reconstruction_counts(net: &Network, samples: &[Sample], threshold: f64) -> Result<ConfusionCounts> {
    let per = samples
        .par_iter()
        .map(|s| {
            let m = binarize(s.grid.spec(), &reconstruct(net, &s.grid, &s.gps)?, threshold)?;
            confusion(&s.grid, &m)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per.into_iter().fold(ConfusionCounts::default(), |a, c| a + c))
}

fn check_aligned(reports: &[AnomalyReport], injected: &[InjectionResult]) -> Result<()> {
    if reports.len() != injected.len() {
        return Err(Error::Argument(format!(
            "{} reports but {} injection records",
            reports.len(),
            injected.len()
        )));
    }
    if reports.is_empty() {
        return Err(Error::Argument("no reports to score".into()));
    }
    Ok(())
}

/// Fraction of scenes whose flagged cells are exactly the injected cells.
pub fn detection_accuracy(reports: &[AnomalyReport], injected: &[InjectionResult]) -> Result<f64> {
    check_aligned(reports, injected)?;
    let hits = reports
        .iter()
        .zip(injected)
        .filter(|(r, i)| r.anomalous_cells == i.injected)
        .count();
    Ok(hits as f64 / reports.len() as f64)
}

/// Fraction of scenes where every injected cell is flagged; extra flags allowed.
pub fn detection_accuracy_lax(reports: &[AnomalyReport], injected: &[InjectionResult]) -> Result<f64> {
    check_aligned(reports, injected)?;
    let hits = reports
        .iter()
        .zip(injected)
        .filter(|(r, i)| i.injected.iter().all(|c| r.anomalous_cells.contains(c)))
        .count();
    Ok(hits as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model_name: String,
    pub exact: f64,
    pub lax: f64,
}

/// Baseline order first, then any other names alphabetically.
fn model_rank(name: &str) -> (usize, String) {
    let rank = Variant::from_display_name(name)
        .and_then(|v| Variant::ALL.iter().position(|&w| w == v))
        .unwrap_or(Variant::ALL.len());
    (rank, name.to_string())
}

fn sorted_by_model<T: Clone>(rows: &[T], name: impl Fn(&T) -> &str) -> Vec<T> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| model_rank(name(r)));
    rows
}

pub const METRIC_HEADER: &str = "| Model | Precision | Recall | F1-score |";

pub fn metric_csv(rows: &[MetricRow]) -> String {
    let mut out = String::from("model,precision,recall,f1\n");
    for r in sorted_by_model(rows, |r| &r.model_name) {
        writeln!(out, "{},{:.4},{:.4},{:.4}", r.model_name, r.precision, r.recall, r.f1).unwrap();
    }
    out
}

pub fn metric_markdown(title: &str, rows: &[MetricRow]) -> String {
    let mut out = format!("**{title}**\n\n{METRIC_HEADER}\n|---|---|---|---|\n");
    for r in sorted_by_model(rows, |r| &r.model_name) {
        writeln!(
            out,
            "| {} | {:.4} | {:.4} | {:.4} |",
            r.model_name, r.precision, r.recall, r.f1
        )
        .unwrap();
    }
    out
}

pub fn parse_metric_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let bad = |m: String| Error::Format(format!("metric table row {}: {m}", i + 1));
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", rec.len())));
        }
        let num = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(e.to_string()));
        rows.push(MetricRow {
            model_name: rec[0].to_string(),
            precision: num(1)?,
            recall: num(2)?,
            f1: num(3)?,
            degenerate: false,
        });
    }
    Ok(rows)
}

fn accuracy_tables(accuracy: &BTreeMap<Scenario, Vec<AccuracyRow>>) -> (String, String) {
    let mut csv = String::from("model,scenario,exact,lax\n");
    let scenarios: Vec<Scenario> = accuracy.keys().copied().collect();
    let mut models: Vec<String> = Vec::new();
    for rows in accuracy.values() {
        for r in rows {
            if !models.contains(&r.model_name) {
                models.push(r.model_name.clone());
            }
        }
    }
    models.sort_by_key(|m| model_rank(m));
    let lookup = |m: &str, s: Scenario| accuracy[&s].iter().find(|r| r.model_name == m);

    for m in &models {
        for &s in &scenarios {
            if let Some(r) = lookup(m, s) {
                writeln!(csv, "{},{},{:.4},{:.4}", m, s.id(), r.exact, r.lax).unwrap();
            }
        }
    }

    let mut md = String::new();
    for (label, pick) in [
        ("Anomaly detection accuracy (exact match)", true),
        ("Anomaly detection accuracy (all injected flagged)", false),
    ] {
        let head: Vec<String> = scenarios.iter().map(|s| s.to_string()).collect();
        writeln!(md, "**{label}**\n\n| Model | {} |", head.join(" | ")).unwrap();
        writeln!(md, "|---|{}", "---|".repeat(scenarios.len())).unwrap();
        for m in &models {
            let cells: Vec<String> = scenarios
                .iter()
                .map(|&s| match lookup(m, s) {
                    Some(r) => format!("{:.4}", if pick { r.exact } else { r.lax }),
                    None => "-".to_string(),
                })
                .collect();
            writeln!(md, "| {m} | {} |", cells.join(" | ")).unwrap();
        }
        md.push('\n');
    }
    (csv, md)
}

/// Writes `scenario_<n>.csv` and `scenario_<n>.md` per scenario, plus
/// `accuracy.csv` and `accuracy.md`. Returns the written paths.
pub fn emit_tables(
    dir: &Path,
    rows: &BTreeMap<Scenario, Vec<MetricRow>>,
    accuracy: &BTreeMap<Scenario, Vec<AccuracyRow>>,
) -> Result<Vec<PathBuf>> {
    if rows.values().all(Vec::is_empty) {
        return Err(Error::Argument("no metric rows to tabulate".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: String, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    for (s, r) in rows {
        put(format!("scenario_{}.csv", s.id()), metric_csv(r))?;
        put(
            format!("scenario_{}.md", s.id()),
            metric_markdown(&format!("{s} performances"), r),
        )?;
    }
    if !accuracy.is_empty() {
        let (csv, md) = accuracy_tables(accuracy);
        put("accuracy.csv".into(), csv)?;
        put("accuracy.md".into(), md)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridCell, GridSpec, ObjectCategory};
    use crate::ingest::GpsFeature;

    fn spec() -> GridSpec {
        GridSpec::new(2, 2, 10, 10).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let s = spec();
        let n = s.len() as u64;
        let g = GridVector::zeros(s)
            .set_cell(&s.cell(0, 0, ObjectCategory::Car).unwrap())
            .unwrap()
            .set_cell(&s.cell(1, 1, ObjectCategory::Bus).unwrap())
            .unwrap();
        assert_eq!(
            confusion(&g, &g).unwrap(),
            ConfusionCounts {
                tp: 2,
                tn: n - 2,
                fp: 0,
                fn_: 0
            }
        );
        let ones = GridVector::from_bits(s, vec![1; s.len()]).unwrap();
        assert_eq!(
            confusion(&GridVector::zeros(s), &ones).unwrap(),
            ConfusionCounts {
                tp: 0,
                tn: 0,
                fp: n,
                fn_: 0
            }
        );
        let other = GridVector::zeros(GridSpec::new(2, 3, 10, 10).unwrap());
        assert!(matches!(confusion(&g, &other), Err(Error::Shape(_))));
        let m = metrics(&confusion(&g, &g).unwrap());
        assert_eq!((m.precision, m.recall, m.f1, m.degenerate), (1.0, 1.0, 1.0, false));
    }

    #[test]
    fn degenerate_counts() {
        let m = metrics(&ConfusionCounts {
            tp: 0,
            tn: 10,
            fp: 0,
            fn_: 0,
        });
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(m.degenerate);
    }

    #[test]
    fn f1_examples() {
        assert!((f1_score(0.9816, 1.0).unwrap() - 0.9907).abs() < 5e-5);
        assert!((f1_score(0.1963, 0.5165).unwrap() - 0.2845).abs() < 5e-5);
        assert_eq!(f1_score(0.0, 0.0), None);
    }

    fn row(name: &str, p: f64) -> MetricRow {
        MetricRow {
            model_name: name.into(),
            precision: p,
            recall: 1.0,
            f1: f1_score(p, 1.0).unwrap(),
            degenerate: false,
        }
    }

    #[test]
    fn tables_in_model_order() {
        let rows = vec![row("VAE", 0.2), row("UAV-AdNet", 0.98765), row("CVAE", 0.3)];
        let csv = metric_csv(&rows);
        let names: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(names, ["UAV-AdNet", "CVAE", "VAE"]);
        let back = parse_metric_csv(&csv).unwrap();
        for (b, r) in back.iter().zip(sorted_by_model(&rows, |r| &r.model_name)) {
            assert_eq!(b.model_name, r.model_name);
            assert!((b.precision - r.precision).abs() <= 5e-5 + 1e-12);
            assert!((b.f1 - r.f1).abs() <= 5e-5 + 1e-12);
        }
        let md = metric_markdown("Scenario 1 performances", &rows);
        assert!(md.lines().any(|l| l == METRIC_HEADER));

        let single = metric_csv(&rows[..1]);
        assert_eq!(single.lines().count(), 2);

        let dir = tempfile::tempdir().unwrap();
        let s1 = Scenario::new(1).unwrap();
        let mut by = BTreeMap::new();
        by.insert(s1, rows);
        let mut acc = BTreeMap::new();
        acc.insert(
            s1,
            vec![AccuracyRow {
                model_name: "VAE".into(),
                exact: 0.5,
                lax: 0.75,
            }],
        );
        let files = emit_tables(dir.path(), &by, &acc).unwrap();
        assert_eq!(files.len(), 4);
        let acc_csv = fs::read_to_string(dir.path().join("accuracy.csv")).unwrap();
        assert_eq!(acc_csv, "model,scenario,exact,lax\nVAE,1,0.5000,0.7500\n");
    }

    fn report_with(cells: Vec<GridCell>) -> AnomalyReport {
        let s = spec();
        AnomalyReport {
            input: GridVector::zeros(s),
            reconstruction: vec![0.0; s.len()],
            m_grid: GridVector::zeros(s),
            scene_anomalous: !cells.is_empty(),
            anomalous_cells: cells,
            threshold: 0.5,
        }
    }

    #[test]
    fn accuracy_ratios() {
        let s = spec();
        let a = s.cell(0, 0, ObjectCategory::Person).unwrap();
        let b = s.cell(1, 0, ObjectCategory::Bike).unwrap();
        let inj = |cells: Vec<GridCell>| InjectionResult {
            grid: GridVector::zeros(s),
            injected: cells,
            scenario: Scenario::new(1).unwrap(),
            source_sample: 0,
        };
        let reports = vec![
            report_with(vec![a]),
            report_with(vec![b]),
            report_with(vec![a]),
            report_with(vec![a, b]),
        ];
        let injected = vec![inj(vec![a]), inj(vec![b]), inj(vec![a]), inj(vec![a])];
        assert_eq!(detection_accuracy(&reports, &injected).unwrap(), 0.75);
        assert_eq!(detection_accuracy_lax(&reports, &injected).unwrap(), 1.0);
        assert_eq!(detection_accuracy(&reports[..1], &injected[..1]).unwrap(), 1.0);
        assert_eq!(detection_accuracy(&reports[1..2], &injected[..1]).unwrap(), 0.0);
        assert!(matches!(
            detection_accuracy(&reports, &injected[..2]),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn copying_net_turns_injections_into_false_positives() {
        use crate::nn::{ModelConfig, Variant};
        let s = spec();
        let mut c = ModelConfig::for_variant(Variant::UavAdNetWoGps, s.len());
        c.hidden_sizes = vec![2];
        c.latent_dim = 1;
        let mut net = Network::zeros(c).unwrap();
        let out = net.layers_mut().last_mut().unwrap();
        let dec = out.weight.rows() - s.len();
        for i in 0..s.len() {
            out.weight.row_mut(dec + i)[i] = 10.0;
            out.bias[i] = -5.0;
        }
        let normal = s.cell(1, 1, ObjectCategory::Car).unwrap();
        let forbidden = s.cell(0, 0, ObjectCategory::Person).unwrap();
        let src = GridVector::zeros(s).set_cell(&normal).unwrap();
        let grid = src.set_cell(&forbidden).unwrap();
        let set = vec![(
            Sample {
                grid: grid.clone(),
                gps: GpsFeature::default(),
                source_frame: "a".into(),
            },
            InjectionResult {
                grid,
                injected: vec![forbidden],
                scenario: Scenario::new(1).unwrap(),
                source_sample: 0,
            },
        )];
        let e = evaluate_scenario(&net, &set, 0.5, Averaging::Micro).unwrap();
        assert_eq!(
            e.counts,
            ConfusionCounts {
                tp: 1,
                tn: s.len() as u64 - 2,
                fp: 1,
                fn_: 0
            }
        );
        assert_eq!(e.row.recall, 1.0);
        assert_eq!(e.row.precision, 0.5);
        assert!(evaluate_scenario(&net, &[], 0.5, Averaging::Micro).is_err());
    }
}
