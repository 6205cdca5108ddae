//! Loss curves as CSV: header `epoch,e_train,e_val`, values with 17
//! significant digits so a parse reproduces the curve exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub e_train: f64,
    pub e_val: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossCurve {
    pub points: Vec<CurvePoint>,
}

impl LossCurve {
    pub fn best_val(&self) -> Option<f64> {
        self.points.iter().map(|p| p.e_val).min_by(f64::total_cmp)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,e_train,e_val\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.epoch, fmt_f64(p.e_train), fmt_f64(p.e_val)));
        }
        out
    }
}

pub fn export_curve(curve: &LossCurve, path: &Path) -> Result<()> {
    if curve.points.is_empty() {
        return Err(Error::Argument("refusing to export an empty loss curve".into()));
    }
    fs::write(path, curve.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn parse_curve(text: &str) -> Result<LossCurve> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let points = rdr
        .deserialize::<CurvePoint>()
        .map(|r| r.map_err(|e| Error::Format(format!("loss curve: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if points.windows(2).any(|w| w[1].epoch <= w[0].epoch) {
        return Err(Error::Format("loss curve epochs must increase".into()));
    }
    Ok(LossCurve { points })
}

pub fn read_curve(path: &Path) -> Result<LossCurve> {
    parse_curve(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve() -> LossCurve {
        LossCurve {
            points: vec![
                CurvePoint {
                    epoch: 1,
                    e_train: 0.1 + 0.2,
                    e_val: 1.0 / 3.0,
                },
                CurvePoint {
                    epoch: 2,
                    e_train: 0.05,
                    e_val: 0.2,
                },
                CurvePoint {
                    epoch: 3,
                    e_train: 1e-17,
                    e_val: 0.25,
                },
            ],
        }
    }

    #[test]
    fn three_epochs_four_lines_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curve.csv");
        export_curve(&curve(), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next(), Some("epoch,e_train,e_val"));
        assert!(text.contains("3.0000000000000004e-1"));
        assert_eq!(read_curve(&p).unwrap(), curve());
        assert_eq!(curve().best_val(), Some(0.2));
    }

    #[test]
    fn empty_and_unordered_rejected() {
        assert!(export_curve(&LossCurve::default(), Path::new("/nonexistent/x")).is_err());
        assert!(parse_curve("epoch,e_train,e_val\n2,0.1,0.1\n1,0.1,0.1\n").is_err());
    }
}
