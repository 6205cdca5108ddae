//! Flight telemetry CSV with header
//! `date,t,lat,lon,alt_mm,roll,pitch,yaw,vx,vy,vz`.
//! `date` is `MMDDYYYY-HHMMSS`; `t` in milliseconds; angles in radians;
//! speeds in m/s.

use std::f64::consts::PI;
use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, RecordError, Result};

pub const DATE_FORMAT: &str = "%m%d%Y-%H%M%S";

#[derive(Debug, Clone, PartialEq)]
pub struct FlightRecord {
    pub date_time: NaiveDateTime,
    pub t: u64,
    pub lat: f64,
    pub lon: f64,
    /// Millimeters.
    pub altitude: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    date: String,
    t: f64,
    lat: f64,
    lon: f64,
    alt_mm: f64,
    roll: f64,
    pitch: f64,
    yaw: f64,
    vx: f64,
    vy: f64,
    vz: f64,
}

/// Inclusive range check; NaN and infinities always fail.
fn check(index: usize, field: &'static str, value: f64, min: f64, max: f64) -> Result<()> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(Error::Validation {
            index,
            field,
            value,
            min,
            max,
        })
    }
}

fn check_all(index: usize, fields: &[(&'static str, f64)]) -> Result<()> {
    for &(field, value) in fields {
        let (min, max) = match field {
            "lat" => (-90.0, 90.0),
            "lon" => (-180.0, 180.0),
            "roll" | "pitch" | "yaw" => (-PI, PI),
            _ => (0.0, f64::INFINITY),
        };
        check(index, field, value, min, max)?;
    }
    Ok(())
}

/// Accepts exactly the sensor ranges: lat in [-90, 90], lon in [-180, 180],
/// attitude angles in [-pi, pi], and nonnegative time, altitude and speeds.
pub fn validate_flight_record(record: &FlightRecord, index: usize) -> Result<()> {
    check_all(
        index,
        &[
            ("lat", record.lat),
            ("lon", record.lon),
            ("altitude", record.altitude),
            ("roll", record.roll),
            ("pitch", record.pitch),
            ("yaw", record.yaw),
            ("vx", record.vx),
            ("vy", record.vy),
            ("vz", record.vz),
        ],
    )
}

pub fn read_flight_log<R: Read>(reader: R, origin: &Path) -> Result<Vec<FlightRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in rdr.deserialize::<RawRecord>().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let raw = match row {
            Ok(raw) => raw,
            Err(e) => {
                errors.push(RecordError {
                    line,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let date_time = match NaiveDateTime::parse_from_str(&raw.date, DATE_FORMAT) {
            Ok(d) => d,
            Err(e) => {
                errors.push(RecordError {
                    line,
                    message: format!("date `{}`: {e}", raw.date),
                });
                continue;
            }
        };
        let index = records.len();
        check(index, "t", raw.t, 0.0, f64::INFINITY)?;
        if raw.t.fract() != 0.0 {
            errors.push(RecordError {
                line,
                message: format!("t must be whole milliseconds, got {}", raw.t),
            });
            continue;
        }
        let record = FlightRecord {
            date_time,
            t: raw.t as u64,
            lat: raw.lat,
            lon: raw.lon,
            altitude: raw.alt_mm,
            roll: raw.roll,
            pitch: raw.pitch,
            yaw: raw.yaw,
            vx: raw.vx,
            vy: raw.vy,
            vz: raw.vz,
        };
        validate_flight_record(&record, index)?;
        if let Some(prev) = records.last().map(|r: &FlightRecord| r.t) {
            if record.t < prev {
                return Err(Error::Ordering {
                    index,
                    t: record.t,
                    previous: prev,
                });
            }
        }
        records.push(record);
    }
    if !errors.is_empty() {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            errors,
        });
    }
    Ok(records)
}

/// Reads and validates a flight log; records come back in file order, which
/// must be nondecreasing in `t`.
pub fn parse_flight_log(path: &Path) -> Result<Vec<FlightRecord>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_flight_log(std::io::BufReader::new(file), path)
}

pub fn write_flight_log(path: &Path, records: &[FlightRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for r in records {
        w.serialize(RawRecord {
            date: r.date_time.format(DATE_FORMAT).to_string(),
            t: r.t as f64,
            lat: r.lat,
            lon: r.lon,
            alt_mm: r.altitude,
            roll: r.roll,
            pitch: r.pitch,
            yaw: r.yaw,
            vx: r.vx,
            vy: r.vy,
            vz: r.vz,
        })
        .map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,t,lat,lon,alt_mm,roll,pitch,yaw,vx,vy,vz\n";

    fn parse(rows: &str) -> Result<Vec<FlightRecord>> {
        read_flight_log(format!("{HEADER}{rows}").as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn empty_file() {
        assert!(parse("").unwrap().is_empty());
        assert!(read_flight_log(&b""[..], Path::new("x")).unwrap().is_empty());
    }

    #[test]
    fn boundary_yaw_accepted() {
        let rows = format!("03012019-101500,0,56.2,10.1,12000,0,0,{PI},0,0,0\n");
        let recs = parse(&rows).unwrap();
        assert_eq!(recs[0].yaw, PI);
        assert_eq!(recs[0].date_time.format(DATE_FORMAT).to_string(), "03012019-101500");
    }

    #[test]
    fn lat_out_of_range() {
        let err = parse("03012019-101500,0,91,10.1,12000,0,0,0,0,0,0\n").unwrap_err();
        assert!(matches!(err, Error::Validation { field: "lat", .. }), "{err}");
    }

    #[test]
    fn negative_time_named() {
        let err = parse("03012019-101500,-1,1,1,1,0,0,0,0,0,0\n").unwrap_err();
        assert!(matches!(err, Error::Validation { field: "t", .. }), "{err}");
    }

    #[test]
    fn ordering_enforced() {
        let rows = "03012019-101500,40,1,1,1,0,0,0,0,0,0\n03012019-101500,20,1,1,1,0,0,0,0,0,0\n";
        assert!(matches!(
            parse(rows),
            Err(Error::Ordering {
                index: 1,
                t: 20,
                previous: 40
            })
        ));
        let rows = "03012019-101500,20,1,1,1,0,0,0,0,0,0\n03012019-101500,20,1,1,1,0,0,0,0,0,0\n";
        assert_eq!(parse(rows).unwrap().len(), 2);
    }

    #[test]
    fn malformed_rows_reported() {
        let err = parse("13452019-101500,0,1,1,1,0,0,0,0,0,0\n03012019-101500,abc,1,1,1,0,0,0,0,0,0\n").unwrap_err();
        match err {
            Error::Parse { errors, .. } => assert_eq!(errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![2, 3]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        let recs = parse("03012019-101500,0,56.1,10.2,15000.5,0.1,-0.2,3.0,1.5,0,0.25\n").unwrap();
        write_flight_log(&p, &recs).unwrap();
        assert_eq!(parse_flight_log(&p).unwrap(), recs);
    }
}
