use serde::{Deserialize, Serialize};

use super::FlightRecord;
use crate::error::{Error, Result};

pub const GPS_LEN: usize = 3;

/// Normalized (lat, lon, altitude), each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GpsFeature {
    pub values: [f64; GPS_LEN],
}

impl GpsFeature {
    pub fn new(lat: f64, lon: f64, alt: f64) -> Self {
        GpsFeature {
            values: [lat, lon, alt],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.values.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
}

impl AxisRange {
    fn scale(&self, v: f64) -> f64 {
        ((v - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }

    fn include(&mut self, v: f64) {
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }
}

/// Geographic box used for min-max scaling. Altitude is in millimeters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub lat: AxisRange,
    pub lon: AxisRange,
    pub alt: AxisRange,
}

impl GeoBounds {
    pub fn validate(&self) -> Result<()> {
        for (name, axis) in [("lat", self.lat), ("lon", self.lon), ("alt", self.alt)] {
            if !(axis.min.is_finite() && axis.max.is_finite() && axis.min < axis.max) {
                return Err(Error::config(format!(
                    "degenerate {name} bounds [{}, {}]",
                    axis.min, axis.max
                )));
            }
        }
        Ok(())
    }

    /// Tight bounds around `records`. Axes with no spread are widened by
    /// `pad` on each side (degrees, degrees, millimeters) so scaling stays
    /// defined.
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a FlightRecord>) -> Result<Self> {
        const PAD: [f64; 3] = [1e-6, 1e-6, 1.0];
        let mut it = records.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::config("cannot derive GPS bounds from zero records"))?;
        let point = |v: f64| AxisRange { min: v, max: v };
        let mut b = GeoBounds {
            lat: point(first.lat),
            lon: point(first.lon),
            alt: point(first.altitude),
        };
        for r in it {
            b.lat.include(r.lat);
            b.lon.include(r.lon);
            b.alt.include(r.altitude);
        }
        for (axis, pad) in [&mut b.lat, &mut b.lon, &mut b.alt].into_iter().zip(PAD) {
            if axis.min == axis.max {
                axis.min -= pad;
                axis.max += pad;
            }
        }
        Ok(b)
    }
}

/// Affine map of (lat, lon, altitude) into [0, 1]^3, clamping outliers.
pub fn normalize_gps(record: &FlightRecord, bounds: &GeoBounds) -> Result<GpsFeature> {
    bounds.validate()?;
    Ok(GpsFeature::new(
        bounds.lat.scale(record.lat),
        bounds.lon.scale(record.lon),
        bounds.alt.scale(record.altitude),
    ))
}
