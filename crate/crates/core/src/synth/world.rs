//! A rule-consistent synthetic site used for toy data and smoke experiments.
//!
//! The layout scales with the grid; on 8x8 it reads (rows top to bottom):
//!
//! ```text
//! rows 0-1  back zone      no persons; loading dock (cols 5-7) takes van, truck, trailer
//! rows 2-4  car park (cols 0-3), bike park (cols 4-5), plaza (cols 6-7)
//! row  5    bike road      bikes and persons
//! rows 6-7  vehicle road   cars, vans, trucks, buses, motorbikes, trailers
//! ```

use chrono::{Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use super::{RuleKind, ZoneRule};
use crate::error::{Error, Result};
use crate::grid::{BoundingBox, GridCell, GridSpec, GridVector, ObjectCategory};
use crate::ingest::{FlightRecord, FrameAnnotation, GpsFeature, Sample};
use crate::seed;

use ObjectCategory::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Zone {
    Back,
    Dock,
    CarPark,
    BikePark,
    Plaza,
    BikeRoad,
    Road,
}

impl Zone {
    fn allows(self, c: ObjectCategory) -> bool {
        match self {
            Zone::Back => false,
            Zone::Dock => matches!(c, Van | Truck | Trailer),
            Zone::CarPark => matches!(c, Car | Motorbike | Van | Person),
            Zone::BikePark | Zone::BikeRoad => matches!(c, Bike | Person),
            Zone::Plaza => c == Person,
            Zone::Road => matches!(c, Car | Van | Truck | Bus | Motorbike | Trailer),
        }
    }
}

/// Relative frequency of each category in generated scenes.
const CATEGORY_WEIGHTS: [(ObjectCategory, f64); ObjectCategory::COUNT] = [
    (Person, 3.0),
    (Car, 3.0),
    (Van, 1.0),
    (Truck, 1.0),
    (Motorbike, 1.0),
    (Bike, 2.0),
    (Bus, 0.5),
    (Trailer, 0.5),
];

const MIN_OBJECTS: usize = 3;
const MAX_OBJECTS: usize = 8;

#[derive(Debug, Clone)]
pub struct SiteLayout {
    rows: usize,
    cols: usize,
    zones: Vec<Zone>,
}

impl SiteLayout {
    /// Needs at least 4 rows and 4 columns so every zone is nonempty.
    pub fn new(spec: &GridSpec) -> Result<Self> {
        let (rows, cols) = (spec.rows, spec.cols);
        if rows < 4 || cols < 4 || spec.categories != ObjectCategory::COUNT {
            return Err(Error::config(format!(
                "synthetic site needs at least 4x4 cells and {} categories",
                ObjectCategory::COUNT
            )));
        }
        let back_end = rows / 4;
        let park_end = (5 * rows / 8).max(back_end + 1);
        let bike_end = (3 * rows / 4).max(park_end + 1);
        let mut zones = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                zones.push(if r < back_end {
                    if c >= 5 * cols / 8 {
                        Zone::Dock
                    } else {
                        Zone::Back
                    }
                } else if r < park_end {
                    if c < cols / 2 {
                        Zone::CarPark
                    } else if c < 3 * cols / 4 {
                        Zone::BikePark
                    } else {
                        Zone::Plaza
                    }
                } else if r < bike_end {
                    Zone::BikeRoad
                } else {
                    Zone::Road
                });
            }
        }
        Ok(SiteLayout { rows, cols, zones })
    }

    pub fn allows(&self, row: usize, col: usize, category: ObjectCategory) -> bool {
        self.zones[row * self.cols + col].allows(category)
    }

    fn mask(&self, pred: impl Fn(Zone) -> bool) -> Vec<bool> {
        self.zones.iter().map(|&z| pred(z)).collect()
    }

    /// Person in the back zone (including the dock), bike on the vehicle
    /// road, and truck or bike in the car park.
    pub fn default_rules(&self) -> Vec<ZoneRule> {
        let back = self.mask(|z| matches!(z, Zone::Back | Zone::Dock));
        let road = self.mask(|z| z == Zone::Road);
        let car_park = self.mask(|z| z == Zone::CarPark);
        let (r, c) = (self.rows, self.cols);
        [
            (Person, RuleKind::PrivateForbidden, back),
            (Bike, RuleKind::PublicForbidden, road),
            (Truck, RuleKind::Rare, car_park.clone()),
            (Bike, RuleKind::Rare, car_park),
        ]
        .into_iter()
        .map(|(cat, kind, mask)| ZoneRule::new(cat, kind, r, c, mask).expect("layout zones are nonempty"))
        .collect()
    }

    /// Objects of one rule-consistent scene, as (row, col, category); may
    /// repeat a cell.
    pub fn scene_objects(&self, rng: &mut seed::Rng) -> Vec<GridCell> {
        let n = rng.random_range(MIN_OBJECTS..=MAX_OBJECTS);
        (0..n).map(|_| self.random_object(rng)).collect()
    }
}

/// Per-step probabilities of the scene sequence.
const MOVE_P: f64 = 0.2;
const LEAVE_P: f64 = 0.05;
const ARRIVE_P: f64 = 0.1;

impl SiteLayout {
    fn random_cell(&self, category: ObjectCategory, rng: &mut seed::Rng) -> GridCell {
        let cells: Vec<usize> = (0..self.zones.len())
            .filter(|&i| self.zones[i].allows(category))
            .collect();
        let i = cells[rng.random_range(0..cells.len())];
        GridCell {
            row: i / self.cols,
            col: i % self.cols,
            category,
        }
    }

    fn random_object(&self, rng: &mut seed::Rng) -> GridCell {
        let weights = WeightedIndex::new(CATEGORY_WEIGHTS.iter().map(|&(_, w)| w)).expect("positive weights");
        let category = CATEGORY_WEIGHTS[weights.sample(rng)].0;
        self.random_cell(category, rng)
    }

    /// A surveyed site over time: objects persist between frames, drift to
    /// neighbouring allowed cells, arrive and leave, keeping
    /// `MIN_OBJECTS..=MAX_OBJECTS` objects in view.
    pub fn scene_sequence(&self, frames: usize, rng: &mut seed::Rng) -> Vec<Vec<GridCell>> {
        let mut objects = self.scene_objects(rng);
        let mut out = Vec::with_capacity(frames);
        for _ in 0..frames {
            out.push(objects.clone());
            objects.retain(|_| !rng.random_bool(LEAVE_P));
            for o in objects.iter_mut() {
                if rng.random_bool(MOVE_P) {
                    let (dr, dc) = [(-1, 0), (1, 0), (0, -1), (0, 1)][rng.random_range(0..4)];
                    let (r, c) = (o.row as isize + dr, o.col as isize + dc);
                    if r >= 0 && c >= 0 && (r as usize) < self.rows && (c as usize) < self.cols {
                        let (r, c) = (r as usize, c as usize);
                        if self.allows(r, c, o.category) {
                            o.row = r;
                            o.col = c;
                        }
                    }
                }
            }
            while objects.len() < MIN_OBJECTS || (objects.len() < MAX_OBJECTS && rng.random_bool(ARRIVE_P)) {
                objects.push(self.random_object(rng));
            }
        }
        out
    }
}

/// `n` consecutive frames of a rule-consistent scene sequence. The GPS
/// feature follows a slow random walk inside the unit cube.
pub fn generate_samples(spec: &GridSpec, n: usize, seed: u64) -> Result<Vec<Sample>> {
    let layout = SiteLayout::new(spec)?;
    let mut rng = seed::rng(seed);
    let scenes = layout.scene_sequence(n, &mut rng);
    let mut pos: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    scenes
        .into_iter()
        .enumerate()
        .map(|(i, objects)| {
            let mut grid = GridVector::zeros(*spec);
            for cell in &objects {
                grid.set_in_place(cell)?;
            }
            let gps = GpsFeature { values: pos };
            for p in pos.iter_mut() {
                *p = (*p + rng.random_range(-0.02..0.02)).clamp(0.0, 1.0);
            }
            Ok(Sample {
                grid,
                gps,
                source_frame: format!("synthetic-{i:05}"),
            })
        })
        .collect()
}

/// Period between annotated frames in toy recordings.
pub const FRAME_PERIOD_MS: u64 = 200;
/// Period between telemetry records in toy recordings.
pub const FLIGHT_PERIOD_MS: u64 = 20;

/// A toy recording: `frames` annotated frames of the synthetic site and a
/// flight log covering them, circling near 56.2 N 10.18 E at 10-30 m.
pub fn toy_recording(spec: &GridSpec, frames: usize, seed: u64) -> Result<(Vec<FrameAnnotation>, Vec<FlightRecord>)> {
    let layout = SiteLayout::new(spec)?;
    let cell_w = spec.frame_width_px as f64 / spec.cols as f64;
    let cell_h = spec.frame_height_px as f64 / spec.rows as f64;
    let scenes = layout.scene_sequence(frames, &mut seed::stream(seed, &[0]));
    let annotations = scenes
        .into_iter()
        .enumerate()
        .map(|(i, scene)| {
            let mut rng = seed::stream(seed, &[2, i as u64]);
            let boxes = scene
                .into_iter()
                .map(|cell| {
                    let cx = (cell.col as f64 + rng.random_range(0.25..0.75)) * cell_w;
                    let cy = (cell.row as f64 + rng.random_range(0.25..0.75)) * cell_h;
                    let hw = rng.random_range(0.1..0.6) * cell_w;
                    let hh = rng.random_range(0.1..0.6) * cell_h;
                    // Integer pixel boxes, as in the annotation format.
                    let b = BoundingBox::new((cx - hw).floor(), (cy - hh).floor(), (cx + hw).ceil(), (cy + hh).ceil());
                    (b, cell.category)
                })
                .collect();
            FrameAnnotation {
                frame_id: format!("frame-{i:05}"),
                time_ms: i as u64 * FRAME_PERIOD_MS,
                boxes,
            }
        })
        .collect::<Vec<_>>();

    let start = NaiveDate::from_ymd_opt(2019, 6, 14)
        .and_then(|d| d.and_hms_opt(12, 0, 0))
        .expect("valid date");
    let mut rng = seed::stream(seed, &[1]);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let records = (frames as u64 * FRAME_PERIOD_MS / FLIGHT_PERIOD_MS).max(1);
    let flight = (0..records)
        .map(|k| {
            let t = k * FLIGHT_PERIOD_MS;
            let a = phase + t as f64 * 1e-4;
            FlightRecord {
                date_time: start + Duration::milliseconds(t as i64),
                t,
                lat: 56.2 + 1e-3 * a.sin(),
                lon: 10.18 + 2e-3 * a.cos(),
                altitude: 20_000.0 + 10_000.0 * (0.7 * a).sin(),
                roll: 0.05 * a.sin(),
                pitch: 0.05 * a.cos(),
                yaw: (a % std::f64::consts::TAU) - std::f64::consts::PI,
                vx: 2.0 * a.cos().abs(),
                vy: 2.0 * a.sin().abs(),
                vz: rng.random_range(0.0..0.2),
            }
        })
        .collect();
    Ok((annotations, flight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::rasterize;
    use crate::ingest::validate_flight_record;

    #[test]
    fn scenes_obey_layout_and_not_the_rules() {
        let spec = GridSpec::default();
        let layout = SiteLayout::new(&spec).unwrap();
        let rules = layout.default_rules();
        for s in generate_samples(&spec, 200, 3).unwrap() {
            let n = s.grid.popcount();
            assert!((1..=MAX_OBJECTS).contains(&n));
            assert!(s.gps.is_valid());
            for c in s.grid.occupied() {
                assert!(layout.allows(c.row, c.col, c.category));
                for r in &rules {
                    assert!(
                        !(r.category == c.category && r.allows(c.row, c.col)),
                        "{c:?} breaks {r:?}"
                    );
                }
            }
        }
    }

    #[test]
    fn toy_recording_rasterizes_to_layout() {
        let spec = GridSpec::default();
        let layout = SiteLayout::new(&spec).unwrap();
        let (anns, flight) = toy_recording(&spec, 20, 5).unwrap();
        assert_eq!(flight.len(), 200);
        for (i, r) in flight.iter().enumerate() {
            validate_flight_record(r, i).unwrap();
        }
        for a in &anns {
            let r = rasterize(&a.boxes, &spec).unwrap();
            assert_eq!(r.skipped, 0);
            for c in r.grid.occupied() {
                assert!(layout.allows(c.row, c.col, c.category));
            }
        }
    }

    #[test]
    fn every_rule_has_room_on_small_grids() {
        for (r, c) in [(4, 4), (5, 7), (8, 8), (12, 16)] {
            let spec = GridSpec::new(r, c, 640, 480).unwrap();
            let layout = SiteLayout::new(&spec).unwrap();
            assert_eq!(layout.default_rules().len(), 4);
        }
        assert!(SiteLayout::new(&GridSpec::new(3, 8, 640, 480).unwrap()).is_err());
    }
}
