use std::collections::HashMap;

use super::{FlightRecord, FrameAnnotation};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_GAP_MS: u64 = 500;

pub fn frame_times(annotations: &[FrameAnnotation]) -> HashMap<String, u64> {
    annotations.iter().map(|a| (a.frame_id.clone(), a.time_ms)).collect()
}

/// Index of the record nearest to `t`; on a tie the earlier record wins.
fn nearest(flight: &[FlightRecord], t: u64) -> Option<usize> {
    if flight.is_empty() {
        return None;
    }
    let after = flight.partition_point(|r| r.t < t);
    if after == 0 {
        return Some(0);
    }
    if after == flight.len() {
        return Some(flight.len() - 1);
    }
    // Several records may share the earlier timestamp; take the first of them.
    let before_t = flight[after - 1].t;
    let before = flight.partition_point(|r| r.t < before_t);
    if flight[after].t - t < t - before_t {
        Some(after)
    } else {
        Some(before)
    }
}

/// Pairs every frame with the flight record nearest in time.
///
/// `flight` must be sorted by `t`. Frames without a record within
/// `max_gap_ms`, or without an entry in `frame_times`, are collected into a
/// single join error.
pub fn join_by_time(
    annotations: &[FrameAnnotation],
    flight: &[FlightRecord],
    frame_times: &HashMap<String, u64>,
    max_gap_ms: u64,
) -> Result<Vec<(FrameAnnotation, FlightRecord)>> {
    if flight.windows(2).any(|w| w[1].t < w[0].t) {
        return Err(Error::Argument("flight records must be sorted by t".into()));
    }
    let mut pairs = Vec::with_capacity(annotations.len());
    let mut unmatched = Vec::new();
    for ann in annotations {
        let matched = frame_times.get(&ann.frame_id).and_then(|&t| {
            nearest(flight, t)
                .filter(|&i| flight[i].t.abs_diff(t) <= max_gap_ms)
                .map(|i| &flight[i])
        });
        match matched {
            Some(rec) => pairs.push((ann.clone(), rec.clone())),
            None => unmatched.push(ann.frame_id.clone()),
        }
    }
    if unmatched.is_empty() {
        Ok(pairs)
    } else {
        Err(Error::Join {
            frames: unmatched,
            max_gap_ms,
        })
    }
}
