//! Time-consistency validation over a take.
//!
//! A take is one continuous scan of the class. Partially occluded cards are
//! often misread for a frame or two, so an id is accepted only if it was
//! seen in a run of contiguous frames at least [`required_run`] long. The
//! requirement grows with the length of the take.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::codec::{orientation_to_answer, Answer, CodeId, Orientation};
use crate::detector::FrameResult;
use crate::error::{Error, Result};

/// Run-length threshold as `clamp(ceil(fraction * frames), min_run, max_run)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalConfig {
    pub fraction: f64,
    pub min_run: u32,
    pub max_run: u32,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        Self {
            fraction: 0.08,
            min_run: 3,
            max_run: 10,
        }
    }
}

/// Contiguous frames an id needs in a take of `frames_seen` frames.
pub fn required_run(frames_seen: u32, cfg: &TemporalConfig) -> u32 {
    // the epsilon keeps exact products such as 0.08 * 25 from rounding up
    let raw = (cfg.fraction * frames_seen as f64 - 1e-9).ceil().max(0.0) as u32;
    raw.clamp(cfg.min_run, cfg.max_run.max(cfg.min_run))
}

/// One sighting of an id.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sighting {
    /// 1-based position of the frame within the take.
    pub position: u32,
    pub frame_index: u64,
    pub orientation: Orientation,
    pub center: (f64, f64),
    pub diameter: f64,
}

/// Frame results accumulated over one scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Take {
    frames_seen: u32,
    last_frame_index: Option<u64>,
    records: BTreeMap<u8, (CodeId, Vec<Sighting>)>,
    started_at: Option<DateTime<Utc>>,
    ended_at: Option<DateTime<Utc>>,
}

impl Take {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn started(at: DateTime<Utc>) -> Self {
        Self {
            started_at: Some(at),
            ..Self::default()
        }
    }

    pub fn frames_seen(&self) -> u32 {
        self.frames_seen
    }

    pub fn started_at(&self) -> Option<DateTime<Utc>> {
        self.started_at
    }

    pub fn ended_at(&self) -> Option<DateTime<Utc>> {
        self.ended_at
    }

    pub fn close(&mut self, at: DateTime<Utc>) {
        self.ended_at = Some(at);
    }

    /// Ordinals seen at least once, ascending.
    pub fn ids(&self) -> impl Iterator<Item = CodeId> + '_ {
        self.records.values().map(|(id, _)| *id)
    }

    pub fn sightings(&self, ordinal: u8) -> &[Sighting] {
        self.records
            .get(&ordinal)
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&[])
    }

    /// Appends a frame. Frame indices must strictly increase.
    pub fn accumulate(&mut self, fr: &FrameResult) -> Result<()> {
        if let Some(last) = self.last_frame_index {
            if fr.frame_index <= last {
                return Err(Error::OutOfOrderFrame {
                    last,
                    got: fr.frame_index,
                });
            }
        }
        self.last_frame_index = Some(fr.frame_index);
        self.frames_seen += 1;
        let position = self.frames_seen;
        for d in &fr.detections {
            let (_, list) = self
                .records
                .entry(d.id.ordinal())
                .or_insert_with(|| (d.id, Vec::new()));
            if list.last().is_some_and(|s| s.position == position) {
                continue;
            }
            list.push(Sighting {
                position,
                frame_index: fr.frame_index,
                orientation: d.orientation,
                center: d.center,
                diameter: d.diameter,
            });
        }
        Ok(())
    }
}

/// An id that passed the temporal filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcceptedDetection {
    pub id: CodeId,
    pub answer: Answer,
    pub sightings: u32,
    pub longest_run: u32,
    pub last_center: (f64, f64),
    pub last_seen_frame: u64,
}

// Longest run of consecutive positions; ties go to the most recent run.
fn longest_run(sightings: &[Sighting]) -> &[Sighting] {
    let mut best = (0, 0);
    let mut start = 0;
    for i in 1..=sightings.len() {
        let breaks = i == sightings.len() || sightings[i].position != sightings[i - 1].position + 1;
        if breaks {
            if i - start >= best.1 - best.0 {
                best = (start, i);
            }
            start = i;
        }
    }
    &sightings[best.0..best.1]
}

// Most frequent answer; ties go to the answer seen most recently.
fn modal_answer(run: &[Sighting]) -> Answer {
    let mut counts = [0u32; 4];
    let mut last_seen = [0usize; 4];
    for (i, s) in run.iter().enumerate() {
        let a = orientation_to_answer(s.orientation).index();
        counts[a] += 1;
        last_seen[a] = i + 1;
    }
    let best = (0..4)
        .max_by_key(|&a| (counts[a], last_seen[a]))
        .unwrap_or(0);
    Answer::from_index(best)
}

fn accept(id: CodeId, sightings: &[Sighting], run: &[Sighting]) -> AcceptedDetection {
    let last = run.last().expect("non-empty run");
    AcceptedDetection {
        id,
        answer: modal_answer(run),
        sightings: sightings.len() as u32,
        longest_run: run.len() as u32,
        last_center: last.center,
        last_seen_frame: last.frame_index,
    }
}

/// Ids whose longest contiguous run meets [`required_run`], by ordinal.
pub fn finalize(take: &Take, cfg: &TemporalConfig) -> Vec<AcceptedDetection> {
    let needed = required_run(take.frames_seen.max(1), cfg) as usize;
    take.records
        .values()
        .filter_map(|(id, sightings)| {
            let run = longest_run(sightings);
            (run.len() >= needed).then(|| accept(*id, sightings, run))
        })
        .collect()
}

/// Accepts every id seen at least once, with the modal answer over all its
/// sightings. For still photographs, where there is no frame sequence.
pub fn finalize_single_shot(take: &Take) -> Vec<AcceptedDetection> {
    take.records
        .values()
        .filter(|(_, s)| !s.is_empty())
        .map(|(id, sightings)| {
            let mut a = accept(*id, sightings, sightings);
            a.longest_run = longest_run(sightings).len() as u32;
            a
        })
        .collect()
}
