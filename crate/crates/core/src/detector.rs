//! Per-frame code localization and decoding.
//!
//! 1. The frame is binarized (and optionally repaired with a 3x3
//!    closing/opening pass).
//! 2. Rows and columns are scanned for white-black-white runs whose widths
//!    fit the bullseye profile. A point becomes a [`Candidate`] only if the
//!    horizontal and the vertical scans both mark it, which suppresses the
//!    flood of horizontal-only hits on striped backgrounds.
//! 3. [`decode_at`] grows the black core from each candidate, checks that it
//!    is round, reads the 13 data sectors and canonicalizes the ring word,
//!    which also yields the card orientation.

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::codec::{self, Answer, CodeId, CodePattern, Orientation, SECTORS, SECTOR_ANGLE};
use crate::error::Result;
use crate::imaging::{binarize_adaptive, morph_close_open, BinaryImage, GrayImage};
use crate::marker::{self, direction};

/// Tunables for candidate search and decoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Run the closing/opening pass after binarization.
    pub repair_hairlines: bool,
    /// A flanking white run must be at least this fraction of the black run.
    pub min_white_ratio: f64,
    /// Flanking white runs up to this fraction of the black run are
    /// "bounded" by the data ring; longer ones continue through a white
    /// data sector into the quiet zone and are only checked against
    /// `min_white_ratio`.
    pub max_white_ratio: f64,
    /// Two bounded flanks must agree within this relative difference.
    pub max_white_asymmetry: f64,
    /// Horizontal and vertical marks within this many pixels on both axes
    /// intersect; also the candidate deduplication radius.
    pub match_radius: f64,
    /// Reject a core whose 8 radial edge estimates spread more than this
    /// fraction of their mean.
    pub max_radial_spread: f64,
    /// Smallest decodable marker diameter in pixels.
    pub min_diameter: f64,
    /// Fraction of white-ring probes that must read white.
    pub min_ring_white: f64,
    /// Fraction of quiet-zone probes that must read white.
    pub min_quiet_white: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            repair_hairlines: false,
            min_white_ratio: 0.3,
            max_white_ratio: 0.9,
            max_white_asymmetry: 0.4,
            match_radius: 2.0,
            max_radial_spread: 0.25,
            min_diameter: 24.0,
            min_ring_white: 0.85,
            min_quiet_white: 0.75,
        }
    }
}

impl DetectorConfig {
    // The core chord is 2u = diameter/4; allow a pixel of binarization loss.
    fn min_black_run(&self) -> u32 {
        ((self.min_diameter / 4.0).floor() as u32)
            .saturating_sub(1)
            .max(2)
    }

    /// Whether a white-black-white run triple fits the bullseye profile.
    pub fn runs_match(&self, white_before: u32, black: u32, white_after: u32) -> bool {
        if black < self.min_black_run() {
            return false;
        }
        let b = black as f64;
        let (w1, w2) = (white_before as f64, white_after as f64);
        let lo = self.min_white_ratio * b;
        if w1 < lo || w2 < lo {
            return false;
        }
        let hi = self.max_white_ratio * b;
        if w1 <= hi && w2 <= hi {
            (w1 - w2).abs() <= self.max_white_asymmetry * w1.max(w2)
        } else {
            true
        }
    }
}

/// A potential code center.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: f64,
    pub y: f64,
    /// Unit size estimated from the black run widths.
    pub run_unit: f64,
}

/// One decoded code in one frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub id: CodeId,
    pub center: (f64, f64),
    pub diameter: f64,
    pub orientation: Orientation,
    pub frame_index: u64,
}

impl Detection {
    pub fn answer(&self) -> Answer {
        codec::orientation_to_answer(self.orientation)
    }
}

/// Wall-clock time per pipeline stage, in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTimings {
    pub binarize_us: u64,
    pub morphology_us: u64,
    pub candidates_us: u64,
    pub decode_us: u64,
    pub total_us: u64,
}

/// Everything found in one frame. At most one detection per id.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameResult {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
    pub candidate_count: usize,
    pub timings: StageTimings,
}

impl FrameResult {
    /// A result carrying only detections, e.g. from a statistical model.
    pub fn from_detections(frame_index: u64, detections: Vec<Detection>) -> Self {
        Self {
            frame_index,
            detections,
            candidate_count: 0,
            timings: StageTimings::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Mark {
    x: f64,
    y: f64,
    len: u32,
}

#[derive(Clone, Copy, Default)]
struct Run {
    white: bool,
    start: u32,
    len: u32,
}

/// Tracks the last three runs along one scanline.
#[derive(Clone, Copy, Default)]
struct RunTracker {
    current: Run,
    prev: Option<Run>,
    prev2: Option<Run>,
}

impl RunTracker {
    #[inline]
    fn push(&mut self, white: bool, pos: u32, cfg: &DetectorConfig) -> Option<(u32, u32)> {
        if self.current.len > 0 && self.current.white == white {
            self.current.len += 1;
            return None;
        }
        let hit = self.close(cfg);
        self.current = Run {
            white,
            start: pos,
            len: 1,
        };
        hit
    }

    /// Ends the current run; returns the black run (start, len) if the
    /// three most recent runs match.
    #[inline]
    fn close(&mut self, cfg: &DetectorConfig) -> Option<(u32, u32)> {
        if self.current.len == 0 {
            return None;
        }
        let mut hit = None;
        if let (Some(w1), Some(b)) = (self.prev2, self.prev) {
            if self.current.white
                && w1.white
                && !b.white
                && cfg.runs_match(w1.len, b.len, self.current.len)
            {
                hit = Some((b.start, b.len));
            }
        }
        self.prev2 = self.prev;
        self.prev = Some(self.current);
        self.current = Run::default();
        hit
    }
}

fn horizontal_marks(b: &BinaryImage, cfg: &DetectorConfig) -> Vec<Mark> {
    let (w, h) = (b.width(), b.height());
    let mut marks = Vec::new();
    let mut push = |y: usize, hit: Option<(u32, u32)>| {
        if let Some((start, len)) = hit {
            marks.push(Mark {
                x: start as f64 + len as f64 / 2.0,
                y: y as f64 + 0.5,
                len,
            });
        }
    };
    for y in 0..h {
        let row = &b.data()[y * w..(y + 1) * w];
        let mut t = RunTracker::default();
        for (x, &v) in row.iter().enumerate() {
            let hit = t.push(v != 0, x as u32, cfg);
            push(y, hit);
        }
        let hit = t.close(cfg);
        push(y, hit);
    }
    marks
}

fn vertical_marks(b: &BinaryImage, cfg: &DetectorConfig) -> Vec<Mark> {
    let (w, h) = (b.width(), b.height());
    let mut marks = Vec::new();
    let mut trackers = vec![RunTracker::default(); w];
    let mut push = |x: usize, hit: Option<(u32, u32)>| {
        if let Some((start, len)) = hit {
            marks.push(Mark {
                x: x as f64 + 0.5,
                y: start as f64 + len as f64 / 2.0,
                len,
            });
        }
    };
    for y in 0..h {
        let row = &b.data()[y * w..(y + 1) * w];
        for (x, (t, &v)) in trackers.iter_mut().zip(row).enumerate() {
            let hit = t.push(v != 0, y as u32, cfg);
            push(x, hit);
        }
    }
    for (x, t) in trackers.iter_mut().enumerate() {
        let hit = t.close(cfg);
        push(x, hit);
    }
    marks
}

/// Uniform grid for radius queries over points.
struct Grid {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid {
    fn new(cell: f64) -> Self {
        Self {
            cell: cell.max(1.0),
            buckets: HashMap::new(),
        }
    }

    fn key(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.cell).floor() as i64,
            (y / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, x: f64, y: f64, idx: usize) {
        let k = self.key(x, y);
        self.buckets.entry(k).or_default().push(idx);
    }

    fn near(&self, x: f64, y: f64) -> impl Iterator<Item = usize> + '_ {
        let (kx, ky) = self.key(x, y);
        (-1..=1)
            .flat_map(move |dy| (-1..=1).map(move |dx| (kx + dx, ky + dy)))
            .filter_map(|k| self.buckets.get(&k))
            .flatten()
            .copied()
    }
}

// Keeps points in the given order, dropping any within `radius` of one kept.
fn dedup(points: impl IntoIterator<Item = Candidate>, radius: f64) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::new();
    let mut grid = Grid::new(radius);
    let r2 = radius * radius;
    for p in points {
        let close = grid.near(p.x, p.y).any(|i| {
            let q = kept[i];
            (q.x - p.x).powi(2) + (q.y - p.y).powi(2) <= r2
        });
        if !close {
            grid.insert(p.x, p.y, kept.len());
            kept.push(p);
        }
    }
    kept
}

// Horizontal marks deduplicated widest run first, so the chord through a
// core's center represents it.
fn horizontal_representatives(b: &BinaryImage, cfg: &DetectorConfig) -> Vec<Mark> {
    let mut marks = horizontal_marks(b, cfg);
    marks.sort_by_key(|m| std::cmp::Reverse(m.len));
    let kept = dedup(
        marks.iter().map(|m| Candidate {
            x: m.x,
            y: m.y,
            run_unit: m.len as f64,
        }),
        cfg.match_radius,
    );
    kept.into_iter()
        .map(|c| Mark {
            x: c.x,
            y: c.y,
            len: c.run_unit as u32,
        })
        .collect()
}

/// Candidates from the horizontal scan alone.
///
/// This is the single-axis search that floods on vertical-line backgrounds;
/// it is exposed for diagnostics and comparison.
pub fn find_candidates_horizontal(b: &BinaryImage, cfg: &DetectorConfig) -> Vec<Candidate> {
    horizontal_representatives(b, cfg)
        .into_iter()
        .map(|m| Candidate {
            x: m.x,
            y: m.y,
            run_unit: m.len as f64 / 2.0,
        })
        .collect()
}

/// Number of raw horizontal-scan marks (before deduplication).
pub fn count_horizontal_marks(b: &BinaryImage, cfg: &DetectorConfig) -> usize {
    horizontal_marks(b, cfg).len()
}

/// Horizontal candidates confirmed by a vertical mark within the match
/// radius. The result is a subset of [`find_candidates_horizontal`] up to
/// that radius.
pub fn find_candidates(b: &BinaryImage, cfg: &DetectorConfig) -> Vec<Candidate> {
    let h = horizontal_representatives(b, cfg);
    let v = vertical_marks(b, cfg);
    let radius = cfg.match_radius;

    let mut grid = Grid::new(radius);
    for (i, m) in v.iter().enumerate() {
        grid.insert(m.x, m.y, i);
    }

    // Per-axis test: representatives can sit `radius` rows from the core's
    // center row, and the vertical mark half a column off it.
    let mut out = Vec::new();
    for hm in &h {
        let best = grid
            .near(hm.x, hm.y)
            .filter(|&i| (v[i].x - hm.x).abs() <= radius && (v[i].y - hm.y).abs() <= radius)
            .map(|i| {
                let vm = &v[i];
                ((vm.x - hm.x).powi(2) + (vm.y - hm.y).powi(2), i)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, i)) = best {
            let vm = &v[i];
            out.push(Candidate {
                // column from the horizontal run, row from the vertical run
                x: hm.x,
                y: vm.y,
                run_unit: (hm.len + vm.len) as f64 / 4.0,
            });
        }
    }
    dedup(out, radius)
}

/// Black core grown from a seed: centroid and area.
struct Core {
    cx: f64,
    cy: f64,
    area: usize,
}

fn grow_core(b: &BinaryImage, c: &Candidate) -> Option<Core> {
    let (w, h) = (b.width() as isize, b.height() as isize);
    let sx = c.x.floor() as isize;
    let sy = c.y.floor() as isize;
    let seed = [(0, 0), (-1, 0), (0, -1), (1, 0), (0, 1)]
        .into_iter()
        .map(|(dx, dy)| (sx + dx, sy + dy))
        .find(|&(x, y)| !b.is_white_at(x, y))?;

    let half = (3.0 * c.run_unit).ceil() as isize + 2;
    let (x0, y0) = (seed.0 - half, seed.1 - half);
    let side = (2 * half + 1) as usize;
    let mut visited = vec![false; side * side];
    let local = |x: isize, y: isize| -> Option<usize> {
        let (lx, ly) = (x - x0, y - y0);
        if lx < 0 || ly < 0 || lx >= side as isize || ly >= side as isize {
            None
        } else {
            Some(ly as usize * side + lx as usize)
        }
    };

    let mut stack = vec![seed];
    visited[local(seed.0, seed.1)?] = true;
    let (mut sum_x, mut sum_y, mut area) = (0.0, 0.0, 0usize);
    while let Some((x, y)) = stack.pop() {
        sum_x += x as f64 + 0.5;
        sum_y += y as f64 + 0.5;
        area += 1;
        for (nx, ny) in [(x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)] {
            if nx < 0 || ny < 0 || nx >= w || ny >= h || b.is_white_at(nx, ny) {
                continue;
            }
            // touching the window edge means the blob is far larger than the
            // runs suggested
            let idx = local(nx, ny)?;
            if !visited[idx] {
                visited[idx] = true;
                stack.push((nx, ny));
            }
        }
    }
    Some(Core {
        cx: sum_x / area as f64,
        cy: sum_y / area as f64,
        area,
    })
}

// Distance from the center to the first black-to-white crossing along `angle`.
fn edge_distance(b: &BinaryImage, cx: f64, cy: f64, angle: f64, limit: f64) -> Option<f64> {
    const STEP: f64 = 0.25;
    let (dx, dy) = direction(angle);
    let mut prev_t = 0.0;
    let mut prev_v = b.sample(cx, cy);
    let mut t = STEP;
    while t <= limit {
        let v = b.sample(cx + dx * t, cy + dy * t);
        if v >= 0.5 {
            if prev_v >= 0.5 {
                return Some(prev_t);
            }
            return Some(prev_t + (0.5 - prev_v) / (v - prev_v) * STEP);
        }
        prev_t = t;
        prev_v = v;
        t += STEP;
    }
    None
}

fn white_fraction(b: &BinaryImage, cx: f64, cy: f64, radius: f64, probes: usize) -> f64 {
    let white = (0..probes)
        .filter(|&k| {
            let (dx, dy) = direction(k as f64 * std::f64::consts::TAU / probes as f64);
            b.sample(cx + dx * radius, cy + dy * radius) >= 0.5
        })
        .count();
    white as f64 / probes as f64
}

const PHASE_STEPS: usize = 12;

/// Finds the sector-boundary phase in `[0, SECTOR_ANGLE)` that best splits
/// the data ring into uniform sectors.
fn ring_phase(b: &BinaryImage, cx: f64, cy: f64, radius: f64) -> f64 {
    let n = SECTORS as usize * PHASE_STEPS;
    let step = SECTOR_ANGLE / PHASE_STEPS as f64;
    let signed: Vec<f64> = (0..n)
        .map(|i| {
            let (dx, dy) = direction((i as f64 + 0.5) * step);
            2.0 * b.sample(cx + dx * radius, cy + dy * radius) - 1.0
        })
        .collect();
    let scores: Vec<f64> = (0..PHASE_STEPS)
        .map(|j| {
            (0..SECTORS as usize)
                .map(|k| {
                    let s: f64 = (0..PHASE_STEPS)
                        .map(|i| signed[(j + k * PHASE_STEPS + i) % n])
                        .sum();
                    s.abs()
                })
                .sum()
        })
        .collect();
    let best = scores.iter().cloned().fold(f64::MIN, f64::max);
    let tied: Vec<bool> = scores.iter().map(|&s| s >= best - 1e-9).collect();

    // middle of the longest circular run of tied phases
    let (mut best_start, mut best_len) = (0, PHASE_STEPS);
    if tied.iter().any(|t| !t) {
        best_len = 0;
        for start in 0..PHASE_STEPS {
            if !tied[start] || tied[(start + PHASE_STEPS - 1) % PHASE_STEPS] {
                continue;
            }
            let len = (0..PHASE_STEPS)
                .take_while(|&i| tied[(start + i) % PHASE_STEPS])
                .count();
            if len > best_len {
                best_len = len;
                best_start = start;
            }
        }
    }
    let mid = best_start as f64 + (best_len as f64 - 1.0) / 2.0;
    mid * step
}

/// Attempts to decode a code around a candidate.
///
/// Returns `None` when the bullseye does not verify or the ring word is not
/// a valid code. The reported center is the black-core centroid.
pub fn decode_at(
    b: &BinaryImage,
    c: &Candidate,
    cfg: &DetectorConfig,
    frame_index: u64,
) -> Option<Detection> {
    let core = grow_core(b, c)?;
    let (cx, cy) = (core.cx, core.cy);
    let area_unit = (core.area as f64 / std::f64::consts::PI).sqrt();

    let limit = 2.5 * area_unit + 2.0;
    let radii: Vec<f64> = (0..8)
        .map(|k| edge_distance(b, cx, cy, k as f64 * std::f64::consts::FRAC_PI_4, limit))
        .collect::<Option<_>>()?;
    let mean = radii.iter().sum::<f64>() / radii.len() as f64;
    let (lo, hi) = radii
        .iter()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    if mean <= 0.0 || (hi - lo) / mean > cfg.max_radial_spread {
        return None;
    }

    let unit = 0.5 * (mean + area_unit);
    if unit * marker::DIAMETER_UNITS < cfg.min_diameter {
        return None;
    }
    if white_fraction(b, cx, cy, 1.5 * unit, 16) < cfg.min_ring_white {
        return None;
    }
    if white_fraction(b, cx, cy, 3.5 * unit, 16) < cfg.min_quiet_white {
        return None;
    }

    let radius = marker::DATA_SAMPLE_RADIUS * unit;
    let phase = ring_phase(b, cx, cy, radius);
    let mut bits = 0u16;
    for k in 0..SECTORS {
        let white = [0.25, 0.5, 0.75]
            .iter()
            .filter(|&&f| {
                let (dx, dy) = direction(phase + (k as f64 + f) * SECTOR_ANGLE);
                b.sample(cx + dx * radius, cy + dy * radius) >= 0.5
            })
            .count();
        if white >= 2 {
            bits |= 1 << k;
        }
    }
    let (id, rotation) = codec::canonicalize(CodePattern::new(bits)).ok()?;
    Some(Detection {
        id,
        center: (cx, cy),
        diameter: unit * marker::DIAMETER_UNITS,
        orientation: Orientation::new(rotation as f64 * SECTOR_ANGLE + phase),
        frame_index,
    })
}

/// Binarizes a frame, applying the repair pass when configured.
pub fn preprocess(g: &GrayImage, cfg: &DetectorConfig) -> BinaryImage {
    let b = binarize_adaptive(g);
    if cfg.repair_hairlines {
        morph_close_open(&b)
    } else {
        b
    }
}

/// Full per-frame pipeline. Detections are sorted by ordinal.
pub fn scan_frame(g: &GrayImage, cfg: &DetectorConfig, frame_index: u64) -> Result<FrameResult> {
    let t0 = Instant::now();
    let binary = binarize_adaptive(g);
    let t1 = Instant::now();
    let binary = if cfg.repair_hairlines {
        morph_close_open(&binary)
    } else {
        binary
    };
    let t2 = Instant::now();
    let candidates = find_candidates(&binary, cfg);
    let t3 = Instant::now();

    // per id: (distance from its candidate, detection)
    let mut best: HashMap<u8, (f64, Detection)> = HashMap::new();
    for c in &candidates {
        if let Some(d) = decode_at(&binary, c, cfg, frame_index) {
            let dist = (d.center.0 - c.x).powi(2) + (d.center.1 - c.y).powi(2);
            best.entry(d.id.ordinal())
                .and_modify(|e| {
                    if dist < e.0 {
                        *e = (dist, d);
                    }
                })
                .or_insert((dist, d));
        }
    }
    let mut detections: Vec<Detection> = best.into_values().map(|(_, d)| d).collect();
    detections.sort_by_key(|d| d.id.ordinal());
    let t4 = Instant::now();

    let us = |a: Instant, b: Instant| b.duration_since(a).as_micros() as u64;
    Ok(FrameResult {
        frame_index,
        detections,
        candidate_count: candidates.len(),
        timings: StageTimings {
            binarize_us: us(t0, t1),
            morphology_us: us(t1, t2),
            candidates_us: us(t2, t3),
            decode_us: us(t3, t4),
            total_us: us(t0, t4),
        },
    })
}
