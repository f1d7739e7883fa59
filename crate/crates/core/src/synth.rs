//! Synthetic classroom scenes with exact ground truth.
//!
//! Scenes are plain data ([`SceneSpec`]) so they can be written by hand as
//! TOML:
//!
//! ```toml
//! width = 640
//! height = 480
//! seed = 7
//! background = { kind = "vertical_stripes", period = 16 }
//! illumination = { left = 0.6, right = 1.0 }
//!
//! [[placements]]
//! ordinal = 12
//! x = 200.0
//! y = 240.0
//! diameter = 64.0
//! theta = 1.5708
//! occlusion = { fraction = 0.5, from = "left" }
//! ```
//!
//! Each placement is a white card (a square `card_scale` times the code
//! diameter, rotated with the code) carrying one marker. Occluders are flat
//! white rectangles over the code's bounding box. Rendering is 4x4
//! supersampled and fully determined by the spec and its seed.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{orientation_to_answer, Answer, CodeId, Orientation};
use crate::detector::{Detection, FrameResult};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::marker;

const SUPERSAMPLE: usize = 4;
const PAPER: f64 = 255.0;
const INK: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    /// Fraction of the code's bounding box covered, in `[0, 1]`.
    pub fraction: f64,
    pub from: Side,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub ordinal: u8,
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    /// Counter-clockwise card rotation in radians.
    #[serde(default)]
    pub theta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occlusion: Option<Occlusion>,
}

impl Placement {
    pub fn new(ordinal: u8, x: f64, y: f64, diameter: f64, theta: f64) -> Self {
        Self {
            ordinal,
            x,
            y,
            diameter,
            theta,
            occlusion: None,
        }
    }

    pub fn answer(&self) -> Answer {
        orientation_to_answer(Orientation::new(self.theta))
    }

    fn is_occluded(&self) -> bool {
        self.occlusion.is_some_and(|o| o.fraction > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Plain {
        #[serde(default = "default_level")]
        level: u8,
    },
    /// Dark vertical bars, `duty` of each period dark.
    VerticalStripes {
        period: usize,
        #[serde(default = "default_duty")]
        duty: f64,
    },
    /// Gaussian per-pixel noise around a mid level.
    PhotoNoise {
        sigma: f64,
        #[serde(default = "default_level")]
        level: u8,
    },
}

fn default_level() -> u8 {
    200
}

fn default_duty() -> f64 {
    0.625
}

impl Default for Background {
    fn default() -> Self {
        Background::Plain {
            level: default_level(),
        }
    }
}

/// Linear left-to-right gain applied to the whole frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Illumination {
    pub left: f64,
    pub right: f64,
}

impl Default for Illumination {
    fn default() -> Self {
        Self {
            left: 1.0,
            right: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub illumination: Illumination,
    #[serde(default)]
    pub seed: u64,
    /// Card side length as a multiple of the code diameter.
    #[serde(default = "default_card_scale")]
    pub card_scale: f64,
    #[serde(default)]
    pub placements: Vec<Placement>,
}

fn default_card_scale() -> f64 {
    1.25
}

impl SceneSpec {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            background: Background::default(),
            illumination: Illumination::default(),
            seed: 0,
            card_scale: default_card_scale(),
            placements: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidScene(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene specs serialize")
    }

    /// Checks the invariants `render_scene` relies on.
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::EmptyImage);
        }
        if let Background::VerticalStripes { period, duty } = self.background {
            if period == 0 || !(0.0..=1.0).contains(&duty) {
                return Err(Error::InvalidScene(format!(
                    "stripe period {period} / duty {duty} out of range"
                )));
            }
        }
        for (index, p) in self.placements.iter().enumerate() {
            CodeId::from_ordinal(p.ordinal as i64)?;
            if !(p.diameter >= 8.0) {
                return Err(Error::InvalidScene(format!(
                    "placement {index}: diameter {} below 8 px",
                    p.diameter
                )));
            }
            if let Some(o) = p.occlusion {
                if !(0.0..=1.0).contains(&o.fraction) {
                    return Err(Error::InvalidScene(format!(
                        "placement {index}: occlusion fraction {} outside [0, 1]",
                        o.fraction
                    )));
                }
            }
            let r = p.diameter / 2.0;
            if p.x - r < 0.0
                || p.y - r < 0.0
                || p.x + r > self.width as f64
                || p.y + r > self.height as f64
            {
                return Err(Error::PlacementOutOfBounds {
                    index,
                    width: self.width,
                    height: self.height,
                });
            }
        }
        Ok(())
    }
}

/// Expected detection for one placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedCode {
    pub ordinal: u8,
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    pub theta: f64,
    pub answer: Answer,
    /// False for occluded codes, which the detector may miss or misread.
    pub required: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub codes: Vec<ExpectedCode>,
}

impl GroundTruth {
    pub fn required(&self) -> impl Iterator<Item = &ExpectedCode> {
        self.codes.iter().filter(|c| c.required)
    }
}

fn background_value(bg: &Background, x: usize, rng: &mut ChaCha8Rng) -> f64 {
    match *bg {
        Background::Plain { level } => level as f64,
        Background::VerticalStripes { period, duty } => {
            let dark = (period as f64 * duty).round() as usize;
            if x % period < dark {
                INK
            } else {
                PAPER
            }
        }
        Background::PhotoNoise { sigma, level } => {
            // Box-Muller
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            level as f64 + sigma * (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
        }
    }
}

fn paint_placement(canvas: &mut [f64], spec: &SceneSpec, p: &Placement) {
    let id = CodeId::from_ordinal(p.ordinal as i64).expect("validated");
    let pattern = id.canonical();
    let unit = p.diameter / marker::DIAMETER_UNITS;
    let half_card = 0.5 * spec.card_scale.max(1.0) * p.diameter;
    let reach = half_card * std::f64::consts::SQRT_2;
    let (sin_t, cos_t) = p.theta.sin_cos();
    let x0 = (p.x - reach).floor().max(0.0) as usize;
    let y0 = (p.y - reach).floor().max(0.0) as usize;
    let x1 = ((p.x + reach).ceil() as usize).min(spec.width);
    let y1 = ((p.y + reach).ceil() as usize).min(spec.height);
    let ss = SUPERSAMPLE as f64;
    for py in y0..y1 {
        for px in x0..x1 {
            let mut covered = 0usize;
            let mut sum = 0.0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let dx = px as f64 + (sx as f64 + 0.5) / ss - p.x;
                    let dy = py as f64 + (sy as f64 + 0.5) / ss - p.y;
                    // card frame: undo the counter-clockwise rotation
                    let cxp = dx * cos_t - dy * sin_t;
                    let cyp = dx * sin_t + dy * cos_t;
                    if cxp.abs() > half_card || cyp.abs() > half_card {
                        continue;
                    }
                    covered += 1;
                    let r = (dx * dx + dy * dy).sqrt() / unit;
                    let card_angle = marker::angle_of(dx, dy) - p.theta;
                    let white = marker::shade(pattern, card_angle, r).unwrap_or(true);
                    sum += if white { PAPER } else { INK };
                }
            }
            if covered > 0 {
                let n = (SUPERSAMPLE * SUPERSAMPLE) as f64;
                let idx = py * spec.width + px;
                canvas[idx] = canvas[idx] * (1.0 - covered as f64 / n) + sum / n;
            }
        }
    }
    if let Some(o) = p.occlusion.filter(|o| o.fraction > 0.0) {
        let (l, t) = (p.x - p.diameter / 2.0, p.y - p.diameter / 2.0);
        let cover = o.fraction * p.diameter;
        let (rx0, ry0, rx1, ry1) = match o.from {
            Side::Left => (l, t, l + cover, t + p.diameter),
            Side::Right => (l + p.diameter - cover, t, l + p.diameter, t + p.diameter),
            Side::Top => (l, t, l + p.diameter, t + cover),
            Side::Bottom => (l, t + p.diameter - cover, l + p.diameter, t + p.diameter),
        };
        fill_rect(canvas, spec.width, spec.height, (rx0, ry0, rx1, ry1), PAPER);
    }
}

// Fills with fractional edge coverage.
fn fill_rect(canvas: &mut [f64], w: usize, h: usize, r: (f64, f64, f64, f64), value: f64) {
    let (x0, y0, x1, y1) = r;
    let cov =
        |lo: f64, hi: f64, p: usize| (hi.min(p as f64 + 1.0) - lo.max(p as f64)).clamp(0.0, 1.0);
    for py in (y0.floor().max(0.0) as usize)..(y1.ceil().max(0.0) as usize).min(h) {
        let cy = cov(y0, y1, py);
        for px in (x0.floor().max(0.0) as usize)..(x1.ceil().max(0.0) as usize).min(w) {
            let c = cy * cov(x0, x1, px);
            let idx = py * w + px;
            canvas[idx] = canvas[idx] * (1.0 - c) + value * c;
        }
    }
}

/// Renders a scene and its ground truth.
pub fn render_scene(spec: &SceneSpec) -> Result<(GrayImage, GroundTruth)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut canvas = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            canvas[y * w + x] = background_value(&spec.background, x, &mut rng);
        }
    }
    for p in &spec.placements {
        paint_placement(&mut canvas, spec, p);
    }
    let Illumination { left, right } = spec.illumination;
    let data = canvas
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let t = ((i % w) as f64 + 0.5) / w as f64;
            let gain = left + (right - left) * t;
            (v * gain).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    let image = GrayImage::new(w, h, data)?;
    let truth = GroundTruth {
        codes: spec
            .placements
            .iter()
            .map(|p| ExpectedCode {
                ordinal: p.ordinal,
                x: p.x,
                y: p.y,
                diameter: p.diameter,
                theta: Orientation::new(p.theta).radians(),
                answer: p.answer(),
                required: !p.is_occluded(),
            })
            .collect(),
    };
    Ok((image, truth))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Row,
    Column,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    White,
    Black,
}

/// Forces one 1-px row or column to white or black across a placement's
/// extent. `offset` is the line position relative to the code center, in
/// pixels (0 runs through the center).
pub fn hairline_defect(
    image: &GrayImage,
    placement: &Placement,
    axis: Axis,
    polarity: Polarity,
    offset: f64,
) -> Result<GrayImage> {
    let (w, h) = (image.width(), image.height());
    let out_of_bounds = || Error::PlacementOutOfBounds {
        index: 0,
        width: w,
        height: h,
    };
    let r = placement.diameter / 2.0;
    let (along_center, line_center, along_len, line_len) = match axis {
        Axis::Column => (placement.y, placement.x, h, w),
        Axis::Row => (placement.x, placement.y, w, h),
    };
    let line = (line_center + offset).floor();
    if line < 0.0 || line >= line_len as f64 {
        return Err(out_of_bounds());
    }
    let lo = (along_center - r).floor();
    let hi = (along_center + r).ceil();
    if lo < 0.0 || hi > along_len as f64 {
        return Err(out_of_bounds());
    }
    let value = match polarity {
        Polarity::White => 255,
        Polarity::Black => 0,
    };
    let mut out = image.clone();
    for t in lo as usize..hi as usize {
        match axis {
            Axis::Column => out.set(line as usize, t, value),
            Axis::Row => out.set(t, line as usize, value),
        }
    }
    Ok(out)
}

/// Statistical model of decoding flicker under partial occlusion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlickerModel {
    /// Spurious ordinals and the fraction of frames each appears in.
    pub spurious: Vec<(u8, f64)>,
    /// Longest run of consecutive frames a spurious id may occupy.
    pub run_cap: usize,
    /// Frame positions (0-based) where every persistent code is missed.
    #[serde(default)]
    pub dropouts: Vec<usize>,
    pub seed: u64,
}

impl FlickerModel {
    /// The spurious decode frequencies observed for one partially occluded
    /// code over 123 scan cycles.
    pub fn occlusion_flicker(seed: u64) -> Self {
        Self {
            spurious: vec![
                (32, 0.0082),
                (33, 0.0082),
                (35, 0.1789),
                (36, 0.0894),
                (37, 0.0325),
                (40, 0.0813),
            ],
            run_cap: 2,
            dropouts: Vec::new(),
            seed,
        }
    }
}

/// Chooses `count` of `frames` positions, grouped in runs of at most
/// `run_cap` separated by at least one gap.
fn scatter(count: usize, frames: usize, run_cap: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if count == 0 || frames == 0 {
        return Vec::new();
    }
    let cap = run_cap.max(1);
    let count = count.min(frames);
    // split into runs, ensuring the gaps still fit
    let mut runs: Vec<usize>;
    loop {
        runs = Vec::new();
        let mut left = count;
        while left > 0 {
            let len = rng.gen_range(1..=cap.min(left));
            runs.push(len);
            left -= len;
        }
        if count + runs.len() - 1 <= frames || runs.len() == 1 {
            break;
        }
    }
    let k = runs.len();
    let mut free = frames.saturating_sub(count + k - 1);
    // random composition of the free slots over k + 1 gaps
    let mut extra = vec![0usize; k + 1];
    while free > 0 {
        extra[rng.gen_range(0..=k)] += 1;
        free -= 1;
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = extra[0];
    for (i, len) in runs.iter().enumerate() {
        out.extend(pos..pos + len);
        pos += len + 1 + extra[i + 1];
    }
    out.truncate(count);
    out
}

/// Generates per-frame detection lists for a take over `base`.
///
/// Every placement of `base` is detected in every frame except the model's
/// dropouts. Each spurious ordinal appears in `round(frequency * frames)`
/// frames, scattered in runs no longer than `run_cap`, next to the first
/// placement (it models misreads of that card).
pub fn flicker_sequence(base: &SceneSpec, model: &FlickerModel, frames: usize) -> Vec<FrameResult> {
    let detection = |ordinal: u8, x: f64, y: f64, d: f64, theta: f64, frame: usize| Detection {
        id: CodeId::from_ordinal(ordinal as i64).expect("valid ordinal"),
        center: (x, y),
        diameter: d,
        orientation: Orientation::new(theta),
        frame_index: frame as u64,
    };
    let mut per_frame: Vec<Vec<Detection>> = vec![Vec::new(); frames];
    for (f, dets) in per_frame.iter_mut().enumerate() {
        if model.dropouts.contains(&f) {
            continue;
        }
        for p in &base.placements {
            dets.push(detection(p.ordinal, p.x, p.y, p.diameter, p.theta, f));
        }
    }
    let anchor = base.placements.first();
    for (i, &(ordinal, freq)) in model.spurious.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(
            model.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (i as u64 + 1),
        );
        let count = (freq.clamp(0.0, 1.0) * frames as f64).round() as usize;
        let (x, y, d, theta) = anchor
            .map(|p| (p.x + 1.5 * p.diameter, p.y, p.diameter, p.theta))
            .unwrap_or((0.0, 0.0, 32.0, 0.0));
        for f in scatter(count, frames, model.run_cap, &mut rng) {
            per_frame[f].push(detection(ordinal, x, y, d, theta, f));
        }
    }
    per_frame
        .into_iter()
        .enumerate()
        .map(|(f, mut dets)| {
            dets.sort_by_key(|d| d.id.ordinal());
            dets.dedup_by_key(|d| d.id.ordinal());
            FrameResult::from_detections(f as u64, dets)
        })
        .collect()
}

/// Renders detection-level ground truth as frames: each detection becomes a
/// card on `base`'s background and lighting.
pub fn render_sequence(base: &SceneSpec, frames: &[FrameResult]) -> Result<Vec<GrayImage>> {
    frames
        .iter()
        .map(|fr| {
            let mut spec = base.clone();
            spec.placements = fr
                .detections
                .iter()
                .map(|d| {
                    Placement::new(
                        d.id.ordinal(),
                        d.center.0,
                        d.center.1,
                        d.diameter,
                        d.orientation.radians(),
                    )
                })
                .collect();
            render_scene(&spec).map(|(img, _)| img)
        })
        .collect()
}

/// Options for [`classroom_scene`].
#[derive(Clone, Debug, PartialEq)]
pub struct ClassroomOptions {
    pub width: usize,
    pub height: usize,
    pub codes: usize,
    pub min_diameter: f64,
    pub max_diameter: f64,
    /// Largest deviation of a card from its answer's upright pose.
    pub max_tilt: f64,
    pub background: Background,
    pub illumination: Illumination,
}

impl Default for ClassroomOptions {
    fn default() -> Self {
        Self {
            width: 1920,
            height: 1080,
            codes: 40,
            min_diameter: 40.0,
            max_diameter: 96.0,
            max_tilt: FRAC_PI_6,
            background: Background::default(),
            illumination: Illumination {
                left: 0.55,
                right: 1.0,
            },
        }
    }
}

/// A grid of cards with distinct ordinals, random answers, tilts and sizes.
pub fn classroom_scene(opts: &ClassroomOptions, seed: u64) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = opts.codes.min(crate::codec::CODE_COUNT);
    let aspect = opts.width as f64 / opts.height as f64;
    let cols = ((n as f64 * aspect).sqrt().ceil() as usize).max(1);
    let rows = n.div_ceil(cols).max(1);
    let cell_w = opts.width as f64 / cols as f64;
    let cell_h = opts.height as f64 / rows as f64;

    let mut ordinals: Vec<u8> = (1..=crate::codec::CODE_COUNT as u8).collect();
    for i in (1..ordinals.len()).rev() {
        ordinals.swap(i, rng.gen_range(0..=i));
    }

    let mut spec = SceneSpec::new(opts.width, opts.height);
    spec.seed = seed;
    spec.background = opts.background.clone();
    spec.illumination = opts.illumination;
    let card_scale = spec.card_scale;
    for (i, &ordinal) in ordinals.iter().take(n).enumerate() {
        let (col, row) = (i % cols, i / cols);
        // card diagonal must stay inside its cell
        let fit = cell_w.min(cell_h) / (card_scale * std::f64::consts::SQRT_2);
        let max_d = opts.max_diameter.min(fit).max(opts.min_diameter);
        let d = rng.gen_range(opts.min_diameter..=max_d);
        let slack_x = ((cell_w - d * card_scale * std::f64::consts::SQRT_2) / 2.0).max(0.0);
        let slack_y = ((cell_h - d * card_scale * std::f64::consts::SQRT_2) / 2.0).max(0.0);
        let x = (col as f64 + 0.5) * cell_w + rng.gen_range(-slack_x..=slack_x);
        let y = (row as f64 + 0.5) * cell_h + rng.gen_range(-slack_y..=slack_y);
        let answer = Answer::from_index(rng.gen_range(0..4));
        let tilt = rng.gen_range(-opts.max_tilt..=opts.max_tilt);
        let theta = answer.index() as f64 * FRAC_PI_2 + tilt;
        spec.placements
            .push(Placement::new(ordinal, x, y, d, theta));
    }
    spec
}

/// A single card centered on a canvas with room for its quiet zone.
pub fn single_code_scene(ordinal: u8, diameter: f64, theta: f64) -> SceneSpec {
    let side = (diameter * 2.0).ceil() as usize + 16;
    let mut spec = SceneSpec::new(side, side);
    spec.placements.push(Placement::new(
        ordinal,
        side as f64 / 2.0,
        side as f64 / 2.0,
        diameter,
        theta,
    ));
    spec
}
