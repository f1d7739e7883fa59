//! Printable cards.
//!
//! A card is a [`Drawing`] in millimetres: the marker (canonical ring word
//! at rotation 0, so an upright card reads as orientation 0) with the four
//! answer letters at the edge midpoints. Each letter is turned so that it
//! reads upright exactly when the card is rotated to select it: A at the top,
//! B on the right (upright after a quarter turn counter-clockwise), C at the
//! bottom and D on the left. The card number is printed in the top-left
//! corner.
//!
//! Drawings serialize to SVG and can be rasterized directly (text is not
//! rasterized; it never overlaps the marker).

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use crate::codec::{Answer, CodeId, SECTORS, SECTOR_ANGLE};
use crate::error::{Error, Result};
use crate::imaging::GrayImage;
use crate::marker;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ink {
    Black,
    White,
}

impl Ink {
    fn luma(self) -> f64 {
        match self {
            Ink::Black => 0.0,
            Ink::White => 255.0,
        }
    }

    fn svg(self) -> &'static str {
        match self {
            Ink::Black => "#000",
            Ink::White => "#fff",
        }
    }
}

/// Vector primitives. Angles are radians counter-clockwise from up.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Rect {
        x: f64,
        y: f64,
        w: f64,
        h: f64,
        ink: Ink,
    },
    Circle {
        cx: f64,
        cy: f64,
        r: f64,
        ink: Ink,
    },
    /// Annular sector from `start` to `end` (counter-clockwise).
    Band {
        cx: f64,
        cy: f64,
        r_inner: f64,
        r_outer: f64,
        start: f64,
        end: f64,
        ink: Ink,
    },
    Text {
        x: f64,
        y: f64,
        size: f64,
        /// Clockwise rotation in degrees about `(x, y)`, as in SVG.
        rotate_deg: f64,
        text: String,
        ink: Ink,
    },
    Line {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        width: f64,
        ink: Ink,
    },
}

impl Shape {
    fn translated(&self, dx: f64, dy: f64) -> Shape {
        let mut s = self.clone();
        match &mut s {
            Shape::Rect { x, y, .. } | Shape::Text { x, y, .. } => {
                *x += dx;
                *y += dy;
            }
            Shape::Circle { cx, cy, .. } | Shape::Band { cx, cy, .. } => {
                *cx += dx;
                *cy += dy;
            }
            Shape::Line { x1, y1, x2, y2, .. } => {
                *x1 += dx;
                *x2 += dx;
                *y1 += dy;
                *y2 += dy;
            }
        }
        s
    }
}

/// A page-sized vector document in millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct Drawing {
    pub width: f64,
    pub height: f64,
    pub shapes: Vec<Shape>,
}

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn polar(cx: f64, cy: f64, r: f64, angle: f64) -> (f64, f64) {
    let (dx, dy) = marker::direction(angle);
    (cx + r * dx, cy + r * dy)
}

impl Drawing {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            shapes: Vec::new(),
        }
    }

    /// Appends another drawing's shapes offset by `(dx, dy)`.
    pub fn append(&mut self, other: &Drawing, dx: f64, dy: f64) {
        self.shapes
            .extend(other.shapes.iter().map(|s| s.translated(dx, dy)));
    }

    pub fn to_svg(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}mm" height="{h}mm" viewBox="0 0 {w} {h}">"#,
            w = num(self.width),
            h = num(self.height)
        );
        for s in &self.shapes {
            let _ = match s {
                Shape::Rect { x, y, w, h, ink } => writeln!(
                    out,
                    r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                    num(*x),
                    num(*y),
                    num(*w),
                    num(*h),
                    ink.svg()
                ),
                Shape::Circle { cx, cy, r, ink } => writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="{}" fill="{}"/>"#,
                    num(*cx),
                    num(*cy),
                    num(*r),
                    ink.svg()
                ),
                Shape::Band {
                    cx,
                    cy,
                    r_inner,
                    r_outer,
                    start,
                    end,
                    ink,
                } => {
                    let span = (end - start).rem_euclid(TAU);
                    let large = (span > PI) as u8;
                    let (ox0, oy0) = polar(*cx, *cy, *r_outer, *start);
                    let (ox1, oy1) = polar(*cx, *cy, *r_outer, *end);
                    let (ix1, iy1) = polar(*cx, *cy, *r_inner, *end);
                    let (ix0, iy0) = polar(*cx, *cy, *r_inner, *start);
                    // counter-clockwise on screen is SVG sweep-flag 0
                    writeln!(
                        out,
                        r#"<path d="M{} {} A{} {} 0 {} 0 {} {} L{} {} A{} {} 0 {} 1 {} {} Z" fill="{}"/>"#,
                        num(ox0),
                        num(oy0),
                        num(*r_outer),
                        num(*r_outer),
                        large,
                        num(ox1),
                        num(oy1),
                        num(ix1),
                        num(iy1),
                        num(*r_inner),
                        num(*r_inner),
                        large,
                        num(ix0),
                        num(iy0),
                        ink.svg()
                    )
                }
                Shape::Text {
                    x,
                    y,
                    size,
                    rotate_deg,
                    text,
                    ink,
                } => writeln!(
                    out,
                    r#"<text x="{x}" y="{y}" font-size="{}" font-family="Helvetica, Arial, sans-serif" font-weight="bold" text-anchor="middle" dominant-baseline="central" transform="rotate({} {x} {y})" fill="{}">{}</text>"#,
                    num(*size),
                    num(*rotate_deg),
                    ink.svg(),
                    xml_escape(text),
                    x = num(*x),
                    y = num(*y),
                ),
                Shape::Line {
                    x1,
                    y1,
                    x2,
                    y2,
                    width,
                    ink,
                } => writeln!(
                    out,
                    r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{}" stroke-width="{}"/>"#,
                    num(*x1),
                    num(*y1),
                    num(*x2),
                    num(*y2),
                    ink.svg(),
                    num(*width)
                ),
            };
        }
        out.push_str("</svg>\n");
        out
    }

    /// Rasterizes at `px_per_mm` with 4x4 supersampling on shape edges.
    /// Text is skipped.
    pub fn rasterize(&self, px_per_mm: f64) -> Result<GrayImage> {
        let w = (self.width * px_per_mm).ceil() as usize;
        let h = (self.height * px_per_mm).ceil() as usize;
        let mut canvas = vec![255.0f64; w * h];
        for s in &self.shapes {
            paint(&mut canvas, w, h, s, px_per_mm);
        }
        GrayImage::new(
            w,
            h,
            canvas
                .into_iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        )
    }
}

#[derive(PartialEq)]
enum Hit {
    Inside,
    Outside,
    Edge,
}

// Classifies a pixel by its center; `margin` is half the pixel diagonal.
fn classify(s: &Shape, x: f64, y: f64, margin: f64) -> Hit {
    let decide = |inside: bool, dist: f64| {
        if dist < margin {
            Hit::Edge
        } else if inside {
            Hit::Inside
        } else {
            Hit::Outside
        }
    };
    match *s {
        Shape::Rect {
            x: rx, y: ry, w, h, ..
        } => {
            let inside = x >= rx && x < rx + w && y >= ry && y < ry + h;
            let d = (x - rx)
                .abs()
                .min((x - rx - w).abs())
                .min((y - ry).abs())
                .min((y - ry - h).abs());
            decide(inside, d)
        }
        Shape::Circle { cx, cy, r, .. } => {
            let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
            decide(d < r, (d - r).abs())
        }
        Shape::Band {
            cx,
            cy,
            r_inner,
            r_outer,
            start,
            end,
            ..
        } => {
            let (dx, dy) = (x - cx, y - cy);
            let r = (dx * dx + dy * dy).sqrt();
            let a = marker::angle_of(dx, dy);
            let span = (end - start).rem_euclid(TAU);
            let off = (a - start).rem_euclid(TAU);
            let in_angle = off < span;
            let inside = r >= r_inner && r < r_outer && in_angle;
            let radial = (r - r_inner).abs().min((r - r_outer).abs());
            let ang = off
                .min(TAU - off)
                .min((off - span).abs())
                .min(TAU - (off - span).abs());
            let angular = r * ang.min(PI / 2.0).sin();
            decide(inside, radial.min(angular).min(r))
        }
        Shape::Line {
            x1,
            y1,
            x2,
            y2,
            width,
            ..
        } => {
            let (vx, vy) = (x2 - x1, y2 - y1);
            let len2 = (vx * vx + vy * vy).max(1e-12);
            let t = (((x - x1) * vx + (y - y1) * vy) / len2).clamp(0.0, 1.0);
            let d = ((x - x1 - t * vx).powi(2) + (y - y1 - t * vy).powi(2)).sqrt();
            decide(d < width / 2.0, (d - width / 2.0).abs())
        }
        Shape::Text { .. } => Hit::Outside,
    }
}

fn bounds(s: &Shape) -> Option<(f64, f64, f64, f64)> {
    match *s {
        Shape::Rect { x, y, w, h, .. } => Some((x, y, x + w, y + h)),
        Shape::Circle { cx, cy, r, .. } => Some((cx - r, cy - r, cx + r, cy + r)),
        Shape::Band {
            cx,
            cy,
            r_inner,
            r_outer,
            start,
            end,
            ..
        } => {
            // arc end points plus any axis extremes the arc passes
            let span = (end - start).rem_euclid(TAU);
            let mut pts = vec![
                polar(cx, cy, r_inner, start),
                polar(cx, cy, r_inner, end),
                polar(cx, cy, r_outer, start),
                polar(cx, cy, r_outer, end),
            ];
            for k in 0..4 {
                let a = k as f64 * PI / 2.0;
                if (a - start).rem_euclid(TAU) <= span {
                    pts.push(polar(cx, cy, r_outer, a));
                }
            }
            let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
                pts.iter().map(pick).fold(init, f)
            };
            Some((
                fold(f64::min, f64::INFINITY, |p| p.0),
                fold(f64::min, f64::INFINITY, |p| p.1),
                fold(f64::max, f64::NEG_INFINITY, |p| p.0),
                fold(f64::max, f64::NEG_INFINITY, |p| p.1),
            ))
        }
        Shape::Line {
            x1,
            y1,
            x2,
            y2,
            width,
            ..
        } => Some((
            x1.min(x2) - width,
            y1.min(y2) - width,
            x1.max(x2) + width,
            y1.max(y2) + width,
        )),
        Shape::Text { .. } => None,
    }
}

fn ink_of(s: &Shape) -> Ink {
    match *s {
        Shape::Rect { ink, .. }
        | Shape::Circle { ink, .. }
        | Shape::Band { ink, .. }
        | Shape::Text { ink, .. }
        | Shape::Line { ink, .. } => ink,
    }
}

fn paint(canvas: &mut [f64], w: usize, h: usize, s: &Shape, scale: f64) {
    let Some((x0, y0, x1, y1)) = bounds(s) else {
        return;
    };
    const SS: usize = 4;
    let value = ink_of(s).luma();
    let px0 = ((x0 * scale).floor().max(0.0) as usize).min(w);
    let py0 = ((y0 * scale).floor().max(0.0) as usize).min(h);
    let px1 = ((x1 * scale).ceil().max(0.0) as usize).min(w);
    let py1 = ((y1 * scale).ceil().max(0.0) as usize).min(h);
    let margin = std::f64::consts::FRAC_1_SQRT_2 / scale;
    for py in py0..py1 {
        for px in px0..px1 {
            let (mx, my) = ((px as f64 + 0.5) / scale, (py as f64 + 0.5) / scale);
            let cov = match classify(s, mx, my, margin) {
                Hit::Inside => 1.0,
                Hit::Outside => 0.0,
                Hit::Edge => {
                    let mut n = 0;
                    for sy in 0..SS {
                        for sx in 0..SS {
                            let x = (px as f64 + (sx as f64 + 0.5) / SS as f64) / scale;
                            let y = (py as f64 + (sy as f64 + 0.5) / SS as f64) / scale;
                            if classify(s, x, y, 0.0) == Hit::Inside {
                                n += 1;
                            }
                        }
                    }
                    n as f64 / (SS * SS) as f64
                }
            };
            if cov > 0.0 {
                let idx = py * w + px;
                canvas[idx] = canvas[idx] * (1.0 - cov) + value * cov;
            }
        }
    }
}

/// Physical card dimensions in millimetres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CardSpec {
    pub ordinal: u8,
    pub width_mm: f64,
    pub height_mm: f64,
    pub code_diameter_mm: f64,
}

impl CardSpec {
    /// A5 portrait card with a 120 mm code.
    pub fn new(ordinal: u8) -> Self {
        Self {
            ordinal,
            width_mm: 148.0,
            height_mm: 210.0,
            code_diameter_mm: 120.0,
        }
    }

    fn validate(&self) -> Result<CodeId> {
        let id = CodeId::from_ordinal(self.ordinal as i64)?;
        if !(self.code_diameter_mm > 0.0)
            || self.code_diameter_mm > self.width_mm.min(self.height_mm)
        {
            return Err(Error::InvalidLayout(format!(
                "code diameter {} mm does not fit a {}x{} mm card",
                self.code_diameter_mm, self.width_mm, self.height_mm
            )));
        }
        Ok(id)
    }
}

/// Marker shapes for a code centered at `(cx, cy)` with diameter `d`.
pub fn marker_shapes(id: CodeId, cx: f64, cy: f64, d: f64) -> Vec<Shape> {
    let u = d / marker::DIAMETER_UNITS;
    let pattern = id.canonical();
    let mut shapes = vec![Shape::Circle {
        cx,
        cy,
        r: marker::QUIET_ZONE_OUTER * u,
        ink: Ink::White,
    }];
    // merge adjacent black sectors so renderers leave no seams; start the
    // walk on a white sector so no run wraps past it
    let first_white = (0..SECTORS).find(|&k| pattern.is_white(k)).unwrap_or(0);
    let mut k = 0;
    while k < SECTORS {
        let s = (first_white + k) % SECTORS;
        if pattern.is_white(s) {
            k += 1;
            continue;
        }
        let mut len = 0;
        while k + len < SECTORS && !pattern.is_white((first_white + k + len) % SECTORS) {
            len += 1;
        }
        shapes.push(Shape::Band {
            cx,
            cy,
            r_inner: marker::WHITE_RING_OUTER * u,
            r_outer: marker::DATA_RING_OUTER * u,
            start: s as f64 * SECTOR_ANGLE,
            end: (s + len) as f64 * SECTOR_ANGLE,
            ink: Ink::Black,
        });
        k += len;
    }
    shapes.push(Shape::Circle {
        cx,
        cy,
        r: marker::CORE_RADIUS * u,
        ink: Ink::Black,
    });
    shapes
}

/// Draws one card.
pub fn render_card(spec: &CardSpec) -> Result<Drawing> {
    let id = spec.validate()?;
    let (w, h, d) = (spec.width_mm, spec.height_mm, spec.code_diameter_mm);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let mut dr = Drawing::new(w, h);
    dr.shapes.push(Shape::Rect {
        x: 0.0,
        y: 0.0,
        w,
        h,
        ink: Ink::White,
    });
    dr.shapes.extend(marker_shapes(id, cx, cy, d));

    let side_margin = (w - d) / 2.0;
    let end_margin = (h - d) / 2.0;
    let size = (0.6 * side_margin.min(end_margin)).clamp(3.0, 30.0);
    let letters = [
        (Answer::A, cx, end_margin / 2.0, 0.0),
        (Answer::B, w - side_margin / 2.0, cy, 90.0),
        (Answer::C, cx, h - end_margin / 2.0, 180.0),
        (Answer::D, side_margin / 2.0, cy, -90.0),
    ];
    for (a, x, y, rot) in letters {
        dr.shapes.push(Shape::Text {
            x,
            y,
            size,
            rotate_deg: rot,
            text: a.letter().to_string(),
            ink: Ink::Black,
        });
    }
    let small = (size * 0.5).max(3.0);
    dr.shapes.push(Shape::Text {
        x: small * 1.2,
        y: small * 1.2,
        size: small,
        rotate_deg: 0.0,
        text: spec.ordinal.to_string(),
        ink: Ink::Black,
    });
    Ok(dr)
}

/// Grid of cards on a page.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PageLayout {
    pub cards_per_page: usize,
    /// Columns in the grid; rows follow from `cards_per_page`.
    pub columns: usize,
    pub card_width_mm: f64,
    pub card_height_mm: f64,
    pub code_diameter_mm: f64,
    /// Space between and around cards, where crop marks go.
    pub gap_mm: f64,
}

impl Default for PageLayout {
    fn default() -> Self {
        Self {
            cards_per_page: 2,
            columns: 2,
            card_width_mm: 148.0,
            card_height_mm: 210.0,
            code_diameter_mm: 120.0,
            gap_mm: 10.0,
        }
    }
}

impl PageLayout {
    /// Layout with `per_page` cards, as square a grid as possible.
    pub fn with_cards_per_page(per_page: usize) -> Self {
        let columns = (per_page as f64).sqrt().ceil().max(1.0) as usize;
        Self {
            cards_per_page: per_page,
            columns,
            ..Self::default()
        }
    }

    pub fn rows(&self) -> usize {
        self.cards_per_page.div_ceil(self.columns.max(1))
    }

    pub fn page_size(&self) -> (f64, f64) {
        let cols = self.columns as f64;
        let rows = self.rows() as f64;
        (
            cols * self.card_width_mm + (cols + 1.0) * self.gap_mm,
            rows * self.card_height_mm + (rows + 1.0) * self.gap_mm,
        )
    }
}

/// One page of a sheet, with the ordinal in each filled slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Page {
    pub drawing: Drawing,
    pub slots: Vec<u8>,
}

/// Lays cards out on pages. Repeated ordinals are rendered again.
pub fn render_sheet(ordinals: &[i64], layout: &PageLayout) -> Result<Vec<Page>> {
    if ordinals.is_empty() {
        return Err(Error::InvalidLayout("no cards requested".into()));
    }
    if layout.cards_per_page == 0 || layout.columns == 0 {
        return Err(Error::InvalidLayout(
            "cards per page and columns must be positive".into(),
        ));
    }
    let ids = ordinals
        .iter()
        .map(|&o| CodeId::from_ordinal(o))
        .collect::<Result<Vec<_>>>()?;
    let (pw, ph) = layout.page_size();
    let (cw, ch, gap) = (layout.card_width_mm, layout.card_height_mm, layout.gap_mm);
    let mark = (gap * 0.6).min(8.0);
    ids.chunks(layout.cards_per_page)
        .map(|chunk| {
            let mut page = Drawing::new(pw, ph);
            page.shapes.push(Shape::Rect {
                x: 0.0,
                y: 0.0,
                w: pw,
                h: ph,
                ink: Ink::White,
            });
            let mut slots = Vec::new();
            for (slot, id) in chunk.iter().enumerate() {
                let card = render_card(&CardSpec {
                    ordinal: id.ordinal(),
                    width_mm: cw,
                    height_mm: ch,
                    code_diameter_mm: layout.code_diameter_mm,
                })?;
                let (col, row) = (slot % layout.columns, slot / layout.columns);
                let x = gap + col as f64 * (cw + gap);
                let y = gap + row as f64 * (ch + gap);
                page.append(&card, x, y);
                for (cx, cy, sx, sy) in [
                    (x, y, -1.0, -1.0),
                    (x + cw, y, 1.0, -1.0),
                    (x, y + ch, -1.0, 1.0),
                    (x + cw, y + ch, 1.0, 1.0),
                ] {
                    let stroke = 0.2;
                    page.shapes.push(Shape::Line {
                        x1: cx + sx * 1.0,
                        y1: cy,
                        x2: cx + sx * (1.0 + mark),
                        y2: cy,
                        width: stroke,
                        ink: Ink::Black,
                    });
                    page.shapes.push(Shape::Line {
                        x1: cx,
                        y1: cy + sy * 1.0,
                        x2: cx,
                        y2: cy + sy * (1.0 + mark),
                        width: stroke,
                        ink: Ink::Black,
                    });
                }
                slots.push(id.ordinal());
            }
            Ok(Page {
                drawing: page,
                slots,
            })
        })
        .collect()
}

/// Index rows `ordinal,file,page,slot` (1-based page and slot).
pub fn sheet_index_csv(pages: &[Page], file_name: impl Fn(usize) -> String) -> String {
    let mut out = String::from("ordinal,file,page,slot\n");
    for (p, page) in pages.iter().enumerate() {
        for (s, ordinal) in page.slots.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", ordinal, file_name(p + 1), p + 1, s + 1);
        }
    }
    out
}
