//! Concentric marker layout shared by the renderers and the detector.
//!
//! Radii are in units `u = diameter / 8`:
//!
//! | radius      | content                                |
//! |-------------|----------------------------------------|
//! | `[0, 1)`    | black core                             |
//! | `[1, 2)`    | white ring                             |
//! | `[2, 3)`    | data ring, 13 sectors, white = bit set |
//! | `[3, 4)`    | white quiet zone                       |
//!
//! Angles are measured counter-clockwise from "up". In image coordinates
//! (x right, y down) the unit vector at angle `a` is `(-sin a, -cos a)`.

use std::f64::consts::TAU;

use crate::codec::{CodePattern, SECTORS, SECTOR_ANGLE};

/// Marker diameter in units.
pub const DIAMETER_UNITS: f64 = 8.0;
pub const CORE_RADIUS: f64 = 1.0;
pub const WHITE_RING_OUTER: f64 = 2.0;
pub const DATA_RING_OUTER: f64 = 3.0;
pub const QUIET_ZONE_OUTER: f64 = 4.0;
/// Radius at which the data ring is sampled.
pub const DATA_SAMPLE_RADIUS: f64 = 2.5;

/// Unit vector for an angle measured counter-clockwise from up, in image
/// coordinates.
#[inline]
pub fn direction(angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (-s, -c)
}

/// Inverse of [`direction`]: angle in `[0, 2π)` of the offset `(dx, dy)`.
#[inline]
pub fn angle_of(dx: f64, dy: f64) -> f64 {
    (-dx).atan2(-dy).rem_euclid(TAU)
}

/// Color of the marker at a point given in card polar coordinates
/// (`card_angle` relative to the card's up axis, `radius` in units).
/// Returns `None` outside the quiet zone, `Some(true)` for white.
#[inline]
pub fn shade(pattern: CodePattern, card_angle: f64, radius: f64) -> Option<bool> {
    if radius < CORE_RADIUS {
        Some(false)
    } else if radius < WHITE_RING_OUTER {
        Some(true)
    } else if radius < DATA_RING_OUTER {
        let sector = (card_angle.rem_euclid(TAU) / SECTOR_ANGLE).floor() as u32;
        Some(pattern.is_white(sector.min(SECTORS - 1)))
    } else if radius < QUIET_ZONE_OUTER {
        Some(true)
    } else {
        None
    }
}
