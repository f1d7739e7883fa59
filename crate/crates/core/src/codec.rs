//! Marker ID space and orientation arithmetic.
//!
//! A code is a ring of 13 sectors, each black or white. Valid codes have
//! exactly five white sectors; two ring words that differ only by rotation
//! name the same code. The 1287 five-of-thirteen words fall into exactly 99
//! rotation classes, and because 13 is prime every class has 13 distinct
//! members, so the rotation that produced an observed word is unique. That
//! rotation is how the detector recovers card orientation.
//!
//! Bit `k` of a [`CodePattern`] is sector `k`, which spans the angle
//! `[k, k + 1) * 2π/13` measured counter-clockwise from the card's up axis.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, TAU};
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of sectors in the data ring.
pub const SECTORS: u32 = 13;
/// Number of white sectors in every valid code.
pub const WHITE_SECTORS: u32 = 5;
/// Size of the ID space.
pub const CODE_COUNT: usize = 99;
/// Angular width of one data sector.
pub const SECTOR_ANGLE: f64 = TAU / SECTORS as f64;

const MASK: u16 = (1 << SECTORS) - 1;

/// A 13-sector ring word. Bit `k` set means sector `k` is white.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CodePattern(u16);

impl CodePattern {
    /// Builds a pattern, discarding bits above the 13th.
    pub const fn new(bits: u16) -> Self {
        Self(bits & MASK)
    }

    pub const fn bits(self) -> u16 {
        self.0
    }

    pub const fn popcount(self) -> u32 {
        self.0.count_ones()
    }

    /// Whether sector `k` is white.
    pub fn is_white(self, sector: u32) -> bool {
        (self.0 >> (sector % SECTORS)) & 1 == 1
    }

    /// Rotates by `r` sectors: sector `k` moves to sector `k + r`.
    pub fn rotate(self, r: u32) -> Self {
        let r = r % SECTORS;
        if r == 0 {
            return self;
        }
        let b = self.0 as u32;
        Self((((b << r) | (b >> (SECTORS - r))) & MASK as u32) as u16)
    }

    /// The smallest value among the 13 rotations.
    pub fn min_rotation(self) -> Self {
        (0..SECTORS).map(|r| self.rotate(r)).min().unwrap_or(self)
    }
}

impl fmt::Display for CodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:013b}", self.0)
    }
}

/// One of the 99 valid codes.
///
/// `ordinal` (1..=99) is the number printed on the card and used everywhere
/// outside the codec; `canonical` is the minimal rotation of the ring word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CodeId {
    ordinal: u8,
    canonical: CodePattern,
}

impl CodeId {
    pub fn ordinal(self) -> u8 {
        self.ordinal
    }

    pub fn canonical(self) -> CodePattern {
        self.canonical
    }

    /// Looks up a code by its printed number.
    pub fn from_ordinal(ordinal: i64) -> Result<Self> {
        if !(1..=CODE_COUNT as i64).contains(&ordinal) {
            return Err(Error::BadOrdinal(ordinal));
        }
        Ok(table().codes[ordinal as usize - 1])
    }
}

impl fmt::Display for CodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.ordinal)
    }
}

struct CodeTable {
    codes: Vec<CodeId>,
    // canonical bits -> ordinal, 0 for non-canonical words
    ordinal_of: Vec<u8>,
}

fn table() -> &'static CodeTable {
    static TABLE: OnceLock<CodeTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut canonical = Vec::with_capacity(CODE_COUNT);
        // Gosper's hack: visit every 13-bit word with five bits set, ascending.
        let mut v: u32 = (1 << WHITE_SECTORS) - 1;
        while v < (1 << SECTORS) {
            let p = CodePattern::new(v as u16);
            if p.min_rotation() == p {
                canonical.push(p);
            }
            let c = v & v.wrapping_neg();
            let r = v + c;
            v = (((r ^ v) >> 2) / c) | r;
        }
        let mut ordinal_of = vec![0u8; 1 << SECTORS];
        let codes = canonical
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let ordinal = (i + 1) as u8;
                ordinal_of[p.bits() as usize] = ordinal;
                CodeId {
                    ordinal,
                    canonical: p,
                }
            })
            .collect();
        CodeTable { codes, ordinal_of }
    })
}

/// All valid codes in ascending canonical order (ordinal 1 first).
pub fn enumerate_valid_codes() -> &'static [CodeId] {
    &table().codes
}

/// Identifies the code an observed ring word belongs to, and the rotation
/// `r` such that `code.canonical().rotate(r) == pattern`.
pub fn canonicalize(pattern: CodePattern) -> Result<(CodeId, u32)> {
    let invalid = || Error::NotAValidCode {
        bits: pattern.bits(),
        popcount: pattern.popcount(),
    };
    if pattern.popcount() != WHITE_SECTORS {
        return Err(invalid());
    }
    let t = table();
    for r in 0..SECTORS {
        // undo a rotation by r
        let candidate = pattern.rotate(SECTORS - r);
        let ordinal = t.ordinal_of[candidate.bits() as usize];
        if ordinal != 0 {
            return Ok((t.codes[ordinal as usize - 1], r));
        }
    }
    Err(invalid())
}

/// Card rotation in radians, counter-clockwise relative to image up,
/// normalized to `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Orientation(f64);

impl Orientation {
    pub fn new(theta: f64) -> Self {
        let t = theta.rem_euclid(TAU);
        // rem_euclid can round up to exactly TAU for tiny negative inputs
        Self(if t >= TAU { 0.0 } else { t })
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// Smallest absolute angular distance to `other`, in `[0, π]`.
    pub fn distance(self, other: Orientation) -> f64 {
        let d = (self.0 - other.0).abs();
        d.min(TAU - d)
    }
}

/// A multiple-choice answer, selected by which letter is upright.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Answer {
    A,
    B,
    C,
    D,
}

impl Answer {
    pub const ALL: [Answer; 4] = [Answer::A, Answer::B, Answer::C, Answer::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    /// The letter `steps` positions later, wrapping D to A.
    pub fn advance(self, steps: usize) -> Self {
        Self::from_index(self.index() + steps)
    }

    /// The card rotation that selects this answer: A is 0, then a quarter
    /// turn counter-clockwise per letter.
    pub fn orientation(self) -> Orientation {
        Orientation::new(self.index() as f64 * FRAC_PI_2)
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for Answer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Answer::A),
            "B" | "b" => Ok(Answer::B),
            "C" | "c" => Ok(Answer::C),
            "D" | "d" => Ok(Answer::D),
            other => Err(format!("unknown answer {other:?}")),
        }
    }
}

/// Maps a card rotation to the answer whose letter is upright.
///
/// Quadrants are half-open: A covers `[-π/4, π/4)`, B `[π/4, 3π/4)`,
/// C `[3π/4, 5π/4)` and D `[5π/4, 7π/4)`, all modulo 2π.
pub fn orientation_to_answer(o: Orientation) -> Answer {
    let shifted = Orientation::new(o.radians() + FRAC_PI_4).radians();
    let quadrant = (shifted / FRAC_PI_2).floor() as usize;
    Answer::from_index(quadrant.min(3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn first_code_is_five_low_bits() {
        let first = enumerate_valid_codes()[0];
        assert_eq!(first.canonical().bits(), 0b0000000011111);
        assert_eq!(first.ordinal(), 1);
        assert_eq!(enumerate_valid_codes().len(), 99);
    }

    #[test]
    fn codes_are_ascending_and_minimal() {
        let codes = enumerate_valid_codes();
        for w in codes.windows(2) {
            assert!(w[0].canonical() < w[1].canonical());
        }
        for c in codes {
            assert_eq!(c.canonical().popcount(), 5);
            for r in 0..13 {
                assert!(c.canonical() <= c.canonical().rotate(r));
            }
        }
    }

    #[test]
    fn canonicalize_examples() {
        let id31 = CodeId::from_ordinal(1).unwrap();
        assert_eq!(
            canonicalize(CodePattern::new(31).rotate(3)).unwrap(),
            (id31, 3)
        );
        assert_eq!(
            canonicalize(CodePattern::new(0b1111100000000)).unwrap(),
            (id31, 8)
        );
        assert!(matches!(
            canonicalize(CodePattern::new(0b0000000001111)),
            Err(Error::NotAValidCode { popcount: 4, .. })
        ));
    }

    #[test]
    fn rotate_wraps_within_thirteen_bits() {
        let p = CodePattern::new(1 << 12);
        assert_eq!(p.rotate(1).bits(), 1);
        assert_eq!(CodePattern::new(0xffff).bits(), MASK);
        assert_eq!(p.rotate(13), p);
    }

    #[test]
    fn ordinal_bounds() {
        assert_eq!(CodeId::from_ordinal(0), Err(Error::BadOrdinal(0)));
        assert_eq!(CodeId::from_ordinal(100), Err(Error::BadOrdinal(100)));
        assert_eq!(CodeId::from_ordinal(99).unwrap().ordinal(), 99);
    }

    #[test]
    fn answer_quadrants() {
        let ans = |t: f64| orientation_to_answer(Orientation::new(t));
        assert_eq!(ans(0.0), Answer::A);
        assert_eq!(ans(PI / 2.0), Answer::B);
        assert_eq!(ans(PI), Answer::C);
        assert_eq!(ans(3.0 * PI / 2.0), Answer::D);
        assert_eq!(ans(PI / 4.0), Answer::B);
        assert_eq!(ans(7.0 * PI / 4.0), Answer::A);
        assert_eq!(ans(-PI / 4.0), Answer::A);
        assert_eq!(ans(-1e-12), Answer::A);
    }

    #[test]
    fn orientation_normalizes() {
        assert_eq!(Orientation::new(TAU).radians(), 0.0);
        assert!((Orientation::new(-PI / 2.0).radians() - 1.5 * PI).abs() < 1e-12);
        assert!(Orientation::new(-1e-300).radians() < TAU);
        assert!((Orientation::new(0.1).distance(Orientation::new(TAU - 0.1)) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn answer_parse_and_advance() {
        assert_eq!("c".parse::<Answer>().unwrap(), Answer::C);
        assert!("E".parse::<Answer>().is_err());
        assert_eq!(Answer::D.advance(1), Answer::A);
        assert_eq!(Answer::B.orientation().radians(), FRAC_PI_2);
    }
}
