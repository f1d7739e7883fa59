//! Paper-card classroom polling.
//!
//! Students hold up printed cards carrying a circular fiducial code; the
//! rotation of each card selects an answer. This crate holds everything up
//! to (and excluding) the network service:
//!
//! - [`codec`]: the 99-code ID space and orientation-to-answer mapping.
//! - [`imaging`]: grayscale, adaptive binarization, hairline repair.
//! - [`detector`]: dual-axis candidate search and ring decoding.
//! - [`temporal`]: acceptance of codes that persist over contiguous frames.
//! - [`session`]: roster, questions, merges, summaries and the answer log.
//! - [`sheetgen`]: printable cards as vector drawings.
//! - [`synth`]: synthetic scenes with exact ground truth.

pub mod codec;
pub mod detector;
pub mod error;
pub mod imaging;
pub mod marker;
pub mod session;
pub mod sheetgen;
pub mod synth;
pub mod temporal;

pub use codec::{Answer, CodeId, CodePattern, Orientation};
pub use detector::{scan_frame, Detection, DetectorConfig, FrameResult};
pub use error::{Error, Result};
pub use imaging::{BinaryImage, GrayImage};
pub use session::Session;
pub use temporal::{finalize, Take, TemporalConfig};
