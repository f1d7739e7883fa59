//! Command line tools and the live session server.
//!
//! [`engine::Engine`] is the one scan pipeline: frames go through the
//! detector into a take, and closed takes merge into the session. The
//! offline `scan` command and the WebSocket server both drive it.

pub mod cli;
pub mod engine;
pub mod frames;
pub mod protocol;
pub mod server;

pub use engine::{ClockKind, Engine, PipelineConfig, TakeMode};
