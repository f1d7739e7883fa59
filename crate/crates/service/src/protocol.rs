//! Wire protocol, version 1.
//!
//! Client messages are JSON text messages with a `type` field and an
//! optional `"v": 1`; a binary message is one encoded frame (PNG or JPEG)
//! for the open take. Every client message gets exactly one reply, which is
//! either the matching server message or an `error`.

use classcode_core::detector::FrameResult;
use classcode_core::session::ChartData;
use classcode_core::temporal::AcceptedDetection;
use serde::{Deserialize, Serialize};

use crate::engine::{EngineError, TakeMode};

pub const VERSION: u32 = 1;

/// Largest accepted binary frame.
pub const MAX_FRAME_BYTES: usize = 8 * 1024 * 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RosterItem {
    pub ordinal: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    StartSession {
        class_id: String,
        #[serde(default)]
        roster: Vec<RosterItem>,
    },
    StartQuestion {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
        /// Overrides the automatic number.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        number: Option<u32>,
    },
    BeginTake {
        #[serde(default)]
        mode: TakeMode,
    },
    EndTake {
        /// Accept every code seen at least once (still photographs).
        #[serde(default)]
        single_shot: bool,
    },
    SetAnswer {
        ordinal: i64,
        answer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        question: Option<u32>,
    },
    SetPresence {
        ordinal: i64,
        present: bool,
    },
    GetSummary {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        question: Option<u32>,
    },
    ExportLog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadJson,
    BadMessage,
    UnsupportedVersion,
    Busy,
    FrameTooLarge,
    BadImage,
    NoSession,
    NoQuestion,
    NoTake,
    TakeOpen,
    BadOrdinal,
    BadAnswer,
    InvalidRoster,
    QuestionClosed,
    UnknownQuestion,
    DuplicateQuestion,
    Internal,
}

/// Answer counts keyed by letter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    #[serde(rename = "A")]
    pub a: u32,
    #[serde(rename = "B")]
    pub b: u32,
    #[serde(rename = "C")]
    pub c: u32,
    #[serde(rename = "D")]
    pub d: u32,
    pub unknown: u32,
}

impl From<&ChartData> for Counts {
    fn from(c: &ChartData) -> Self {
        let [a, b, c2, d, unknown] = c.counts;
        Counts {
            a,
            b,
            c: c2,
            d,
            unknown,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryBody {
    pub question: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    pub counts: Counts,
}

impl From<&ChartData> for SummaryBody {
    fn from(c: &ChartData) -> Self {
        SummaryBody {
            question: c.question_number,
            tag: c.tag.clone(),
            counts: c.into(),
        }
    }
}

/// One detection in a frame, for the overlay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameItem {
    pub ordinal: u8,
    pub x: f64,
    pub y: f64,
    pub diameter: f64,
    pub theta: f64,
    pub answer: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptedItem {
    pub ordinal: u8,
    pub answer: String,
    pub sightings: u32,
    pub longest_run: u32,
    pub x: f64,
    pub y: f64,
}

impl From<&AcceptedDetection> for AcceptedItem {
    fn from(a: &AcceptedDetection) -> Self {
        AcceptedItem {
            ordinal: a.id.ordinal(),
            answer: a.answer.to_string(),
            sightings: a.sightings,
            longest_run: a.longest_run,
            x: a.last_center.0,
            y: a.last_center.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    SessionStarted {
        session_id: String,
        class_id: String,
        roster_size: usize,
    },
    QuestionStarted {
        number: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tag: Option<String>,
    },
    TakeStarted {
        take_id: u32,
        mode: TakeMode,
    },
    FrameDetections {
        frame: u64,
        items: Vec<FrameItem>,
    },
    TakeResult {
        take_id: u32,
        mode: TakeMode,
        frames: u32,
        accepted: Vec<AcceptedItem>,
        /// Updated counts for the question, after answer takes.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        summary: Option<SummaryBody>,
        /// Everyone marked present, after roll-call takes.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        present: Option<Vec<u8>>,
    },
    AnswerSet {
        question: u32,
        ordinal: u8,
        answer: String,
    },
    PresenceSet {
        ordinal: u8,
        present: bool,
    },
    Summary(SummaryBody),
    Log {
        lines: Vec<String>,
    },
    Error {
        code: ErrorCode,
        msg: String,
    },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, msg: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            msg: msg.into(),
        }
    }

    pub fn frame(fr: &FrameResult) -> Self {
        ServerMessage::FrameDetections {
            frame: fr.frame_index,
            items: fr
                .detections
                .iter()
                .map(|d| FrameItem {
                    ordinal: d.id.ordinal(),
                    x: d.center.0,
                    y: d.center.1,
                    diameter: d.diameter,
                    theta: d.orientation.radians(),
                    answer: d.answer().to_string(),
                })
                .collect(),
        }
    }

    /// JSON text with the protocol version attached.
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("server messages serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.insert("v".into(), VERSION.into());
        }
        v.to_string()
    }
}

/// Parses a client text message, checking the version.
pub fn parse_client(text: &str) -> Result<ClientMessage, ServerMessage> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ServerMessage::error(ErrorCode::BadJson, e.to_string()))?;
    match value.get("v") {
        None => {}
        Some(v) if v.as_u64() == Some(VERSION as u64) => {}
        Some(v) => {
            return Err(ServerMessage::error(
                ErrorCode::UnsupportedVersion,
                format!("protocol version {v} is not supported; this server speaks {VERSION}"),
            ))
        }
    }
    serde_json::from_value(value)
        .map_err(|e| ServerMessage::error(ErrorCode::BadMessage, e.to_string()))
}

impl From<&EngineError> for ServerMessage {
    fn from(e: &EngineError) -> Self {
        use classcode_core::Error as E;
        let code = match e {
            EngineError::NoQuestion => ErrorCode::NoQuestion,
            EngineError::NoTake => ErrorCode::NoTake,
            EngineError::TakeOpen => ErrorCode::TakeOpen,
            EngineError::Core(c) => match c {
                E::BadOrdinal(_) => ErrorCode::BadOrdinal,
                E::InvalidRoster(_) => ErrorCode::InvalidRoster,
                E::QuestionClosed(_) => ErrorCode::QuestionClosed,
                E::UnknownQuestion(_) => ErrorCode::UnknownQuestion,
                E::DuplicateQuestion(_) => ErrorCode::DuplicateQuestion,
                E::EmptyImage | E::BufferSize { .. } => ErrorCode::BadImage,
                _ => ErrorCode::Internal,
            },
        };
        ServerMessage::error(code, e.to_string())
    }
}
