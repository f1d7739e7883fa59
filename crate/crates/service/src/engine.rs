//! The scan pipeline shared by the offline CLI and the live server.

use classcode_core::detector::{scan_frame, DetectorConfig, FrameResult};
use classcode_core::session::{AnswerValue, ChartData, Clock, LogicalClock, Session, SystemClock};
use classcode_core::temporal::{
    finalize, finalize_single_shot, AcceptedDetection, Take, TemporalConfig,
};
use classcode_core::GrayImage;
use serde::{Deserialize, Serialize};

/// Detector and temporal tunables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub temporal: TemporalConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TakeMode {
    #[default]
    Answers,
    Rollcall,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EngineError {
    #[error("no question is open")]
    NoQuestion,
    #[error("no take is open")]
    NoTake,
    #[error("a take is already open")]
    TakeOpen,
    #[error(transparent)]
    Core(#[from] classcode_core::Error),
}

pub type EngineResult<T> = std::result::Result<T, EngineError>;

/// Timestamps for new sessions: wall clock, or a fixed logical sequence
/// that makes logs reproducible.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    System,
    Logical,
}

impl ClockKind {
    pub fn make(self) -> Box<dyn Clock> {
        match self {
            ClockKind::System => Box::new(SystemClock),
            ClockKind::Logical => Box::new(LogicalClock::default()),
        }
    }

    /// A clock continuing after a replayed session's last event.
    pub fn resume(self, session: &Session) -> Box<dyn Clock> {
        match self {
            ClockKind::System => Box::new(SystemClock),
            ClockKind::Logical => {
                let step = chrono::Duration::seconds(1);
                let last = session
                    .events()
                    .iter()
                    .map(|e| e.timestamp)
                    .max()
                    .expect("sessions have a header");
                Box::new(LogicalClock::new(last + step, step))
            }
        }
    }
}

struct OpenTake {
    id: u32,
    mode: TakeMode,
    question: Option<u32>,
    take: Take,
    next_frame: u64,
}

/// What closing a take produced.
#[derive(Clone, Debug, PartialEq)]
pub struct TakeOutcome {
    pub take_id: u32,
    pub mode: TakeMode,
    pub question: Option<u32>,
    pub frames: u32,
    pub accepted: Vec<AcceptedDetection>,
}

/// A session plus at most one take in progress.
pub struct Engine {
    session: Session,
    config: PipelineConfig,
    take: Option<OpenTake>,
}

impl Engine {
    pub fn new(session: Session, config: PipelineConfig) -> Self {
        Self {
            session,
            config,
            take: None,
        }
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn take_open(&self) -> bool {
        self.take.is_some()
    }

    /// Opens the next question, or the given number.
    pub fn start_question(
        &mut self,
        tag: Option<String>,
        number: Option<u32>,
    ) -> EngineResult<u32> {
        if self.take.is_some() {
            return Err(EngineError::TakeOpen);
        }
        Ok(match number {
            Some(n) => self.session.start_question_numbered(n, tag)?,
            None => self.session.start_question(tag),
        })
    }

    /// Starts a take. Answer takes attach to the current question.
    pub fn begin_take(&mut self, mode: TakeMode) -> EngineResult<u32> {
        if self.take.is_some() {
            return Err(EngineError::TakeOpen);
        }
        let question = match mode {
            TakeMode::Answers => Some(
                self.session
                    .current_question()
                    .ok_or(EngineError::NoQuestion)?,
            ),
            TakeMode::Rollcall => None,
        };
        let id = self.session.next_take_id();
        self.take = Some(OpenTake {
            id,
            mode,
            question,
            take: Take::new(),
            next_frame: 0,
        });
        Ok(id)
    }

    /// Scans one frame into the open take.
    pub fn process_frame(&mut self, frame: &GrayImage) -> EngineResult<FrameResult> {
        let open = self.take.as_mut().ok_or(EngineError::NoTake)?;
        let fr = scan_frame(frame, &self.config.detector, open.next_frame)?;
        open.take.accumulate(&fr)?;
        open.next_frame += 1;
        Ok(fr)
    }

    /// Closes the take and merges what it accepted into the session.
    /// `single_shot` skips the contiguous-frame requirement.
    pub fn end_take(&mut self, single_shot: bool) -> EngineResult<TakeOutcome> {
        let open = self.take.take().ok_or(EngineError::NoTake)?;
        let accepted = if single_shot {
            finalize_single_shot(&open.take)
        } else {
            finalize(&open.take, &self.config.temporal)
        };
        match (open.mode, open.question) {
            (TakeMode::Answers, Some(q)) => {
                self.session.apply_take(q, &accepted, Some(open.id))?;
            }
            _ => {
                self.session.roll_call_take(&accepted, Some(open.id));
            }
        }
        Ok(TakeOutcome {
            take_id: open.id,
            mode: open.mode,
            question: open.question,
            frames: open.take.frames_seen(),
            accepted,
        })
    }

    /// Drops the open take without touching the session.
    pub fn discard_take(&mut self) -> bool {
        self.take.take().is_some()
    }

    pub fn frames_in_take(&self) -> Option<u32> {
        self.take.as_ref().map(|t| t.take.frames_seen())
    }

    /// Manual answer for `question`, or the current question.
    pub fn set_answer(
        &mut self,
        question: Option<u32>,
        ordinal: i64,
        value: AnswerValue,
    ) -> EngineResult<u32> {
        let q = question
            .or(self.session.current_question())
            .ok_or(EngineError::NoQuestion)?;
        self.session.set_manual_answer(q, ordinal, value)?;
        Ok(q)
    }

    pub fn set_presence(&mut self, ordinal: i64, present: bool) -> EngineResult<()> {
        self.session.set_presence(ordinal, present)?;
        Ok(())
    }

    pub fn summary(&self, question: Option<u32>) -> EngineResult<ChartData> {
        let q = question
            .or(self.session.current_question())
            .ok_or(EngineError::NoQuestion)?;
        Ok(self.session.summarize(q)?)
    }

    pub fn export_log(&self) -> Vec<String> {
        self.session.export_log()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use classcode_core::session::Roster;
    use classcode_core::synth::{render_scene, single_code_scene};
    use classcode_core::Answer;

    fn engine() -> Engine {
        let s = Session::start_with_clock(
            Roster::numbered("c", 40).unwrap(),
            ClockKind::Logical.make(),
        );
        Engine::new(s, PipelineConfig::default())
    }

    #[test]
    fn take_lifecycle() {
        let mut e = engine();
        assert_eq!(
            e.begin_take(TakeMode::Answers),
            Err(EngineError::NoQuestion)
        );
        assert_eq!(e.end_take(false), Err(EngineError::NoTake));
        let q = e.start_question(Some("warmup".into()), None).unwrap();
        e.begin_take(TakeMode::Answers).unwrap();
        assert_eq!(e.start_question(None, None), Err(EngineError::TakeOpen));
        let (img, _) = render_scene(&single_code_scene(
            7,
            64.0,
            Answer::C.orientation().radians(),
        ))
        .unwrap();
        for _ in 0..4 {
            let fr = e.process_frame(&img).unwrap();
            assert_eq!(fr.detections.len(), 1);
        }
        let out = e.end_take(false).unwrap();
        assert_eq!(out.frames, 4);
        assert_eq!(out.accepted.len(), 1);
        assert_eq!(e.summary(Some(q)).unwrap().counts, [0, 0, 1, 0, 39]);
    }

    #[test]
    fn single_shot_and_discard() {
        let mut e = engine();
        e.start_question(None, None).unwrap();
        let (img, _) = render_scene(&single_code_scene(9, 64.0, 0.0)).unwrap();
        e.begin_take(TakeMode::Answers).unwrap();
        e.process_frame(&img).unwrap();
        assert!(e.end_take(false).unwrap().accepted.is_empty());
        e.begin_take(TakeMode::Answers).unwrap();
        e.process_frame(&img).unwrap();
        assert_eq!(e.end_take(true).unwrap().accepted.len(), 1);
        e.begin_take(TakeMode::Rollcall).unwrap();
        e.process_frame(&img).unwrap();
        assert!(e.discard_take());
        assert!(e.session().rollcall().present().is_empty());
    }
}
