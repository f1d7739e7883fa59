//! Class session state machine and its answer log.
//!
//! Every mutation is expressed as a [`LogRecord`] and applied through a
//! single function, so replaying an exported log rebuilds the exact state.
//! Scan results and manual edits merge last-write-wins: whichever record
//! is newest for a student is that student's answer, and every superseded
//! record stays in the log.
//!
//! Log lines are JSON objects, one per line:
//!
//! | field             | meaning                                            |
//! |-------------------|----------------------------------------------------|
//! | `type`            | `session`, `question`, `answer` or `rollcall`      |
//! | `session_id`      | session identifier                                 |
//! | `class_id`        | class identifier                                   |
//! | `question_number` | question, or null                                  |
//! | `tag`             | question tag, or null                              |
//! | `student_ordinal` | card number 1..=99, or null                        |
//! | `answer`          | `A`..`D` or `UNKNOWN`, or null                     |
//! | `source`          | `scan` or `manual`, or null                        |
//! | `timestamp`       | RFC 3339, UTC, microseconds                        |
//!
//! Optional fields: `roster` on the leading `session` line, `present` on
//! `rollcall` lines, `take_id` on scanned records and `unrostered: true` on
//! records for cards outside the roster.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Duration, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::codec::{Answer, CODE_COUNT};
use crate::error::{Error, Result};
use crate::temporal::AcceptedDetection;

/// Source of timestamps for session events.
pub trait Clock: Send {
    fn now(&mut self) -> DateTime<Utc>;
}

/// Wall clock.
#[derive(Clone, Copy, Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Deterministic clock advancing a fixed step per reading.
#[derive(Clone, Copy, Debug)]
pub struct LogicalClock {
    next: DateTime<Utc>,
    step: Duration,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        Self { next: start, step }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(
            Utc.with_ymd_and_hms(2024, 1, 1, 8, 0, 0).unwrap(),
            Duration::seconds(1),
        )
    }
}

impl Clock for LogicalClock {
    fn now(&mut self) -> DateTime<Utc> {
        let t = self.next;
        self.next += self.step;
        t
    }
}

fn check_ordinal(ordinal: i64) -> Result<u8> {
    if (1..=CODE_COUNT as i64).contains(&ordinal) {
        Ok(ordinal as u8)
    } else {
        Err(Error::BadOrdinal(ordinal))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub ordinal: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Students of a class, keyed by card number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roster {
    class_id: String,
    students: BTreeMap<u8, Option<String>>,
}

impl Roster {
    /// Builds a roster; ordinals must be unique and within 1..=99.
    pub fn new(
        class_id: impl Into<String>,
        entries: impl IntoIterator<Item = (i64, Option<String>)>,
    ) -> Result<Self> {
        let mut students = BTreeMap::new();
        for (ordinal, name) in entries {
            let o = check_ordinal(ordinal)
                .map_err(|_| Error::InvalidRoster(format!("ordinal {ordinal} outside 1..=99")))?;
            if students.insert(o, name).is_some() {
                return Err(Error::InvalidRoster(format!("duplicate ordinal {o}")));
            }
        }
        Ok(Self {
            class_id: class_id.into(),
            students,
        })
    }

    /// Roster with ordinals `1..=n` and no names.
    pub fn numbered(class_id: impl Into<String>, n: u8) -> Result<Self> {
        Self::new(class_id, (1..=n as i64).map(|o| (o, None)))
    }

    pub fn class_id(&self) -> &str {
        &self.class_id
    }

    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    pub fn contains(&self, ordinal: u8) -> bool {
        self.students.contains_key(&ordinal)
    }

    pub fn name(&self, ordinal: u8) -> Option<&str> {
        self.students.get(&ordinal).and_then(|n| n.as_deref())
    }

    pub fn ordinals(&self) -> impl Iterator<Item = u8> + '_ {
        self.students.keys().copied()
    }

    pub fn entries(&self) -> Vec<RosterEntry> {
        self.students
            .iter()
            .map(|(&ordinal, name)| RosterEntry {
                ordinal,
                name: name.clone(),
            })
            .collect()
    }
}

/// A student's answer, or the explicit absence of one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnswerValue {
    Choice(Answer),
    Unknown,
}

impl AnswerValue {
    /// Index into summary counts: A..D then Unknown.
    pub fn index(self) -> usize {
        match self {
            AnswerValue::Choice(a) => a.index(),
            AnswerValue::Unknown => 4,
        }
    }
}

impl fmt::Display for AnswerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnswerValue::Choice(a) => write!(f, "{a}"),
            AnswerValue::Unknown => write!(f, "UNKNOWN"),
        }
    }
}

impl std::str::FromStr for AnswerValue {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "UNKNOWN" | "unknown" | "X" | "x" | "?" => Ok(AnswerValue::Unknown),
            other => other.parse().map(AnswerValue::Choice),
        }
    }
}

impl From<Answer> for AnswerValue {
    fn from(a: Answer) -> Self {
        AnswerValue::Choice(a)
    }
}

impl Serialize for AnswerValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnswerValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Scan,
    Manual,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerRecord {
    pub value: AnswerValue,
    pub source: Source,
    pub timestamp: DateTime<Utc>,
    pub take_id: Option<u32>,
    pub unrostered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionState {
    Open,
    Closed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Question {
    pub number: u32,
    pub tag: Option<String>,
    pub state: QuestionState,
    pub answers: BTreeMap<u8, AnswerRecord>,
}

impl Question {
    pub fn answer(&self, ordinal: u8) -> AnswerValue {
        self.answers
            .get(&ordinal)
            .map(|r| r.value)
            .unwrap_or(AnswerValue::Unknown)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PresenceRecord {
    pub present: bool,
    pub source: Source,
    pub timestamp: DateTime<Utc>,
    pub unrostered: bool,
}

/// Attendance, merged last-write-wins like answers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RollCall {
    pub entries: BTreeMap<u8, PresenceRecord>,
}

impl RollCall {
    pub fn present(&self) -> BTreeSet<u8> {
        self.entries
            .iter()
            .filter(|(_, r)| r.present)
            .map(|(&o, _)| o)
            .collect()
    }
}

/// Pie-chart data for one question. Counts are A, B, C, D, Unknown.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChartData {
    pub question_number: u32,
    pub tag: Option<String>,
    pub counts: [u32; 5],
}

impl ChartData {
    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    pub fn count(&self, value: AnswerValue) -> u32 {
        self.counts[value.index()]
    }

    /// Fraction for one slice; zero when nobody is counted.
    pub fn fraction(&self, value: AnswerValue) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.count(value) as f64 / total as f64
        }
    }

    pub fn counts_by_label(&self) -> BTreeMap<String, u32> {
        ["A", "B", "C", "D", "UNKNOWN"]
            .iter()
            .zip(self.counts)
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Session,
    Question,
    Answer,
    Rollcall,
}

mod rfc3339 {
    use super::*;

    pub fn serialize<S: Serializer>(
        t: &DateTime<Utc>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&t.to_rfc3339_opts(SecondsFormat::Micros, true))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        DateTime::parse_from_rfc3339(&s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(serde::de::Error::custom)
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One line of the answer log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    #[serde(rename = "type")]
    pub kind: RecordKind,
    pub session_id: String,
    pub class_id: String,
    pub question_number: Option<u32>,
    pub tag: Option<String>,
    pub student_ordinal: Option<u8>,
    pub answer: Option<AnswerValue>,
    pub source: Option<Source>,
    #[serde(with = "rfc3339")]
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub take_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub present: Option<bool>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub unrostered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roster: Option<Vec<RosterEntry>>,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}

/// Everything a log replay must reproduce.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionState {
    pub session_id: String,
    pub roster: Roster,
    pub questions: BTreeMap<u32, Question>,
    pub current: Option<u32>,
    pub rollcall: RollCall,
    /// Largest take id in the log.
    pub max_take_id: u32,
}

impl SessionState {
    /// Next automatic question number.
    pub fn next_number(&self) -> u32 {
        self.questions.keys().next_back().map_or(1, |n| n + 1)
    }

    fn apply(&mut self, r: &LogRecord) -> std::result::Result<(), String> {
        if let Some(t) = r.take_id {
            self.max_take_id = self.max_take_id.max(t);
        }
        match r.kind {
            RecordKind::Session => Err("repeated session header".into()),
            RecordKind::Question => {
                let n = r.question_number.ok_or("question without number")?;
                if self.questions.contains_key(&n) {
                    return Err(format!("question {n} repeated"));
                }
                if let Some(q) = self.current.and_then(|c| self.questions.get_mut(&c)) {
                    q.state = QuestionState::Closed;
                }
                self.questions.insert(
                    n,
                    Question {
                        number: n,
                        tag: r.tag.clone(),
                        state: QuestionState::Open,
                        answers: BTreeMap::new(),
                    },
                );
                self.current = Some(n);
                Ok(())
            }
            RecordKind::Answer => {
                let n = r.question_number.ok_or("answer without question")?;
                let q = self
                    .questions
                    .get_mut(&n)
                    .ok_or_else(|| format!("answer for unknown question {n}"))?;
                let ordinal = r.student_ordinal.ok_or("answer without student")?;
                q.answers.insert(
                    ordinal,
                    AnswerRecord {
                        value: r.answer.ok_or("answer without value")?,
                        source: r.source.ok_or("answer without source")?,
                        timestamp: r.timestamp,
                        take_id: r.take_id,
                        unrostered: r.unrostered,
                    },
                );
                Ok(())
            }
            RecordKind::Rollcall => {
                let ordinal = r.student_ordinal.ok_or("rollcall without student")?;
                self.rollcall.entries.insert(
                    ordinal,
                    PresenceRecord {
                        present: r.present.ok_or("rollcall without presence")?,
                        source: r.source.ok_or("rollcall without source")?,
                        timestamp: r.timestamp,
                        unrostered: r.unrostered,
                    },
                );
                Ok(())
            }
        }
    }
}

/// A class session: roster, questions, roll call and the event log.
pub struct Session {
    state: SessionState,
    events: Vec<LogRecord>,
    clock: Box<dyn Clock>,
    takes_issued: u32,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("state", &self.state)
            .field("events", &self.events.len())
            .finish()
    }
}

impl Session {
    /// Opens a session on the wall clock.
    pub fn start(roster: Roster) -> Self {
        Self::start_with_clock(roster, Box::new(SystemClock))
    }

    pub fn start_with_clock(roster: Roster, mut clock: Box<dyn Clock>) -> Self {
        let at = clock.now();
        let session_id = format!("{}-{}", roster.class_id(), at.format("%Y%m%dT%H%M%S%6fZ"));
        let header = LogRecord {
            kind: RecordKind::Session,
            session_id: session_id.clone(),
            class_id: roster.class_id().to_string(),
            question_number: None,
            tag: None,
            student_ordinal: None,
            answer: None,
            source: None,
            timestamp: at,
            take_id: None,
            present: None,
            unrostered: false,
            roster: Some(roster.entries()),
        };
        Self {
            state: SessionState {
                session_id,
                roster,
                questions: BTreeMap::new(),
                current: None,
                rollcall: RollCall::default(),
                max_take_id: 0,
            },
            events: vec![header],
            clock,
            takes_issued: 0,
        }
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn id(&self) -> &str {
        &self.state.session_id
    }

    pub fn roster(&self) -> &Roster {
        &self.state.roster
    }

    pub fn question(&self, number: u32) -> Option<&Question> {
        self.state.questions.get(&number)
    }

    pub fn current_question(&self) -> Option<u32> {
        self.state.current
    }

    pub fn rollcall(&self) -> &RollCall {
        &self.state.rollcall
    }

    pub fn events(&self) -> &[LogRecord] {
        &self.events
    }

    pub fn set_clock(&mut self, clock: Box<dyn Clock>) {
        self.clock = clock;
    }

    /// Reserves an identifier for a new take.
    pub fn next_take_id(&mut self) -> u32 {
        // takes that accepted nothing leave no trace in the log
        self.takes_issued = self.takes_issued.max(self.state.max_take_id) + 1;
        self.takes_issued
    }

    fn record(&self, kind: RecordKind, at: DateTime<Utc>) -> LogRecord {
        LogRecord {
            kind,
            session_id: self.state.session_id.clone(),
            class_id: self.state.roster.class_id().to_string(),
            question_number: None,
            tag: None,
            student_ordinal: None,
            answer: None,
            source: None,
            timestamp: at,
            take_id: None,
            present: None,
            unrostered: false,
            roster: None,
        }
    }

    fn commit(&mut self, r: LogRecord) {
        self.state
            .apply(&r)
            .expect("records built by the session are valid");
        self.events.push(r);
    }

    /// Opens the next question (closing the current one) and returns its
    /// number.
    pub fn start_question(&mut self, tag: Option<String>) -> u32 {
        let n = self.state.next_number();
        self.open_question(n, tag);
        n
    }

    /// Opens a question with an explicit number.
    pub fn start_question_numbered(&mut self, number: u32, tag: Option<String>) -> Result<u32> {
        if number == 0 || self.state.questions.contains_key(&number) {
            return Err(Error::DuplicateQuestion(number));
        }
        self.open_question(number, tag);
        Ok(number)
    }

    fn open_question(&mut self, number: u32, tag: Option<String>) {
        let at = self.clock.now();
        let mut r = self.record(RecordKind::Question, at);
        r.question_number = Some(number);
        r.tag = tag;
        self.commit(r);
    }

    fn open_question_mut(&self, number: u32) -> Result<&Question> {
        let q = self
            .state
            .questions
            .get(&number)
            .ok_or(Error::UnknownQuestion(number))?;
        if q.state == QuestionState::Closed {
            return Err(Error::QuestionClosed(number));
        }
        Ok(q)
    }

    fn answer_record(
        &self,
        q: &Question,
        ordinal: u8,
        value: AnswerValue,
        source: Source,
        at: DateTime<Utc>,
        take_id: Option<u32>,
    ) -> LogRecord {
        // timestamps never go backwards for one student on one question
        let at = q
            .answers
            .get(&ordinal)
            .map_or(at, |prev| at.max(prev.timestamp));
        let mut r = self.record(RecordKind::Answer, at);
        r.question_number = Some(q.number);
        r.tag = q.tag.clone();
        r.student_ordinal = Some(ordinal);
        r.answer = Some(value);
        r.source = Some(source);
        r.take_id = take_id;
        r.unrostered = !self.state.roster.contains(ordinal);
        r
    }

    /// Writes one scanned answer per accepted detection, timestamped now.
    pub fn apply_take(
        &mut self,
        number: u32,
        accepted: &[AcceptedDetection],
        take_id: Option<u32>,
    ) -> Result<()> {
        self.open_question_mut(number)?;
        let at = self.clock.now();
        self.apply_take_at(number, accepted, take_id, at)
    }

    /// [`Session::apply_take`] with an explicit timestamp. Re-applying a take
    /// with the same contents and timestamp changes nothing.
    pub fn apply_take_at(
        &mut self,
        number: u32,
        accepted: &[AcceptedDetection],
        take_id: Option<u32>,
        at: DateTime<Utc>,
    ) -> Result<()> {
        let q = self.open_question_mut(number)?.clone();
        for a in accepted {
            let ordinal = a.id.ordinal();
            let value = AnswerValue::Choice(a.answer);
            if let Some(prev) = q.answers.get(&ordinal) {
                if prev.value == value
                    && prev.source == Source::Scan
                    && prev.timestamp == at
                    && prev.take_id == take_id
                {
                    continue;
                }
            }
            let r = self.answer_record(&q, ordinal, value, Source::Scan, at, take_id);
            self.commit(r);
        }
        Ok(())
    }

    /// Records a teacher's manual answer (or clears it to Unknown).
    pub fn set_manual_answer(
        &mut self,
        number: u32,
        ordinal: i64,
        value: AnswerValue,
    ) -> Result<()> {
        let ordinal = check_ordinal(ordinal)?;
        let q = self.open_question_mut(number)?.clone();
        let at = self.clock.now();
        let r = self.answer_record(&q, ordinal, value, Source::Manual, at, None);
        self.commit(r);
        Ok(())
    }

    /// Answer counts for a question over the roster, or over every card
    /// that answered when the roster is empty.
    pub fn summarize(&self, number: u32) -> Result<ChartData> {
        let q = self
            .state
            .questions
            .get(&number)
            .ok_or(Error::UnknownQuestion(number))?;
        let mut counts = [0u32; 5];
        if self.state.roster.is_empty() {
            for r in q.answers.values() {
                counts[r.value.index()] += 1;
            }
        } else {
            for o in self.state.roster.ordinals() {
                counts[q.answer(o).index()] += 1;
            }
        }
        Ok(ChartData {
            question_number: number,
            tag: q.tag.clone(),
            counts,
        })
    }

    /// Marks every accepted card present, whatever its orientation.
    pub fn roll_call_take(
        &mut self,
        accepted: &[AcceptedDetection],
        take_id: Option<u32>,
    ) -> &RollCall {
        let at = self.clock.now();
        for a in accepted {
            let r = self.presence_record(a.id.ordinal(), true, Source::Scan, at, take_id);
            self.commit(r);
        }
        &self.state.rollcall
    }

    /// Manually toggles a student's presence.
    pub fn set_presence(&mut self, ordinal: i64, present: bool) -> Result<&RollCall> {
        let ordinal = check_ordinal(ordinal)?;
        let at = self.clock.now();
        let r = self.presence_record(ordinal, present, Source::Manual, at, None);
        self.commit(r);
        Ok(&self.state.rollcall)
    }

    fn presence_record(
        &self,
        ordinal: u8,
        present: bool,
        source: Source,
        at: DateTime<Utc>,
        take_id: Option<u32>,
    ) -> LogRecord {
        let at = self
            .state
            .rollcall
            .entries
            .get(&ordinal)
            .map_or(at, |prev| at.max(prev.timestamp));
        let mut r = self.record(RecordKind::Rollcall, at);
        r.student_ordinal = Some(ordinal);
        r.present = Some(present);
        r.source = Some(source);
        r.take_id = take_id;
        r.unrostered = !self.state.roster.contains(ordinal);
        r
    }

    /// The full event history as log lines.
    pub fn export_log(&self) -> Vec<String> {
        self.events.iter().map(LogRecord::to_line).collect()
    }

    /// Rebuilds a session from exported log lines. New events use `clock`.
    pub fn replay<S: AsRef<str>>(
        lines: impl IntoIterator<Item = S>,
        clock: Box<dyn Clock>,
    ) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in lines.into_iter().enumerate() {
            let line = line.as_ref().trim();
            if line.is_empty() {
                continue;
            }
            let r: LogRecord = serde_json::from_str(line).map_err(|e| Error::MalformedLog {
                line: i + 1,
                msg: e.to_string(),
            })?;
            records.push((i + 1, r));
        }
        let mut iter = records.into_iter();
        let (_, header) = iter.next().ok_or(Error::MalformedLog {
            line: 1,
            msg: "empty log".into(),
        })?;
        if header.kind != RecordKind::Session {
            return Err(Error::MalformedLog {
                line: 1,
                msg: "log must start with a session line".into(),
            });
        }
        let entries = header.roster.clone().unwrap_or_default();
        let roster = Roster::new(
            header.class_id.clone(),
            entries.into_iter().map(|e| (e.ordinal as i64, e.name)),
        )
        .map_err(|e| Error::MalformedLog {
            line: 1,
            msg: e.to_string(),
        })?;
        let mut session = Self {
            state: SessionState {
                session_id: header.session_id.clone(),
                roster,
                questions: BTreeMap::new(),
                current: None,
                rollcall: RollCall::default(),
                max_take_id: 0,
            },
            events: vec![header],
            clock,
            takes_issued: 0,
        };
        for (line, r) in iter {
            session
                .state
                .apply(&r)
                .map_err(|msg| Error::MalformedLog { line, msg })?;
            session.events.push(r);
        }
        Ok(session)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Summary CSV: one row per question, in question order.
pub fn summary_csv(session: &Session) -> String {
    let mut out = String::from("question_number,tag,A,B,C,D,unknown\n");
    for &n in session.state.questions.keys() {
        let c = session.summarize(n).expect("question exists");
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            n,
            csv_field(c.tag.as_deref().unwrap_or("")),
            c.counts[0],
            c.counts[1],
            c.counts[2],
            c.counts[3],
            c.counts[4]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{CodeId, Orientation};

    fn session(n: u8) -> Session {
        Session::start_with_clock(
            Roster::numbered("math-7b", n).unwrap(),
            Box::new(LogicalClock::default()),
        )
    }

    fn acc(ordinal: u8, answer: Answer) -> AcceptedDetection {
        AcceptedDetection {
            id: CodeId::from_ordinal(ordinal as i64).unwrap(),
            answer,
            sightings: 12,
            longest_run: 12,
            last_center: (0.0, 0.0),
            last_seen_frame: 11,
        }
    }

    #[test]
    fn roster_validation() {
        assert!(matches!(
            Roster::new("c", [(100, None)]),
            Err(Error::InvalidRoster(_))
        ));
        assert!(matches!(
            Roster::new("c", [(3, None), (3, None)]),
            Err(Error::InvalidRoster(_))
        ));
        assert!(Roster::new("c", std::iter::empty()).unwrap().is_empty());
        let s = session(3);
        assert_eq!(s.state().questions.len(), 0);
        assert_eq!(s.state().next_number(), 1);
    }

    #[test]
    fn question_numbers() {
        let mut s = session(3);
        assert_eq!(s.start_question(None), 1);
        assert_eq!(s.start_question(Some("t".into())), 2);
        assert_eq!(s.start_question_numbered(10, None).unwrap(), 10);
        assert_eq!(
            s.start_question_numbered(2, None),
            Err(Error::DuplicateQuestion(2))
        );
        assert_eq!(s.start_question(None), 11);
        assert_eq!(s.question(1).unwrap().state, QuestionState::Closed);
        assert_eq!(
            s.apply_take(1, &[acc(1, Answer::A)], None),
            Err(Error::QuestionClosed(1))
        );
        assert_eq!(s.apply_take(5, &[], None), Err(Error::UnknownQuestion(5)));
    }

    #[test]
    fn last_write_wins() {
        let mut s = session(4);
        let q = s.start_question(None);
        s.apply_take(q, &[acc(1, Answer::A)], Some(1)).unwrap();
        s.apply_take(q, &[acc(1, Answer::B)], Some(2)).unwrap();
        assert_eq!(s.question(q).unwrap().answer(1), Answer::B.into());

        s.apply_take(q, &[acc(2, Answer::C)], Some(3)).unwrap();
        assert_eq!(s.question(q).unwrap().answer(2), Answer::C.into());
        assert_eq!(s.question(q).unwrap().answer(1), Answer::B.into());

        s.set_manual_answer(q, 3, Answer::D.into()).unwrap();
        s.apply_take(q, &[acc(3, Answer::A)], Some(4)).unwrap();
        let r = &s.question(q).unwrap().answers[&3];
        assert_eq!(r.value, Answer::A.into());
        assert_eq!(r.source, Source::Scan);
    }

    #[test]
    fn manual_answers() {
        let mut s = session(4);
        let q = s.start_question(None);
        s.set_manual_answer(q, 3, Answer::C.into()).unwrap();
        let r = &s.question(q).unwrap().answers[&3];
        assert_eq!((r.value, r.source), (Answer::C.into(), Source::Manual));

        s.apply_take(q, &[acc(2, Answer::A)], None).unwrap();
        s.set_manual_answer(q, 2, Answer::B.into()).unwrap();
        let r = &s.question(q).unwrap().answers[&2];
        assert_eq!((r.value, r.source), (Answer::B.into(), Source::Manual));

        assert_eq!(
            s.set_manual_answer(q, 0, AnswerValue::Unknown),
            Err(Error::BadOrdinal(0))
        );
    }

    #[test]
    fn summaries() {
        let mut s = session(4);
        let q = s.start_question(None);
        let empty = s.summarize(q).unwrap();
        assert_eq!(empty.fraction(AnswerValue::Unknown), 1.0);
        s.apply_take(
            q,
            &[
                acc(1, Answer::A),
                acc(2, Answer::A),
                acc(3, Answer::B),
                acc(4, Answer::C),
            ],
            None,
        )
        .unwrap();
        let c = s.summarize(q).unwrap();
        assert_eq!(c.counts, [2, 1, 1, 0, 0]);
        assert_eq!(c.fraction(Answer::A.into()), 0.5);
        assert_eq!(c.fraction(Answer::B.into()), 0.25);

        let mut s = session(2);
        let q = s.start_question(None);
        s.apply_take(q, &[acc(1, Answer::A)], None).unwrap();
        let c = s.summarize(q).unwrap();
        assert_eq!(c.fraction(Answer::A.into()), 0.5);
        assert_eq!(c.fraction(AnswerValue::Unknown), 0.5);
    }

    #[test]
    fn anonymous_mode_counts_observed_cards() {
        let mut s = Session::start_with_clock(
            Roster::new("anon", std::iter::empty()).unwrap(),
            Box::new(LogicalClock::default()),
        );
        let q = s.start_question(None);
        s.apply_take(q, &[acc(40, Answer::D), acc(41, Answer::D)], None)
            .unwrap();
        assert_eq!(s.summarize(q).unwrap().counts, [0, 0, 0, 2, 0]);
        assert!(s.question(q).unwrap().answers[&40].unrostered);
    }

    #[test]
    fn rollcall() {
        let mut s = session(10);
        let mut a = acc(5, Answer::C);
        a.answer = crate::codec::orientation_to_answer(Orientation::new(std::f64::consts::PI));
        assert_eq!(s.roll_call_take(&[a], Some(1)).present(), [5].into());

        let mut s = session(10);
        s.roll_call_take(&[], None);
        assert_eq!(s.set_presence(7, true).unwrap().present(), [7].into());
        s.set_presence(7, false).unwrap();
        assert!(s.rollcall().present().is_empty());

        let mut s = session(3);
        s.roll_call_take(&[acc(50, Answer::A)], None);
        assert!(s.rollcall().entries[&50].unrostered);
    }

    #[test]
    fn log_lines() {
        let mut s = session(3);
        assert_eq!(s.export_log().len(), 1);
        let q = s.start_question(Some("warmup".into()));
        s.apply_take(q, &[acc(1, Answer::A), acc(2, Answer::B)], Some(1))
            .unwrap();
        let log = s.export_log();
        assert_eq!(log.len(), 4);
        let v: serde_json::Value = serde_json::from_str(&log[2]).unwrap();
        assert_eq!(v["type"], "answer");
        assert_eq!(v["answer"], "A");
        assert_eq!(v["source"], "scan");
        assert_eq!(v["tag"], "warmup");
        assert_eq!(v["question_number"], 1);
        assert_eq!(v["class_id"], "math-7b");
        assert!(v["timestamp"].as_str().unwrap().ends_with('Z'));
    }

    #[test]
    fn overridden_answer_keeps_both_events() {
        let mut s = session(3);
        let q = s.start_question(None);
        s.apply_take(q, &[acc(1, Answer::A)], None).unwrap();
        s.set_manual_answer(q, 1, Answer::D.into()).unwrap();
        let answers: Vec<_> = s
            .events()
            .iter()
            .filter(|r| r.kind == RecordKind::Answer)
            .collect();
        assert_eq!(answers.len(), 2);
        assert!(answers[0].timestamp <= answers[1].timestamp);
        assert_eq!(answers[1].answer, Some(AnswerValue::Choice(Answer::D)));
    }

    #[test]
    fn apply_take_idempotent() {
        let mut s = session(3);
        let q = s.start_question(None);
        let at = Utc.with_ymd_and_hms(2024, 5, 1, 9, 0, 0).unwrap();
        let take = [acc(1, Answer::A), acc(2, Answer::C)];
        s.apply_take_at(q, &take, Some(1), at).unwrap();
        let before = (s.state().clone(), s.events().len());
        s.apply_take_at(q, &take, Some(1), at).unwrap();
        assert_eq!((s.state().clone(), s.events().len()), before);
    }

    #[test]
    fn replay_rebuilds_state() {
        let mut s = session(5);
        let q = s.start_question(Some("a, \"b\"".into()));
        s.apply_take(q, &[acc(1, Answer::A), acc(9, Answer::B)], Some(1))
            .unwrap();
        s.set_manual_answer(q, 1, AnswerValue::Unknown).unwrap();
        s.roll_call_take(&[acc(2, Answer::A)], Some(2));
        s.start_question_numbered(7, None).unwrap();
        let r = Session::replay(s.export_log(), Box::new(SystemClock)).unwrap();
        assert_eq!(r.state(), s.state());
        assert_eq!(r.export_log(), s.export_log());
        assert_eq!(summary_csv(&r), summary_csv(&s));
        assert!(summary_csv(&s).contains("\"a, \"\"b\"\"\""));
    }

    #[test]
    fn replay_rejects_garbage() {
        assert!(matches!(
            Session::replay(["{"], Box::new(SystemClock)),
            Err(Error::MalformedLog { line: 1, .. })
        ));
        assert!(Session::replay(Vec::<String>::new(), Box::new(SystemClock)).is_err());
        let s = session(1);
        let mut lines = s.export_log();
        lines.push(lines[0].clone());
        assert!(matches!(
            Session::replay(lines, Box::new(SystemClock)),
            Err(Error::MalformedLog { line: 2, .. })
        ));
    }
}
