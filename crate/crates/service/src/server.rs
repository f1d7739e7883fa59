//! WebSocket session server for the teacher console.
//!
//! One operator at a time: a second connection gets a `BUSY` error and is
//! closed. Session state lives in the event log, which is appended to
//! `<state_dir>/session.ndjson` after every change and replayed on start.
//! A take in progress when the operator disconnects is discarded.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;
use std::time::Duration;

use classcode_core::session::{AnswerValue, Roster, Session};
use tungstenite::protocol::WebSocketConfig;
use tungstenite::{Message, WebSocket};

use crate::engine::{ClockKind, Engine, EngineError, PipelineConfig, TakeMode};
use crate::frames::decode_image;
use crate::protocol::{
    parse_client, AcceptedItem, ClientMessage, ErrorCode, ServerMessage, SummaryBody,
    MAX_FRAME_BYTES,
};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub bind: SocketAddr,
    /// Where the session log is kept; `None` keeps it in memory only.
    pub state_dir: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub clock: ClockKind,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: SocketAddr::from(([127, 0, 0, 1], 8765)),
            state_dir: None,
            pipeline: PipelineConfig::default(),
            clock: ClockKind::System,
        }
    }
}

const LOG_FILE: &str = "session.ndjson";

/// Appends session events to disk as they happen.
struct Store {
    dir: PathBuf,
    written: usize,
}

impl Store {
    fn path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    fn load(dir: &Path, clock: ClockKind) -> io::Result<Option<Session>> {
        let path = dir.join(LOG_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        let mut session = Session::replay(text.lines(), clock.make()).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: {e}", path.display()),
            )
        })?;
        session.set_clock(clock.resume(&session));
        Ok(Some(session))
    }

    /// Starts a new log, keeping the previous one under its session id.
    fn begin(&mut self, previous: Option<&Session>, session: &Session) -> io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let path = self.path();
        if let (true, Some(prev)) = (path.exists(), previous) {
            let safe: String = prev
                .id()
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            fs::rename(&path, self.dir.join(format!("session-{safe}.ndjson")))?;
        }
        fs::write(&path, "")?;
        self.written = 0;
        self.sync(session)
    }

    fn sync(&mut self, session: &Session) -> io::Result<()> {
        let lines = session.export_log();
        if lines.len() <= self.written {
            return Ok(());
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path())?;
        for line in &lines[self.written..] {
            writeln!(f, "{line}")?;
        }
        f.flush()?;
        self.written = lines.len();
        Ok(())
    }
}

struct State {
    engine: Option<Engine>,
    store: Option<Store>,
}

/// Message handling, independent of the transport.
pub struct Dispatcher {
    state: Mutex<State>,
    pipeline: PipelineConfig,
    clock: ClockKind,
}

impl Dispatcher {
    /// Opens a dispatcher, resuming the session logged in `state_dir`.
    pub fn open(config: &ServerConfig) -> io::Result<Self> {
        let mut engine = None;
        let mut store = None;
        if let Some(dir) = &config.state_dir {
            fs::create_dir_all(dir)?;
            let session = Store::load(dir, config.clock)?;
            let written = session.as_ref().map_or(0, |s| s.export_log().len());
            if let Some(s) = session {
                log::info!("resumed session {} from {}", s.id(), dir.display());
                engine = Some(Engine::new(s, config.pipeline.clone()));
            }
            store = Some(Store {
                dir: dir.clone(),
                written,
            });
        }
        Ok(Self {
            state: Mutex::new(State { engine, store }),
            pipeline: config.pipeline.clone(),
            clock: config.clock,
        })
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Session log lines, if a session is open.
    pub fn log(&self) -> Option<Vec<String>> {
        self.lock().engine.as_ref().map(Engine::export_log)
    }

    pub fn handle_text(&self, text: &str) -> ServerMessage {
        match parse_client(text) {
            Ok(msg) => self.handle(msg),
            Err(reply) => reply,
        }
    }

    pub fn handle_binary(&self, bytes: &[u8]) -> ServerMessage {
        if bytes.len() > MAX_FRAME_BYTES {
            return ServerMessage::error(
                ErrorCode::FrameTooLarge,
                format!("frame of {} bytes exceeds {MAX_FRAME_BYTES}", bytes.len()),
            );
        }
        {
            let st = self.lock();
            match &st.engine {
                None => return no_session(),
                Some(e) if !e.take_open() => return (&EngineError::NoTake).into(),
                Some(_) => {}
            }
        }
        let image = match decode_image(bytes) {
            Ok(g) => g,
            Err(e) => return ServerMessage::error(ErrorCode::BadImage, e.to_string()),
        };
        let mut st = self.lock();
        let Some(engine) = st.engine.as_mut() else {
            return no_session();
        };
        match engine.process_frame(&image) {
            Ok(fr) => ServerMessage::frame(&fr),
            Err(e) => (&e).into(),
        }
    }

    /// Drops the open take, as when the operator goes away.
    pub fn discard_take(&self) -> bool {
        self.lock()
            .engine
            .as_mut()
            .is_some_and(Engine::discard_take)
    }

    pub fn handle(&self, msg: ClientMessage) -> ServerMessage {
        let mut guard = self.lock();
        let State { engine, store } = &mut *guard;

        if let ClientMessage::StartSession { class_id, roster } = msg {
            if engine.as_ref().is_some_and(Engine::take_open) {
                return (&EngineError::TakeOpen).into();
            }
            let roster =
                match Roster::new(class_id, roster.into_iter().map(|r| (r.ordinal, r.name))) {
                    Ok(r) => r,
                    Err(e) => return (&EngineError::Core(e)).into(),
                };
            let session = Session::start_with_clock(roster, self.clock.make());
            let reply = ServerMessage::SessionStarted {
                session_id: session.id().to_string(),
                class_id: session.roster().class_id().to_string(),
                roster_size: session.roster().len(),
            };
            let previous = engine.replace(Engine::new(session, self.pipeline.clone()));
            if let Some(store) = store {
                let current = engine.as_ref().expect("just set").session();
                if let Err(e) = store.begin(previous.as_ref().map(Engine::session), current) {
                    log::error!("cannot write session log: {e}");
                }
            }
            return reply;
        }

        let Some(engine) = engine.as_mut() else {
            return no_session();
        };
        let reply = match dispatch(engine, msg) {
            Ok(r) => r,
            Err(e) => (&e).into(),
        };
        if let Some(store) = store {
            if let Err(e) = store.sync(engine.session()) {
                log::error!("cannot append to session log: {e}");
            }
        }
        reply
    }
}

fn no_session() -> ServerMessage {
    ServerMessage::error(ErrorCode::NoSession, "start a session first")
}

fn dispatch(engine: &mut Engine, msg: ClientMessage) -> Result<ServerMessage, EngineError> {
    Ok(match msg {
        ClientMessage::StartSession { .. } => unreachable!("handled by the caller"),
        ClientMessage::StartQuestion { tag, number } => {
            let number = engine.start_question(tag.clone(), number)?;
            ServerMessage::QuestionStarted { number, tag }
        }
        ClientMessage::BeginTake { mode } => ServerMessage::TakeStarted {
            take_id: engine.begin_take(mode)?,
            mode,
        },
        ClientMessage::EndTake { single_shot } => {
            let out = engine.end_take(single_shot)?;
            let (summary, present) = match out.mode {
                TakeMode::Answers => {
                    let chart = engine.summary(out.question)?;
                    (Some(SummaryBody::from(&chart)), None)
                }
                TakeMode::Rollcall => (
                    None,
                    Some(engine.session().rollcall().present().into_iter().collect()),
                ),
            };
            ServerMessage::TakeResult {
                take_id: out.take_id,
                mode: out.mode,
                frames: out.frames,
                accepted: out.accepted.iter().map(AcceptedItem::from).collect(),
                summary,
                present,
            }
        }
        ClientMessage::SetAnswer {
            ordinal,
            answer,
            question,
        } => {
            let value: AnswerValue = match answer.parse() {
                Ok(v) => v,
                Err(e) => return Ok(ServerMessage::error(ErrorCode::BadAnswer, e)),
            };
            let question = engine.set_answer(question, ordinal, value)?;
            ServerMessage::AnswerSet {
                question,
                ordinal: ordinal as u8,
                answer: value.to_string(),
            }
        }
        ClientMessage::SetPresence { ordinal, present } => {
            engine.set_presence(ordinal, present)?;
            ServerMessage::PresenceSet {
                ordinal: ordinal as u8,
                present,
            }
        }
        ClientMessage::GetSummary { question } => {
            ServerMessage::Summary(SummaryBody::from(&engine.summary(question)?))
        }
        ClientMessage::ExportLog => ServerMessage::Log {
            lines: engine.export_log(),
        },
    })
}

struct Shared {
    dispatcher: Dispatcher,
    busy: AtomicBool,
    stop: AtomicBool,
}

/// Releases the operator slot when a connection ends.
struct Operator(Arc<Shared>);

impl Drop for Operator {
    fn drop(&mut self) {
        if self.0.dispatcher.discard_take() {
            log::info!("operator left mid-take; take discarded");
        }
        self.0.busy.store(false, Ordering::SeqCst);
    }
}

pub struct Server {
    listener: TcpListener,
    shared: Arc<Shared>,
}

impl Server {
    pub fn bind(config: &ServerConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(config.bind)?;
        Ok(Self {
            listener,
            shared: Arc::new(Shared {
                dispatcher: Dispatcher::open(config)?,
                busy: AtomicBool::new(false),
                stop: AtomicBool::new(false),
            }),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections until shut down.
    pub fn run(self) -> io::Result<()> {
        for stream in self.listener.incoming() {
            if self.shared.stop.load(Ordering::SeqCst) {
                break;
            }
            match stream {
                Ok(s) => {
                    let shared = self.shared.clone();
                    std::thread::spawn(move || connection(shared, s));
                }
                Err(e) => log::warn!("accept failed: {e}"),
            }
        }
        Ok(())
    }

    /// Runs the server on a background thread.
    pub fn spawn(self) -> io::Result<ServerHandle> {
        let addr = self.local_addr()?;
        let shared = self.shared.clone();
        let thread = std::thread::spawn(move || self.run());
        Ok(ServerHandle {
            addr,
            shared,
            thread: Some(thread),
        })
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// The current session log, read without a connection.
    pub fn log(&self) -> Option<Vec<String>> {
        self.shared.dispatcher.log()
    }

    /// Stops accepting connections; open connections end on their own.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> tungstenite::Result<()> {
    ws.send(Message::text(msg.to_json()))
}

fn connection(shared: Arc<Shared>, stream: TcpStream) {
    if shared.stop.load(Ordering::SeqCst) {
        return;
    }
    let peer = stream.peer_addr().ok();
    // claim the operator slot before the handshake completes, so a client
    // that has connected is guaranteed to hold it
    let claimed = shared
        .busy
        .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
        .is_ok();
    let operator = claimed.then(|| Operator(shared.clone()));
    // protocol limit is enforced per message; this only bounds memory
    let config = WebSocketConfig::default()
        .max_message_size(Some(8 * MAX_FRAME_BYTES))
        .max_frame_size(Some(8 * MAX_FRAME_BYTES));
    let mut ws = match tungstenite::accept_with_config(stream, Some(config)) {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("handshake with {peer:?} failed: {e}");
            return;
        }
    };
    let Some(_operator) = operator else {
        log::info!("refused {peer:?}: operator already connected");
        let _ = send(
            &mut ws,
            &ServerMessage::error(ErrorCode::Busy, "another operator is connected"),
        );
        let _ = ws.close(None);
        let _ = ws.get_ref().set_read_timeout(Some(Duration::from_secs(2)));
        while ws.read().is_ok() {}
        return;
    };
    log::info!("operator connected from {peer:?}");
    loop {
        let reply = match ws.read() {
            Ok(Message::Text(t)) => shared.dispatcher.handle_text(t.as_str()),
            Ok(Message::Binary(b)) => shared.dispatcher.handle_binary(&b),
            Ok(_) => continue,
            Err(tungstenite::Error::Capacity(e)) => {
                let _ = send(
                    &mut ws,
                    &ServerMessage::error(ErrorCode::FrameTooLarge, e.to_string()),
                );
                break;
            }
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break,
            Err(e) => {
                log::warn!("connection to {peer:?} failed: {e}");
                break;
            }
        };
        if let Err(e) = send(&mut ws, &reply) {
            log::warn!("cannot reply to {peer:?}: {e}");
            break;
        }
    }
    log::info!("operator {peer:?} disconnected");
}
