//! Command line front end.

use std::fmt::Write as _;
use std::fs;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use classcode_core::detector::StageTimings;
use classcode_core::session::{summary_csv, Roster, Session};
use classcode_core::sheetgen::{render_sheet, sheet_index_csv, PageLayout};
use classcode_core::synth::{
    classroom_scene, render_scene, Background, ClassroomOptions, SceneSpec,
};
use classcode_core::temporal::required_run;

use crate::engine::{ClockKind, Engine, PipelineConfig, TakeMode};
use crate::frames::{write_gif, FrameSource};
use crate::server::{Server, ServerConfig};

/// Failure with the process exit status to report.
#[derive(Debug, thiserror::Error)]
#[error("{msg}")]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn new(code: i32, msg: impl Into<String>) -> Self {
        Self {
            code,
            msg: msg.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::new(1, format!("{}: {e}", path.display()))
    }
}

pub const EXIT_UNREADABLE: i32 = 2;
pub const EXIT_NO_FRAMES: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "classcode",
    version,
    about = "Paper-card classroom polls: cards, scans and a live session server"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate printable cards (SVG pages plus index.csv).
    Cards(CardsArgs),
    /// Scan a video or image directory into a session log and summary.
    Scan(ScanArgs),
    /// Run the live session server for the teacher console.
    Serve(ServeArgs),
    /// Summarize an answer log.
    Report(ReportArgs),
    /// Render synthetic test frames with ground truth.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClockArg {
    /// Wall-clock timestamps.
    System,
    /// Timestamps from 2024-01-01T08:00:00Z in one-second steps, for
    /// reproducible logs.
    Logical,
}

impl From<ClockArg> for ClockKind {
    fn from(c: ClockArg) -> Self {
        match c {
            ClockArg::System => ClockKind::System,
            ClockArg::Logical => ClockKind::Logical,
        }
    }
}

/// Detector and temporal settings. A TOML file with `[detector]` and
/// `[temporal]` tables sets the base; flags override it.
#[derive(Clone, Debug, Args)]
pub struct PipelineArgs {
    #[arg(long, env = "CLASSCODE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Close/open the binary image to remove 1-px hairlines.
    #[arg(long, env = "CLASSCODE_REPAIR_HAIRLINES")]
    pub repair_hairlines: bool,
    /// Required contiguous run as a fraction of the take length.
    #[arg(long, env = "CLASSCODE_TEMPORAL_FRACTION")]
    pub temporal_fraction: Option<f64>,
    #[arg(long, env = "CLASSCODE_MIN_RUN")]
    pub min_run: Option<u32>,
    #[arg(long, env = "CLASSCODE_MAX_RUN")]
    pub max_run: Option<u32>,
    /// Smallest decodable code diameter in pixels.
    #[arg(long, env = "CLASSCODE_MIN_DIAMETER")]
    pub min_diameter: Option<f64>,
    #[arg(long, env = "CLASSCODE_MAX_RADIAL_SPREAD")]
    pub max_radial_spread: Option<f64>,
    #[arg(long, env = "CLASSCODE_MIN_WHITE_RATIO")]
    pub min_white_ratio: Option<f64>,
    #[arg(long, env = "CLASSCODE_MAX_WHITE_RATIO")]
    pub max_white_ratio: Option<f64>,
    #[arg(long, env = "CLASSCODE_MAX_WHITE_ASYMMETRY")]
    pub max_white_asymmetry: Option<f64>,
    #[arg(long, env = "CLASSCODE_MATCH_RADIUS")]
    pub match_radius: Option<f64>,
    #[arg(long, env = "CLASSCODE_CLOCK", value_enum, default_value = "system")]
    pub clock: ClockArg,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                toml::from_str(&text)
                    .map_err(|e| CliError::new(1, format!("{}: {e}", path.display())))?
            }
            None => PipelineConfig::default(),
        };
        let d = &mut cfg.detector;
        d.repair_hairlines |= self.repair_hairlines;
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut d.min_diameter, self.min_diameter);
        set(&mut d.max_radial_spread, self.max_radial_spread);
        set(&mut d.min_white_ratio, self.min_white_ratio);
        set(&mut d.max_white_ratio, self.max_white_ratio);
        set(&mut d.max_white_asymmetry, self.max_white_asymmetry);
        set(&mut d.match_radius, self.match_radius);
        let t = &mut cfg.temporal;
        set(&mut t.fraction, self.temporal_fraction);
        if let Some(v) = self.min_run {
            t.min_run = v;
        }
        if let Some(v) = self.max_run {
            t.max_run = v;
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Args)]
pub struct CardsArgs {
    /// Inclusive ordinal range such as `1..30`.
    #[arg(long, conflicts_with = "ordinals")]
    pub range: Option<String>,
    /// Comma-separated ordinals; repeats print extra copies.
    #[arg(long, value_delimiter = ',')]
    pub ordinals: Vec<i64>,
    #[arg(long, default_value_t = 2)]
    pub per_page: usize,
    /// Grid columns (default: as square a grid as possible).
    #[arg(long)]
    pub columns: Option<usize>,
    #[arg(long, default_value_t = 148.0)]
    pub card_width_mm: f64,
    #[arg(long, default_value_t = 210.0)]
    pub card_height_mm: f64,
    #[arg(long, default_value_t = 120.0)]
    pub code_mm: f64,
    #[arg(long, default_value_t = 10.0)]
    pub gap_mm: f64,
    #[arg(long, short, default_value = "cards")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Answers,
    Rollcall,
}

#[derive(Clone, Debug, Args)]
pub struct ScanArgs {
    /// Image directory (frames in file-name order), image, animated GIF,
    /// or a video file (needs ffmpeg).
    pub input: PathBuf,
    #[arg(long, short, default_value = ".")]
    pub out_dir: PathBuf,
    /// Answer log path (default: <out-dir>/answers.ndjson).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Summary CSV path (default: <out-dir>/summary.csv).
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Continue the session in this log instead of starting one.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, default_value = "class", env = "CLASSCODE_CLASS_ID")]
    pub class_id: String,
    /// Roster of students 1..=N.
    #[arg(long, conflicts_with = "roster")]
    pub students: Option<u8>,
    /// Roster CSV with `ordinal,name` rows.
    #[arg(long)]
    pub roster: Option<PathBuf>,
    /// Question number (default: next in the session).
    #[arg(long)]
    pub question: Option<u32>,
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long, value_enum, default_value = "answers")]
    pub mode: ModeArg,
    /// Still-photo mode: accept every code seen at least once.
    #[arg(long)]
    pub single_shot: bool,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Clone, Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "CLASSCODE_BIND", default_value = "127.0.0.1")]
    pub bind: IpAddr,
    #[arg(long, env = "CLASSCODE_PORT", default_value_t = 8765)]
    pub port: u16,
    /// Directory holding the session log.
    #[arg(long, env = "CLASSCODE_STATE_DIR", default_value = "classcode-state")]
    pub state_dir: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Clone, Debug, Args)]
pub struct ReportArgs {
    /// Answer log written by `scan` or `serve`.
    pub log: PathBuf,
    /// Write the summary CSV here instead of standard output.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML).
    #[arg(long, conflicts_with = "classroom")]
    pub scene: Option<PathBuf>,
    /// Random classroom of 40 cards from this seed.
    #[arg(long)]
    pub classroom: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub frames: usize,
    /// Write one animated GIF instead of PNG files.
    #[arg(long)]
    pub gif: bool,
    #[arg(long, short, default_value = "frames")]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cards(a) => cards(&a),
        Command::Scan(a) => scan(&a).map(|report| print!("{report}")),
        Command::Serve(a) => serve(&a),
        Command::Report(a) => report(&a),
        Command::Synth(a) => synth(&a),
    }
}

fn parse_range(s: &str) -> Result<Vec<i64>, CliError> {
    let bad = || CliError::new(1, format!("bad range {s:?}; expected FIRST..LAST"));
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(bad)?;
    let a: i64 = a.trim().parse().map_err(|_| bad())?;
    let b: i64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

pub fn cards(a: &CardsArgs) -> Result<(), CliError> {
    let mut ordinals = match &a.range {
        Some(r) => parse_range(r)?,
        None => a.ordinals.clone(),
    };
    if ordinals.is_empty() {
        ordinals = (1..=99).collect();
    }
    let mut layout = PageLayout::with_cards_per_page(a.per_page);
    if let Some(c) = a.columns {
        layout.columns = c;
    }
    layout.card_width_mm = a.card_width_mm;
    layout.card_height_mm = a.card_height_mm;
    layout.code_diameter_mm = a.code_mm;
    layout.gap_mm = a.gap_mm;
    let pages = render_sheet(&ordinals, &layout).map_err(|e| CliError::new(1, e.to_string()))?;
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let name = |p: usize| format!("page-{p:03}.svg");
    for (i, page) in pages.iter().enumerate() {
        let path = a.out_dir.join(name(i + 1));
        fs::write(&path, page.drawing.to_svg()).map_err(|e| CliError::io(&path, e))?;
    }
    let index = a.out_dir.join("index.csv");
    fs::write(&index, sheet_index_csv(&pages, name)).map_err(|e| CliError::io(&index, e))?;
    println!(
        "{} cards on {} pages in {}",
        ordinals.len(),
        pages.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn load_roster(a: &ScanArgs) -> Result<Roster, CliError> {
    let bad = |e: classcode_core::Error| CliError::new(1, e.to_string());
    if let Some(n) = a.students {
        return Roster::numbered(a.class_id.clone(), n).map_err(bad);
    }
    let Some(path) = &a.roster else {
        return Roster::new(a.class_id.clone(), std::iter::empty()).map_err(bad);
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("ordinal")) {
            continue;
        }
        let (o, name) = line.split_once(',').unwrap_or((line, ""));
        let o: i64 = o.trim().parse().map_err(|_| {
            CliError::new(
                1,
                format!("{}:{}: bad ordinal {o:?}", path.display(), i + 1),
            )
        })?;
        let name = name.trim();
        entries.push((o, (!name.is_empty()).then(|| name.to_string())));
    }
    Roster::new(a.class_id.clone(), entries).map_err(bad)
}

#[derive(Default)]
struct TimingTotals {
    frames: u32,
    sum: StageTimings,
}

impl TimingTotals {
    fn add(&mut self, t: &StageTimings) {
        self.frames += 1;
        self.sum.binarize_us += t.binarize_us;
        self.sum.morphology_us += t.morphology_us;
        self.sum.candidates_us += t.candidates_us;
        self.sum.decode_us += t.decode_us;
        self.sum.total_us += t.total_us;
    }

    fn avg_ms(&self, us: u64) -> f64 {
        us as f64 / 1000.0 / self.frames.max(1) as f64
    }
}

/// Runs an offline scan; returns the printed report.
pub fn scan(a: &ScanArgs) -> Result<String, CliError> {
    let config = a.pipeline.resolve()?;
    let clock: ClockKind = a.pipeline.clock.into();
    let session = match &a.resume {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::new(EXIT_UNREADABLE, format!("{}: {e}", path.display())))?;
            let mut s = Session::replay(text.lines(), clock.make())
                .map_err(|e| CliError::new(EXIT_UNREADABLE, format!("{}: {e}", path.display())))?;
            s.set_clock(clock.resume(&s));
            s
        }
        None => Session::start_with_clock(load_roster(a)?, clock.make()),
    };
    let mut source =
        FrameSource::open(&a.input).map_err(|e| CliError::new(EXIT_UNREADABLE, e.to_string()))?;

    let mut engine = Engine::new(session, config.clone());
    let mode = match a.mode {
        ModeArg::Answers => {
            engine
                .start_question(a.tag.clone(), a.question)
                .map_err(|e| CliError::new(1, e.to_string()))?;
            TakeMode::Answers
        }
        ModeArg::Rollcall => TakeMode::Rollcall,
    };
    engine
        .begin_take(mode)
        .map_err(|e| CliError::new(1, e.to_string()))?;

    let mut totals = TimingTotals::default();
    let started = Instant::now();
    for frame in &mut source {
        let frame = frame.map_err(|e| CliError::new(EXIT_UNREADABLE, e.to_string()))?;
        let fr = engine
            .process_frame(&frame)
            .map_err(|e| CliError::new(EXIT_UNREADABLE, e.to_string()))?;
        totals.add(&fr.timings);
    }
    let elapsed = started.elapsed();
    if totals.frames == 0 {
        return Err(CliError::new(
            EXIT_NO_FRAMES,
            format!("{}: no frames", a.input.display()),
        ));
    }
    let needed = required_run(totals.frames, &config.temporal);
    if !a.single_shot && totals.frames < needed {
        eprintln!(
            "warning: {} frame(s) scanned but a code must be seen in {needed} contiguous frames; \
             nothing can be accepted. For still photos use --single-shot.",
            totals.frames
        );
    }
    let outcome = engine
        .end_take(a.single_shot)
        .map_err(|e| CliError::new(1, e.to_string()))?;

    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let log_path = a
        .log
        .clone()
        .unwrap_or_else(|| a.out_dir.join("answers.ndjson"));
    let summary_path = a
        .summary
        .clone()
        .unwrap_or_else(|| a.out_dir.join("summary.csv"));
    let mut log = engine.export_log().join("\n");
    log.push('\n');
    fs::write(&log_path, log).map_err(|e| CliError::io(&log_path, e))?;
    fs::write(&summary_path, summary_csv(engine.session()))
        .map_err(|e| CliError::io(&summary_path, e))?;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "take {} ({:?}): {} frames, {} accepted{}",
        outcome.take_id,
        outcome.mode,
        outcome.frames,
        outcome.accepted.len(),
        outcome
            .question
            .map_or(String::new(), |q| format!(", question {q}"))
    );
    for acc in &outcome.accepted {
        let _ = writeln!(
            out,
            "  card {:>2}: {} (run {}, seen {})",
            acc.id.ordinal(),
            acc.answer,
            acc.longest_run,
            acc.sightings
        );
    }
    let s = &totals.sum;
    let _ = writeln!(
        out,
        "timing per frame: binarize {:.2} ms, morphology {:.2} ms, candidates {:.2} ms, decode {:.2} ms, total {:.2} ms",
        totals.avg_ms(s.binarize_us),
        totals.avg_ms(s.morphology_us),
        totals.avg_ms(s.candidates_us),
        totals.avg_ms(s.decode_us),
        totals.avg_ms(s.total_us),
    );
    let _ = writeln!(
        out,
        "throughput: {:.1} fps (wall clock, including decoding input)",
        totals.frames as f64 / elapsed.as_secs_f64().max(1e-9)
    );
    let _ = writeln!(
        out,
        "log: {}\nsummary: {}",
        log_path.display(),
        summary_path.display()
    );
    Ok(out)
}

pub fn serve(a: &ServeArgs) -> Result<(), CliError> {
    let config = ServerConfig {
        bind: SocketAddr::new(a.bind, a.port),
        state_dir: Some(a.state_dir.clone()),
        pipeline: a.pipeline.resolve()?,
        clock: a.pipeline.clock.into(),
    };
    let server =
        Server::bind(&config).map_err(|e| CliError::new(1, format!("cannot start server: {e}")))?;
    let addr = server
        .local_addr()
        .map_err(|e| CliError::new(1, e.to_string()))?;
    println!("listening on ws://{addr}");
    server.run().map_err(|e| CliError::new(1, e.to_string()))
}

pub fn report(a: &ReportArgs) -> Result<(), CliError> {
    let unreadable =
        |e: String| CliError::new(EXIT_UNREADABLE, format!("{}: {e}", a.log.display()));
    let text = fs::read_to_string(&a.log).map_err(|e| unreadable(e.to_string()))?;
    let session = Session::replay(text.lines(), ClockKind::System.make())
        .map_err(|e| unreadable(e.to_string()))?;
    let csv = summary_csv(&session);
    match &a.summary {
        Some(path) => fs::write(path, &csv).map_err(|e| CliError::io(path, e))?,
        None => print!("{csv}"),
    }
    let present = session.rollcall().present();
    if !present.is_empty() {
        let list: Vec<String> = present.iter().map(u8::to_string).collect();
        eprintln!("present: {}", list.join(" "));
    }
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let base = match (&a.scene, a.classroom) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            SceneSpec::from_toml(&text).map_err(|e| CliError::new(1, e.to_string()))?
        }
        (None, Some(seed)) => classroom_scene(&ClassroomOptions::default(), seed),
        (None, None) => return Err(CliError::new(1, "pass --scene FILE or --classroom SEED")),
    };
    fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let mut frames = Vec::new();
    let mut truth = None;
    for i in 0..a.frames.max(1) {
        let mut spec = base.clone();
        // vary sensor noise between frames
        if matches!(spec.background, Background::PhotoNoise { .. }) {
            spec.seed = base.seed.wrapping_add(i as u64);
        }
        let (img, t) = render_scene(&spec).map_err(|e| CliError::new(1, e.to_string()))?;
        truth.get_or_insert(t);
        frames.push(img);
    }
    if a.gif {
        let path = a.out_dir.join("frames.gif");
        write_gif(&path, &frames).map_err(|e| CliError::new(1, e.to_string()))?;
    } else {
        for (i, f) in frames.iter().enumerate() {
            let path = a.out_dir.join(format!("frame-{:04}.png", i + 1));
            f.save_png(&path).map_err(|e| CliError::io(&path, e))?;
        }
    }
    let path = a.out_dir.join("truth.json");
    let json = serde_json::to_string_pretty(&truth).expect("ground truth serializes");
    fs::write(&path, json).map_err(|e| CliError::io(&path, e))?;
    println!("{} frame(s) in {}", frames.len(), a.out_dir.display());
    Ok(())
}
