//! Python module `classcode`: code space, frame scanning, synthetic scenes
//! and poll sessions.

use classcode_core::codec::{self, CodePattern, Orientation};
use classcode_core::session::{summary_csv, AnswerValue, Roster, Session as CoreSession};
use classcode_core::synth::{self, SceneSpec};
use classcode_core::{DetectorConfig, GrayImage};
use classcode_service::engine::{ClockKind, Engine, PipelineConfig, TakeMode};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn gray(data: &[u8], width: usize, height: usize) -> PyResult<GrayImage> {
    GrayImage::new(width, height, data.to_vec()).map_err(value_err)
}

/// One decoded code in a frame.
#[pyclass(get_all, frozen, skip_from_py_object)]
#[derive(Clone, Debug)]
pub struct Detection {
    ordinal: u8,
    x: f64,
    y: f64,
    diameter: f64,
    theta: f64,
    answer: String,
}

#[pymethods]
impl Detection {
    fn __repr__(&self) -> String {
        format!(
            "Detection(ordinal={}, answer='{}', x={:.1}, y={:.1}, diameter={:.1}, theta={:.3})",
            self.ordinal, self.answer, self.x, self.y, self.diameter, self.theta
        )
    }
}

impl From<&classcode_core::Detection> for Detection {
    fn from(d: &classcode_core::Detection) -> Self {
        Detection {
            ordinal: d.id.ordinal(),
            x: d.center.0,
            y: d.center.1,
            diameter: d.diameter,
            theta: d.orientation.radians(),
            answer: d.answer().to_string(),
        }
    }
}

/// Ordinals of all valid codes, 1 to 99, as a list of ints.
#[pyfunction]
fn valid_codes() -> Vec<u32> {
    codec::enumerate_valid_codes()
        .iter()
        .map(|c| c.ordinal().into())
        .collect()
}

/// Canonical 13-bit sector pattern of a code.
#[pyfunction]
fn code_bits(ordinal: i64) -> PyResult<u16> {
    Ok(codec::CodeId::from_ordinal(ordinal)
        .map_err(value_err)?
        .canonical()
        .bits())
}

/// Ordinal and rotation (in sectors) of a 13-bit pattern.
#[pyfunction]
fn canonicalize(bits: u16) -> PyResult<(u8, u32)> {
    let (id, r) = codec::canonicalize(CodePattern::new(bits)).map_err(value_err)?;
    Ok((id.ordinal(), r))
}

/// Answer letter for an orientation in radians (counter-clockwise from up).
#[pyfunction]
fn answer_for(theta: f64) -> String {
    codec::orientation_to_answer(Orientation::new(theta)).to_string()
}

/// Scans one 8-bit grayscale frame given as row-major bytes.
#[pyfunction]
#[pyo3(signature = (data, width, height, repair_hairlines = false))]
fn scan(
    data: &[u8],
    width: usize,
    height: usize,
    repair_hairlines: bool,
) -> PyResult<Vec<Detection>> {
    let cfg = DetectorConfig {
        repair_hairlines,
        ..DetectorConfig::default()
    };
    let fr = classcode_core::scan_frame(&gray(data, width, height)?, &cfg, 0).map_err(value_err)?;
    Ok(fr.detections.iter().map(Detection::from).collect())
}

/// Pixels, width, height and the expected codes.
type Rendered<'py> = (Bound<'py, PyBytes>, usize, usize, Vec<Bound<'py, PyDict>>);

fn rendered<'py>(py: Python<'py>, spec: &SceneSpec) -> PyResult<Rendered<'py>> {
    let (img, truth) = synth::render_scene(spec).map_err(value_err)?;
    let codes = truth
        .codes
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("ordinal", c.ordinal)?;
            d.set_item("x", c.x)?;
            d.set_item("y", c.y)?;
            d.set_item("diameter", c.diameter)?;
            d.set_item("theta", c.theta)?;
            d.set_item("answer", c.answer.to_string())?;
            d.set_item("required", c.required)?;
            Ok(d)
        })
        .collect::<PyResult<Vec<_>>>()?;
    Ok((
        PyBytes::new(py, img.data()),
        img.width(),
        img.height(),
        codes,
    ))
}

/// Renders a scene described in TOML. Returns `(pixels, width, height,
/// truth)` where truth lists the expected codes.
#[pyfunction]
fn render_scene<'py>(py: Python<'py>, scene_toml: &str) -> PyResult<Rendered<'py>> {
    rendered(py, &SceneSpec::from_toml(scene_toml).map_err(value_err)?)
}

/// Renders one card on a plain background.
#[pyfunction]
#[pyo3(signature = (ordinal, diameter = 64.0, theta = 0.0))]
fn render_code<'py>(
    py: Python<'py>,
    ordinal: u8,
    diameter: f64,
    theta: f64,
) -> PyResult<Rendered<'py>> {
    rendered(py, &synth::single_code_scene(ordinal, diameter, theta))
}

/// A 1920x1080 classroom of 40 cards from a seed, as scene TOML.
#[pyfunction]
fn classroom_scene(seed: u64) -> String {
    synth::classroom_scene(&synth::ClassroomOptions::default(), seed).to_toml()
}

fn parse_mode(mode: &str) -> PyResult<TakeMode> {
    match mode {
        "answers" => Ok(TakeMode::Answers),
        "rollcall" => Ok(TakeMode::Rollcall),
        other => Err(value_err(format!(
            "mode must be 'answers' or 'rollcall', not {other:?}"
        ))),
    }
}

fn engine_err(e: classcode_service::engine::EngineError) -> PyErr {
    use classcode_service::engine::EngineError as E;
    match e {
        E::Core(c) => value_err(c),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// A poll session: questions, takes of scanned frames, manual answers.
#[pyclass(unsendable)]
pub struct Session {
    engine: Engine,
}

#[pymethods]
impl Session {
    /// `roster` lists student ordinals; empty for an anonymous session.
    /// `logical_clock` gives reproducible timestamps.
    #[new]
    #[pyo3(signature = (class_id, roster = Vec::new(), logical_clock = false))]
    fn new(class_id: String, roster: Vec<i64>, logical_clock: bool) -> PyResult<Self> {
        let roster =
            Roster::new(class_id, roster.into_iter().map(|o| (o, None))).map_err(value_err)?;
        let clock = if logical_clock {
            ClockKind::Logical
        } else {
            ClockKind::System
        };
        Ok(Self {
            engine: Engine::new(
                CoreSession::start_with_clock(roster, clock.make()),
                PipelineConfig::default(),
            ),
        })
    }

    /// Rebuilds a session from its log lines.
    #[staticmethod]
    fn replay(lines: Vec<String>) -> PyResult<Self> {
        let session =
            CoreSession::replay(lines.iter(), ClockKind::System.make()).map_err(value_err)?;
        Ok(Self {
            engine: Engine::new(session, PipelineConfig::default()),
        })
    }

    #[getter]
    fn session_id(&self) -> String {
        self.engine.session().id().to_string()
    }

    #[pyo3(signature = (tag = None, number = None))]
    fn start_question(&mut self, tag: Option<String>, number: Option<u32>) -> PyResult<u32> {
        self.engine.start_question(tag, number).map_err(engine_err)
    }

    #[pyo3(signature = (mode = "answers"))]
    fn begin_take(&mut self, mode: &str) -> PyResult<u32> {
        self.engine
            .begin_take(parse_mode(mode)?)
            .map_err(engine_err)
    }

    /// Scans a grayscale frame into the open take.
    fn add_frame(&mut self, data: &[u8], width: usize, height: usize) -> PyResult<Vec<Detection>> {
        let fr = self
            .engine
            .process_frame(&gray(data, width, height)?)
            .map_err(engine_err)?;
        Ok(fr.detections.iter().map(Detection::from).collect())
    }

    /// Closes the take; returns the accepted `(ordinal, answer)` pairs.
    #[pyo3(signature = (single_shot = false))]
    fn end_take(&mut self, single_shot: bool) -> PyResult<Vec<(u8, String)>> {
        let out = self.engine.end_take(single_shot).map_err(engine_err)?;
        Ok(out
            .accepted
            .iter()
            .map(|a| (a.id.ordinal(), a.answer.to_string()))
            .collect())
    }

    /// Manual answer ("A".."D" or "unknown"); returns the question number.
    #[pyo3(signature = (ordinal, answer, question = None))]
    fn set_answer(&mut self, ordinal: i64, answer: &str, question: Option<u32>) -> PyResult<u32> {
        let value: AnswerValue = answer.parse().map_err(value_err)?;
        self.engine
            .set_answer(question, ordinal, value)
            .map_err(engine_err)
    }

    fn set_presence(&mut self, ordinal: i64, present: bool) -> PyResult<()> {
        self.engine
            .set_presence(ordinal, present)
            .map_err(engine_err)
    }

    /// Answer counts for a question (default: the current one).
    #[pyo3(signature = (question = None))]
    fn summary<'py>(&self, py: Python<'py>, question: Option<u32>) -> PyResult<Bound<'py, PyDict>> {
        let chart = self.engine.summary(question).map_err(engine_err)?;
        let d = PyDict::new(py);
        for (label, n) in ["A", "B", "C", "D", "unknown"].iter().zip(chart.counts) {
            d.set_item(label, n)?;
        }
        Ok(d)
    }

    // a Vec<u8> would convert to bytes
    fn present(&self) -> Vec<u32> {
        self.engine
            .session()
            .rollcall()
            .present()
            .into_iter()
            .map(u32::from)
            .collect()
    }

    fn export_log(&self) -> Vec<String> {
        self.engine.export_log()
    }

    fn summary_csv(&self) -> String {
        summary_csv(self.engine.session())
    }
}

#[pymodule]
fn classcode(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CODE_COUNT", codec::CODE_COUNT)?;
    m.add_function(wrap_pyfunction!(valid_codes, m)?)?;
    m.add_function(wrap_pyfunction!(code_bits, m)?)?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(answer_for, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    m.add_function(wrap_pyfunction!(render_scene, m)?)?;
    m.add_function(wrap_pyfunction!(render_code, m)?)?;
    m.add_function(wrap_pyfunction!(classroom_scene, m)?)?;
    m.add_class::<Detection>()?;
    m.add_class::<Session>()?;
    Ok(())
}
