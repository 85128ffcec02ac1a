//! Python bindings for the co-study engine.
//!
//! Events cross the boundary in their wire form, `{"kind": ..., "data": {...}}`,
//! either as a dict or as JSON text. Snapshots and logs come back as plain
//! Python objects.

use costudy_core::config::{Mode, SessionConfig};
use costudy_core::event::{read_jsonl, EventPayload};
use costudy_core::rng::seeded;
use costudy_core::scheduler::{next_passive_transition as draw_transition, SchedulerConfig};
use costudy_core::session::{Feature, SessionError};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;

create_exception!(costudy, CostudyError, PyException);
create_exception!(costudy, InvalidInput, CostudyError);

fn session_err(err: SessionError) -> PyErr {
    match err {
        SessionError::Invalid { .. } | SessionError::UnknownAgent(_) => {
            InvalidInput::new_err(err.to_string())
        }
        other => CostudyError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    let json = py.import("json")?;
    json.call_method1("loads", (value.to_string(),))
}

fn to_json(py: Python<'_>, obj: &Bound<'_, PyAny>) -> PyResult<serde_json::Value> {
    let text: String = if let Ok(s) = obj.cast::<PyString>() {
        s.to_str()?.to_owned()
    } else {
        py.import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("not JSON: {e}")))
}

fn build_config(config: Option<&str>, seed: Option<u64>, mode: Option<&str>) -> PyResult<SessionConfig> {
    let mut out = match config {
        Some(text) => SessionConfig::from_str_auto(text).map_err(|e| CostudyError::new_err(e.to_string()))?,
        None => SessionConfig::default(),
    };
    if let Some(seed) = seed {
        out.seed = seed;
    }
    if let Some(mode) = mode {
        out.mode = mode
            .parse::<Mode>()
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
    }
    Ok(out)
}

/// One co-study session on an injected clock.
#[pyclass(module = "costudy")]
struct Session {
    inner: costudy_core::Session,
}

#[pymethods]
impl Session {
    /// `config` is TOML or JSON text; `seed` and `mode` override it.
    #[new]
    #[pyo3(signature = (transcript, config=None, seed=None, mode=None))]
    fn new(transcript: &str, config: Option<&str>, seed: Option<u64>, mode: Option<&str>) -> PyResult<Self> {
        let config = build_config(config, seed, mode)?;
        let inner = costudy_core::Session::create(config, transcript).map_err(session_err)?;
        Ok(Self { inner })
    }

    /// Rebuilds a session from an exported log by re-feeding its user input.
    #[staticmethod]
    #[pyo3(signature = (transcript, log, config=None, seed=None, mode=None))]
    fn replay(
        transcript: &str,
        log: &str,
        config: Option<&str>,
        seed: Option<u64>,
        mode: Option<&str>,
    ) -> PyResult<Self> {
        let config = build_config(config, seed, mode)?;
        let events = read_jsonl(log.as_bytes()).map_err(|e| CostudyError::new_err(e.to_string()))?;
        let inner = costudy_core::Session::replay(config, transcript, &events).map_err(session_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn id(&self) -> &str {
        self.inner.id()
    }

    #[getter]
    fn mode(&self) -> String {
        self.inner.mode().to_string()
    }

    #[getter]
    fn clock_ms(&self) -> u64 {
        self.inner.clock_ms()
    }

    #[getter]
    fn last_seq(&self) -> u64 {
        self.inner.last_seq()
    }

    /// Logs a user event at `at_ms` and routes it. Returns its seq.
    fn ingest(&mut self, py: Python<'_>, at_ms: u64, event: &Bound<'_, PyAny>) -> PyResult<u64> {
        let value = to_json(py, event)?;
        let payload = EventPayload::from_wire(value).map_err(|e| InvalidInput::new_err(e.to_string()))?;
        self.inner.ingest(at_ms, payload).map_err(session_err)
    }

    fn advance(&mut self, now_ms: u64) {
        self.inner.advance(now_ms);
    }

    /// Increments a usage counter by name (`brush` or `brush_uses`) and
    /// returns all counters.
    fn record_usage<'py>(&mut self, py: Python<'py>, feature: &str) -> PyResult<Bound<'py, PyAny>> {
        let feature: Feature = feature
            .parse()
            .map_err(|e: SessionError| PyValueError::new_err(e.to_string()))?;
        let counters = self.inner.record_usage(feature, None);
        to_py(py, &serde_json::to_value(counters).expect("counters serialize"))
    }

    fn snapshot<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(
            py,
            &serde_json::to_value(self.inner.snapshot()).expect("snapshot serializes"),
        )
    }

    /// Events with seq greater than `after`, as dicts.
    #[pyo3(signature = (after=0))]
    fn events<'py>(&self, py: Python<'py>, after: u64) -> PyResult<Bound<'py, PyAny>> {
        let values: Vec<serde_json::Value> = self
            .inner
            .events_after(after)
            .iter()
            .map(|e| e.to_value())
            .collect();
        to_py(py, &serde_json::Value::Array(values))
    }

    /// The log as JSON Lines.
    fn export_log(&self) -> String {
        String::from_utf8(self.inner.export_log_bytes()).expect("log is utf-8")
    }

    fn __repr__(&self) -> String {
        format!(
            "Session(id={:?}, mode={}, clock_ms={}, events={})",
            self.inner.id(),
            self.inner.mode(),
            self.inner.clock_ms(),
            self.inner.last_seq()
        )
    }
}

/// Parses WebVTT or SRT into `(start_ms, end_ms, text)` tuples.
#[pyfunction]
fn parse_transcript(text: &str) -> PyResult<Vec<(u64, u64, String)>> {
    let transcript =
        costudy_core::parse_transcript(text).map_err(|e| InvalidInput::new_err(e.to_string()))?;
    Ok(transcript
        .cues()
        .iter()
        .map(|c| (c.start_ms, c.end_ms, c.text.clone()))
        .collect())
}

/// Splits `"<action> text"` into `(action, text)`.
#[pyfunction]
fn parse_action_tag(raw: &str) -> PyResult<(String, String)> {
    let reply = costudy_core::parse_action_tag(raw).map_err(|e| InvalidInput::new_err(e.to_string()))?;
    Ok((reply.action.as_str().to_string(), reply.text))
}

/// First `(delay_ms, action)` drawn by a scheduler seeded with `seed`.
#[pyfunction]
#[pyo3(signature = (seed, count=1))]
fn next_passive_transition(seed: u64, count: usize) -> Vec<(u64, String)> {
    let config = SchedulerConfig::default();
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let (delay, action) = draw_transition(&mut rng, &config);
            (delay, action.as_str().to_string())
        })
        .collect()
}

/// Continuing-phase length for a text reply of `words` words.
#[pyfunction]
fn continuing_ms(words: u32) -> u64 {
    SchedulerConfig::default().continuing_ms_for_words(words)
}

#[pymodule]
pub fn costudy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CostudyError", m.py().get_type::<CostudyError>())?;
    m.add("InvalidInput", m.py().get_type::<InvalidInput>())?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(parse_transcript, m)?)?;
    m.add_function(wrap_pyfunction!(parse_action_tag, m)?)?;
    m.add_function(wrap_pyfunction!(next_passive_transition, m)?)?;
    m.add_function(wrap_pyfunction!(continuing_ms, m)?)?;
    Ok(())
}
