//! Python module `cril`. Results come back as plain dicts and lists, built
//! from the same JSON the CLI and HTTP service produce.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;
use serde_json::json;

use cril_core::ltsi::{Lts, Outcome, PidSchedule, RandomScheduler, RunResult, Scheduler};
use cril_core::session::{DebugSession, RunRequest, StepRequest};
use cril_core::verify::{self, CheckOptions, ExploreOptions, Property};
use cril_core::{check_well_formed, corpus, parse_program, Direction, ProcessId, Program};

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn program(source: &str) -> PyResult<Program> {
    parse_program(source).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn lts(source: &str) -> PyResult<Lts> {
    Lts::new(program(source)?).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn direction(d: &str) -> PyResult<Direction> {
    Direction::parse(d).ok_or_else(|| PyValueError::new_err(format!("unknown direction {d:?}")))
}

fn execute(lts: &Lts, seed: u64, schedule: Option<&str>, dir: Direction, max_steps: usize) -> PyResult<RunResult> {
    let mut sched: Box<dyn Scheduler> = match schedule {
        Some(s) => Box::new(PidSchedule::parse(s).map_err(PyValueError::new_err)?),
        None => Box::new(RandomScheduler::new(seed)),
    };
    let start = match dir {
        Direction::Forward => lts.initial_state(),
        Direction::Backward => lts
            .run(
                &lts.initial_state(),
                &mut RandomScheduler::new(seed),
                Direction::Forward,
                max_steps,
            )
            .final_state()
            .clone(),
    };
    Ok(lts.run(&start, sched.as_mut(), dir, max_steps))
}

/// Source text of a bundled program: shared, airline-racy or airline-semaphore.
#[pyfunction]
fn corpus_source(name: &str) -> PyResult<&'static str> {
    corpus::source(name).ok_or_else(|| PyValueError::new_err(format!("no bundled program {name:?}")))
}

/// Parses and pretty-prints a program.
#[pyfunction]
fn parse(source: &str) -> PyResult<String> {
    Ok(cril_core::syntax::render_program(&program(source)?))
}

#[pyfunction]
fn check<'py>(py: Python<'py>, source: &str) -> PyResult<Bound<'py, PyAny>> {
    let p = program(source)?;
    let r = check_well_formed(&p);
    let violations: Vec<_> = r
        .violations
        .iter()
        .map(|v| json!({ "rule": v.rule, "message": v.message }))
        .collect();
    to_py(
        py,
        &json!({ "ok": r.ok(), "violations": violations, "warnings": r.warnings }),
    )
}

#[pyfunction]
#[pyo3(signature = (source, seed=0, schedule=None, direction="forward", max_steps=10_000))]
fn run<'py>(
    py: Python<'py>,
    source: &str,
    seed: u64,
    schedule: Option<&str>,
    direction: &str,
    max_steps: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let lts = lts(source)?;
    let res = execute(&lts, seed, schedule, self::direction(direction)?, max_steps)?;
    let fault = match &res.outcome {
        Outcome::AssertFailed(f) | Outcome::Fault(f) => Some(f.to_string()),
        _ => None,
    };
    let stores: Vec<_> = res
        .states
        .iter()
        .map(|s| lts.machine().config_view(&s.config).rho)
        .collect();
    let v = json!({
        "outcome": res.outcome.name(),
        "fault": fault,
        "trace": res.trace.iter().map(|t| lts.trace_entry(t)).collect::<Vec<_>>(),
        "stores": stores,
        "table": lts.store_table(&res),
        "final": lts.state_view(res.final_state()),
    });
    to_py(py, &v)
}

#[pyfunction]
#[pyo3(signature = (source, checks=None, max_states=1_000_000, path_bound=12, uncontrolled=false))]
fn explore<'py>(
    py: Python<'py>,
    source: &str,
    checks: Option<Vec<String>>,
    max_states: usize,
    path_bound: usize,
    uncontrolled: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let lts = lts(source)?;
    let properties = match checks {
        None => Property::DEFAULT.to_vec(),
        Some(cs) => cs
            .iter()
            .map(|c| Property::parse(c).ok_or_else(|| PyValueError::new_err(format!("unknown property {c:?}"))))
            .collect::<PyResult<_>>()?,
    };
    let opts = ExploreOptions {
        max_states,
        max_depth: None,
    };
    let g = if uncontrolled {
        verify::explore_uncontrolled(&lts, opts)
    } else {
        verify::explore(&lts, opts)
    };
    to_py(py, &verify::report(&lts, &g, &CheckOptions { properties, path_bound }))
}

/// The annotation DAG after a forward run, as a dict or DOT text.
#[pyfunction]
#[pyo3(signature = (source, schedule=None, seed=0, format="json"))]
fn dag<'py>(
    py: Python<'py>,
    source: &str,
    schedule: Option<&str>,
    seed: u64,
    format: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let lts = lts(source)?;
    let res = execute(&lts, seed, schedule, Direction::Forward, 10_000)?;
    let d = &res.final_state().dag;
    match format {
        "json" => to_py(py, &d.view(lts.program())),
        "dot" => Ok(d.to_dot(lts.program()).into_pyobject(py)?.into_any()),
        other => Err(PyValueError::new_err(format!("unknown format {other:?}"))),
    }
}

/// An interactive debug session, the same one the HTTP service drives.
#[pyclass]
struct Session {
    inner: DebugSession,
}

fn session_err(e: cril_core::session::SessionError) -> PyErr {
    PyValueError::new_err(e.to_json().to_string())
}

#[pymethods]
impl Session {
    #[new]
    #[pyo3(signature = (source, seed=0))]
    fn new(source: &str, seed: u64) -> PyResult<Session> {
        Ok(Session {
            inner: DebugSession::new(lts(source)?, seed),
        })
    }

    fn state<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.state_view())
    }

    #[pyo3(signature = (direction=None))]
    fn transitions<'py>(&self, py: Python<'py>, direction: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let dir = direction.map(self::direction).transpose()?;
        to_py(py, &self.inner.transitions(dir))
    }

    /// Raises ValueError with the JSON refusal when the step is not allowed.
    #[pyo3(signature = (pid, direction="forward"))]
    fn step<'py>(&mut self, py: Python<'py>, pid: &str, direction: &str) -> PyResult<Bound<'py, PyAny>> {
        let pid = ProcessId::parse(pid).ok_or_else(|| PyValueError::new_err(format!("bad process id {pid:?}")))?;
        let req = StepRequest {
            dir: Some(self::direction(direction)?),
            pid: Some(pid),
            ..Default::default()
        };
        let resp = self.inner.step(&req).map_err(session_err)?;
        to_py(py, &resp)
    }

    #[pyo3(signature = (direction="forward", steps=1000, seed=None))]
    fn run<'py>(
        &mut self,
        py: Python<'py>,
        direction: &str,
        steps: usize,
        seed: Option<u64>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let req = RunRequest {
            dir: self::direction(direction)?,
            steps,
            seed,
            ..Default::default()
        };
        let resp = self.inner.run(&req).map_err(session_err)?;
        to_py(py, &resp)
    }

    fn scrub<'py>(&mut self, py: Python<'py>, position: usize) -> PyResult<Bound<'py, PyAny>> {
        let resp = self.inner.scrub(position, None).map_err(session_err)?;
        to_py(py, &resp)
    }

    fn reset<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let resp = self.inner.reset(None).map_err(session_err)?;
        to_py(py, &resp)
    }

    fn history<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.history_view())
    }
}

#[pymodule]
fn cril(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(corpus_source, m)?)?;
    m.add_function(wrap_pyfunction!(parse, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(explore, m)?)?;
    m.add_function(wrap_pyfunction!(dag, m)?)?;
    m.add_class::<Session>()?;
    Ok(())
}
