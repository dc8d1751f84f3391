//! Python bindings: analysis and oracle checks over IR text, results as JSON.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde_json::json;

use specache::cli::{plan_for, resolve, run_analysis, AnalysisOpts, OracleOpts, Resolved};
use specache::ir::{parse_program, unroll};
use specache::oracle::{check_program, RUN_BUDGET};
use specache::Program;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn load(source: &str) -> PyResult<Program> {
    let p = parse_program(source).map_err(value_err)?;
    if p.unroll_hints.is_empty() {
        Ok(p)
    } else {
        unroll(&p).map_err(value_err)
    }
}

#[allow(clippy::too_many_arguments)]
fn settings(
    p: &Program,
    lines: Option<u32>,
    depth_hit: Option<u32>,
    depth_miss: Option<u32>,
    strategy: Option<&str>,
    shadow: Option<bool>,
    region_mode: Option<&str>,
    colors: Option<bool>,
    baseline: bool,
) -> PyResult<Resolved> {
    let opts = AnalysisOpts {
        lines,
        depth_hit,
        depth_miss,
        strategy: strategy.map(str::parse).transpose().map_err(value_err)?,
        shadow,
        region_mode: region_mode.map(str::parse).transpose().map_err(value_err)?,
        colors,
        baseline,
    };
    resolve(p, &opts).map_err(value_err)
}

/// Analyze IR text; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (source, lines=None, depth_hit=None, depth_miss=None, strategy=None, shadow=None, region_mode=None, colors=None, baseline=false))]
#[allow(clippy::too_many_arguments)]
fn analyze(
    source: &str,
    lines: Option<u32>,
    depth_hit: Option<u32>,
    depth_miss: Option<u32>,
    strategy: Option<&str>,
    shadow: Option<bool>,
    region_mode: Option<&str>,
    colors: Option<bool>,
    baseline: bool,
) -> PyResult<String> {
    let p = load(source)?;
    let r = settings(&p, lines, depth_hit, depth_miss, strategy, shadow, region_mode, colors, baseline)?;
    let (_, report) = run_analysis(&p, &r).map_err(value_err)?;
    Ok(report.to_json())
}

/// Check the resolved configuration against exhaustive concrete runs;
/// returns a JSON summary with `counterexample` set to null when sound.
#[pyfunction]
#[pyo3(signature = (source, lines=None, depth_hit=None, depth_miss=None, strategy=None, shadow=None, region_mode=None, colors=None, baseline=false, budget=RUN_BUDGET))]
#[allow(clippy::too_many_arguments)]
fn oracle_check(
    source: &str,
    lines: Option<u32>,
    depth_hit: Option<u32>,
    depth_miss: Option<u32>,
    strategy: Option<&str>,
    shadow: Option<bool>,
    region_mode: Option<&str>,
    colors: Option<bool>,
    baseline: bool,
    budget: u64,
) -> PyResult<String> {
    let p = load(source)?;
    let r = settings(&p, lines, depth_hit, depth_miss, strategy, shadow, region_mode, colors, baseline)?;
    let oracle = OracleOpts {
        budget,
        visit_cap: 3,
        strict: false,
    };
    let s = check_program(&p, &plan_for(&r, &oracle)).map_err(value_err)?;
    Ok(json!({
        "configurations": s.configurations,
        "runs": s.runs,
        "truncated_runs": s.truncated_runs,
        "budget_exhausted": s.budget_exhausted,
        "counterexample": s.counterexample,
    })
    .to_string())
}

#[pymodule]
#[pyo3(name = "specache")]
fn specache_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_check, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
