//! Python bindings: power flow, main body, centers of mass, one regulation
//! run and a small campaign, all on JSON network/fleet descriptions (the
//! bundled Rhodes R-26 feeder when none is given).

use comvr::campaign::{find_critical_loading, generate_scenarios, run_campaign, CampaignSetup, ScenarioConfig};
use comvr::com::{CenterOfMass, CenterOptions, CurrentSource, Weighting};
use comvr::controller::{attach_fleet, centers_for, parse_fleet, regulate as run_regulation, DispatchMode, RegulationConfig, VppActor};
use comvr::fixtures::{RHODES_FLEET_JSON, RHODES_NETWORK_JSON};
use comvr::network::NetworkModel;
use comvr::report::outcomes_to_csv;
use comvr::topology::{extract_main_body, MainBody};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn py_err(e: comvr::Error) -> PyErr {
    if e.is_data_error() || matches!(e, comvr::Error::Config(_)) {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

struct Feeder {
    model: NetworkModel,
    fleet: Vec<VppActor>,
    body: MainBody,
}

fn feeder(network_json: Option<&str>, fleet_json: Option<&str>) -> PyResult<Feeder> {
    let mut model = NetworkModel::from_json(network_json.unwrap_or(RHODES_NETWORK_JSON)).map_err(py_err)?;
    let fleet = match (network_json, fleet_json) {
        (_, Some(f)) => parse_fleet(f).map_err(py_err)?,
        (None, None) => parse_fleet(RHODES_FLEET_JSON).map_err(py_err)?,
        (Some(_), None) => Vec::new(),
    };
    attach_fleet(&mut model, &fleet).map_err(py_err)?;
    let body = extract_main_body(&model);
    Ok(Feeder { model, fleet, body })
}

fn scaled_loads(model: &NetworkModel, loading: f64) -> Vec<Complex64> {
    model.buses.iter().map(|b| b.base_load * loading).collect()
}

fn parse_mode(s: &str) -> PyResult<DispatchMode> {
    s.parse::<DispatchMode>().map_err(PyValueError::new_err)
}

fn center_options(weighting: &str, source: &str) -> PyResult<CenterOptions> {
    let weighting = match weighting {
        "magnitude" => Weighting::Magnitude,
        "real-part" => Weighting::RealPart,
        other => return Err(PyValueError::new_err(format!("unknown weighting {other:?}"))),
    };
    let source = match source {
        "metered" => CurrentSource::Metered,
        "estimated" => CurrentSource::Estimated,
        other => return Err(PyValueError::new_err(format!("unknown current source {other:?}"))),
    };
    Ok(CenterOptions { weighting, source })
}

/// Bundled Rhodes R-26 network as JSON text.
#[pyfunction]
fn rhodes_network_json() -> &'static str {
    RHODES_NETWORK_JSON
}

/// Bundled Rhodes R-26 VPP fleet as JSON text.
#[pyfunction]
fn rhodes_fleet_json() -> &'static str {
    RHODES_FLEET_JSON
}

/// Solves the power flow with the loads scaled by `loading` and the fleet at
/// its file setpoints. Returns bus ids, magnitudes (p.u.) and angles (rad).
#[pyfunction]
#[pyo3(signature = (network_json=None, fleet_json=None, loading=1.0))]
fn solve_pf<'py>(
    py: Python<'py>,
    network_json: Option<&str>,
    fleet_json: Option<&str>,
    loading: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let f = feeder(network_json, fleet_json)?;
    let loads = scaled_loads(&f.model, loading);
    let (sol, _, _) = centers_for(&f.model, &f.body, &f.fleet, &loads, CenterOptions::default()).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("bus_ids", sol.bus_ids.clone())?;
    d.set_item("v_pu", sol.magnitudes())?;
    d.set_item("angle_rad", (0..sol.voltages.len()).map(|k| sol.angle(k)).collect::<Vec<f64>>())?;
    d.set_item("losses_kw", sol.losses_kw())?;
    Ok(d)
}

/// Main body of the feeder: chain bus ids, |Z| coordinates in ohm and the
/// buses hanging off each chain bus.
#[pyfunction]
#[pyo3(signature = (network_json=None))]
fn main_body<'py>(py: Python<'py>, network_json: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let f = feeder(network_json, None)?;
    let d = PyDict::new(py);
    d.set_item("chain", f.body.chain.clone())?;
    d.set_item("coords", f.body.coords.clone())?;
    d.set_item("branches", f.body.branches.clone())?;
    Ok(d)
}

fn center_tuple(c: Option<CenterOfMass>) -> Option<(f64, f64)> {
    c.map(|c| (c.g, c.delta_g))
}

/// Centers of mass `(g, delta_g)` in ohm of generation, load and net
/// currents; `None` where a class carries no weight.
#[pyfunction]
#[pyo3(signature = (network_json=None, fleet_json=None, loading=1.0, weighting="magnitude", source="metered"))]
fn centers<'py>(
    py: Python<'py>,
    network_json: Option<&str>,
    fleet_json: Option<&str>,
    loading: f64,
    weighting: &str,
    source: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let f = feeder(network_json, fleet_json)?;
    let opts = center_options(weighting, source)?;
    let loads = scaled_loads(&f.model, loading);
    let (_, _, c) = centers_for(&f.model, &f.body, &f.fleet, &loads, opts).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("g_g", center_tuple(c.g_g))?;
    d.set_item("g_l", center_tuple(c.g_l))?;
    d.set_item("g_gl", center_tuple(c.g_gl))?;
    Ok(d)
}

fn critical_kw(f: &Feeder, v_min: f64) -> PyResult<f64> {
    let base = scaled_loads(&f.model, 1.0);
    Ok(find_critical_loading(&f.model, &base, v_min).map_err(py_err)?.total_load_kw)
}

/// One regulation run on the bundled feeder (or the given one). With
/// `loading` the loads are scaled peak loads and the fleet keeps its file
/// setpoints; otherwise campaign scenario `scenario` of `seed` is used.
#[pyfunction]
#[pyo3(signature = (mode="redispatch", step_kw=300.0, scenario=0, seed=42, loading=None, load_factor=None, network_json=None, fleet_json=None))]
#[allow(clippy::too_many_arguments)]
fn regulate<'py>(
    py: Python<'py>,
    mode: &str,
    step_kw: f64,
    scenario: usize,
    seed: u64,
    loading: Option<f64>,
    load_factor: Option<f64>,
    network_json: Option<&str>,
    fleet_json: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = parse_mode(mode)?;
    let f = feeder(network_json, fleet_json)?;
    let cfg = RegulationConfig {
        record_profiles: true,
        ..RegulationConfig::default()
    };
    let (loads, actors) = match loading {
        Some(l) => (scaled_loads(&f.model, l), f.fleet.clone()),
        None => {
            let scfg = ScenarioConfig {
                load_factor: load_factor.unwrap_or(ScenarioConfig::default().load_factor),
                ..ScenarioConfig::default()
            };
            let crit = critical_kw(&f, cfg.v_min)?;
            let all = generate_scenarios(&f.model, &f.fleet, crit, scenario + 1, seed, mode, &scfg).map_err(py_err)?;
            (all[scenario].bus_loads(&f.model), all[scenario].actors(&f.fleet))
        }
    };
    let out = py
        .detach(|| run_regulation(&f.model, &f.body, &actors, &loads, mode, step_kw, &cfg))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("success", out.success)?;
    d.set_item("iterations", out.iterations)?;
    d.set_item("passes", out.passes)?;
    d.set_item("initial_vpp_kw", out.initial_vpp_kw)?;
    d.set_item("vpp_change_kw", out.vpp_change_kw)?;
    d.set_item("il_shed_kw", out.il_shed_kw)?;
    d.set_item("min_v_trace", out.min_v_trace.clone())?;
    d.set_item("metric_trace", out.metric_trace.clone())?;
    d.set_item("profiles", out.profiles.clone())?;
    d.set_item("coords", f.body.coords.clone())?;
    d.set_item("final_setpoints", out.final_setpoints.clone())?;
    d.set_item("actor_ids", actors.iter().map(|a| a.id.clone()).collect::<Vec<_>>())?;
    d.set_item("failure", out.failure.clone())?;
    Ok(d)
}

/// Monte-Carlo campaign on the bundled feeder. Returns one dict per
/// (mode, step) cell and the per-run outcomes as CSV text.
#[pyfunction]
#[pyo3(signature = (count=100, seed=42, steps_kw=vec![300.0, 400.0, 500.0], modes=vec!["redispatch".to_string(), "dispatch".to_string()], threads=None, load_factor=None))]
fn campaign<'py>(
    py: Python<'py>,
    count: usize,
    seed: u64,
    steps_kw: Vec<f64>,
    modes: Vec<String>,
    threads: Option<usize>,
    load_factor: Option<f64>,
) -> PyResult<(Vec<Bound<'py, PyDict>>, String)> {
    let modes = modes.iter().map(|m| parse_mode(m)).collect::<PyResult<Vec<_>>>()?;
    let f = feeder(None, None)?;
    let regulation = RegulationConfig::default();
    let scfg = ScenarioConfig {
        load_factor: load_factor.unwrap_or(ScenarioConfig::default().load_factor),
        ..ScenarioConfig::default()
    };
    let crit = critical_kw(&f, regulation.v_min)?;
    let scenarios = modes
        .iter()
        .map(|&m| generate_scenarios(&f.model, &f.fleet, crit, count, seed, m, &scfg))
        .collect::<comvr::Result<Vec<_>>>()
        .map_err(py_err)?;
    let setup = CampaignSetup {
        model: &f.model,
        body: &f.body,
        fleet: &f.fleet,
        modes,
        steps_kw,
        regulation,
    };
    let res = py.detach(|| run_campaign(&setup, &scenarios, threads)).map_err(py_err)?;
    let mut cells = Vec::new();
    for c in &res.stats.cells {
        let d = PyDict::new(py);
        d.set_item("mode", c.mode.as_str())?;
        d.set_item("step_kw", c.step_kw)?;
        d.set_item("runs", c.runs)?;
        d.set_item("successes", c.successes)?;
        d.set_item("success_rate", c.success_rate)?;
        d.set_item("mean_iterations", c.success.iterations.mean)?;
        d.set_item("mean_vpp_change_kw", c.success.vpp_change_kw.mean)?;
        d.set_item("mean_il_shed_kw", c.success.il_shed_kw.mean)?;
        cells.push(d);
    }
    Ok((cells, outcomes_to_csv(&res.records).map_err(py_err)?))
}

#[pymodule]
#[pyo3(name = "comvr")]
fn comvr_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rhodes_network_json, m)?)?;
    m.add_function(wrap_pyfunction!(rhodes_fleet_json, m)?)?;
    m.add_function(wrap_pyfunction!(solve_pf, m)?)?;
    m.add_function(wrap_pyfunction!(main_body, m)?)?;
    m.add_function(wrap_pyfunction!(centers, m)?)?;
    m.add_function(wrap_pyfunction!(regulate, m)?)?;
    m.add_function(wrap_pyfunction!(campaign, m)?)?;
    Ok(())
}
