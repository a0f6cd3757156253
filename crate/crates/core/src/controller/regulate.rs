//! The regulation loop: centers → priority lists → step → evaluation →
//! step adaptation or restriction to a lesser part of the line.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::actors::{bus_powers, il_shed_kw, total_rated_kw, vpp_power_kw, ActorLimits, VppActor};
use super::lists::{populate_priority_lists, DispatchMode, ListContext, VoltageMode};
use super::step::{adapt_step, apply_step, evaluate_step, restrict_lesser_part, DispatchPlan, Restriction, VoltageSummary};
use crate::com::{compute_all_centers, CenterOfMass, CenterOptions, Centers};
use crate::error::{Error, Result};
use crate::network::NetworkModel;
use crate::powerflow::{solve_with, SolverOptions, VoltageSolution};
use crate::topology::MainBody;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegulationConfig {
    pub v_min: f64,
    pub v_max: f64,
    /// Set point of the profile metric Σ(V − V_sp)².
    pub v_sp: f64,
    /// Step doubles when an accepted step recovers less than this share of
    /// the remaining deficit.
    pub theta_small: f64,
    /// Lesser parts shorter than this share of the main body end a pass.
    pub lesser_part_fraction: f64,
    pub max_iterations: usize,
    /// Restrict when the Δg_G and Δg_L intervals overlap.
    pub restrict_on_overlap: bool,
    /// Restrict when g_GL lies strictly between g_G and g_L.
    pub restrict_on_gl_between: bool,
    pub centers: CenterOptions,
    pub record_profiles: bool,
    pub tolerance: f64,
    pub max_pf_iterations: usize,
}

impl Default for RegulationConfig {
    fn default() -> Self {
        Self {
            v_min: 0.90,
            v_max: 1.10,
            v_sp: 1.0,
            theta_small: 0.10,
            lesser_part_fraction: 0.15,
            max_iterations: 100,
            restrict_on_overlap: true,
            restrict_on_gl_between: true,
            centers: CenterOptions::default(),
            record_profiles: false,
            tolerance: 1e-8,
            max_pf_iterations: 50,
        }
    }
}

impl RegulationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_min < 1.0 && 1.0 < self.v_max) {
            return Err(Error::Config(format!(
                "voltage limits must satisfy v_min < 1 < v_max (got {} / {})",
                self.v_min, self.v_max
            )));
        }
        for (name, v) in [
            ("theta_small", self.theta_small),
            ("lesser_part_fraction", self.lesser_part_fraction),
            ("tolerance", self.tolerance),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_iterations == 0 || self.max_pf_iterations == 0 {
            return Err(Error::Config("iteration caps must be positive".into()));
        }
        Ok(())
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_pf_iterations,
        }
    }

    fn within_limits(&self, s: &VoltageSummary) -> bool {
        s.min_v >= self.v_min && s.max_v <= self.v_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationState {
    pub segment: (f64, f64),
    pub step_kw: f64,
    pub rest_kw: f64,
    pub iteration: usize,
    pub depth: usize,
    pub pass: u8,
    /// Steps that entered an executed or empty plan.
    pub demanded_kw: f64,
    /// Primary power placed by accepted plans.
    pub delivered_kw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceEvent {
    Accepted,
    Rejected,
    Empty,
    Restricted,
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub pass: u8,
    pub event: TraceEvent,
    pub segment_lo: f64,
    pub segment_hi: f64,
    pub g_g: Option<f64>,
    pub dg_g: Option<f64>,
    pub g_l: Option<f64>,
    pub dg_l: Option<f64>,
    pub g_gl: Option<f64>,
    pub dg_gl: Option<f64>,
    pub step_kw: f64,
    pub rest_kw: f64,
    pub primary_kw: f64,
    pub counter_kw: f64,
    pub min_v: f64,
    pub max_v: f64,
    pub metric: f64,
    /// `actor:+kW;actor:-kW`
    pub actions: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulationOutcome {
    pub success: bool,
    /// (Re-)dispatching steps evaluated.
    pub iterations: usize,
    pub loop_passes: usize,
    pub passes: u8,
    pub initial_vpp_kw: f64,
    pub vpp_change_kw: f64,
    pub il_shed_kw: f64,
    pub initial_min_v: f64,
    pub final_min_v: f64,
    pub final_max_v: f64,
    /// Profile metric at entry and after each accepted step.
    pub metric_trace: Vec<f64>,
    /// Min voltage at entry and after each accepted step.
    pub min_v_trace: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    /// Main-body voltage magnitudes at entry and after each accepted step,
    /// when profile recording is on.
    pub profiles: Vec<Vec<f64>>,
    /// Actor setpoints at entry (after clamping to the limits) and after
    /// each accepted step.
    pub setpoint_trace: Vec<Vec<f64>>,
    pub final_setpoints: Vec<f64>,
    pub failure: Option<String>,
}

fn split(c: Option<CenterOfMass>) -> (Option<f64>, Option<f64>) {
    (c.map(|c| c.g), c.map(|c| c.delta_g))
}

fn intervals_overlap(a: &CenterOfMass, b: &CenterOfMass) -> bool {
    a.lower() <= b.upper() && b.lower() <= a.upper()
}

fn strictly_between(x: f64, a: f64, b: f64) -> bool {
    x > a.min(b) && x < a.max(b)
}

struct Run<'a> {
    model: &'a NetworkModel,
    loads: &'a [Complex64],
    limits: ActorLimits,
    coords: Vec<f64>,
    chain_idx: Vec<usize>,
    cfg: RegulationConfig,
}

impl Run<'_> {
    fn solve(&self, actors: &[VppActor]) -> Result<(VoltageSolution, crate::com::BusPowers)> {
        let powers = bus_powers(self.model, self.loads, actors)?;
        let sol = solve_with(self.model, &powers.net_injections(), self.cfg.solver())?;
        Ok((sol, powers))
    }

    fn profile(&self, sol: &VoltageSolution) -> Vec<f64> {
        self.chain_idx.iter().map(|&k| sol.magnitude(k)).collect()
    }
}

/// Runs the regulation method from the actors' current setpoints.
///
/// `bus_loads_kw` is the demand per bus (model order) before any shedding.
/// Errors only when the entry power flow cannot be solved.
pub fn regulate(
    model: &NetworkModel,
    body: &MainBody,
    actors: &[VppActor],
    bus_loads_kw: &[Complex64],
    dispatch: DispatchMode,
    step0_kw: f64,
    cfg: &RegulationConfig,
) -> Result<RegulationOutcome> {
    cfg.validate()?;
    if !(step0_kw > 0.0) {
        return Err(Error::Config("step must be positive".into()));
    }
    let run = Run {
        model,
        loads: bus_loads_kw,
        limits: ActorLimits::new(model, actors, bus_loads_kw)?,
        coords: actors
            .iter()
            .map(|a| body.coordinate_of(a.bus))
            .collect::<Result<_>>()?,
        chain_idx: body
            .chain
            .iter()
            .map(|&b| model.index_of(b))
            .collect::<Result<_>>()?,
        cfg: *cfg,
    };
    let mut actors = actors.to_vec();
    for (i, a) in actors.iter_mut().enumerate() {
        a.setpoint_kw = a.setpoint_kw.clamp(run.limits.lower[i], run.limits.upper[i]);
    }
    let initial_vpp = vpp_power_kw(&actors);
    let step_cap = total_rated_kw(&actors).max(step0_kw);
    let full = (0.0, body.total_length());
    let min_length = cfg.lesser_part_fraction * body.total_length();

    let (mut sol, mut powers) = run.solve(&actors)?;
    let mut summary = VoltageSummary::of(&sol, cfg.v_sp);
    let mut out = RegulationOutcome {
        success: false,
        iterations: 0,
        loop_passes: 0,
        passes: 1,
        initial_vpp_kw: initial_vpp,
        vpp_change_kw: 0.0,
        il_shed_kw: il_shed_kw(&actors),
        initial_min_v: summary.min_v,
        final_min_v: summary.min_v,
        final_max_v: summary.max_v,
        metric_trace: vec![summary.metric],
        min_v_trace: vec![summary.min_v],
        trace: Vec::new(),
        profiles: if cfg.record_profiles { vec![run.profile(&sol)] } else { Vec::new() },
        setpoint_trace: vec![actors.iter().map(|a| a.setpoint_kw).collect()],
        final_setpoints: actors.iter().map(|a| a.setpoint_kw).collect(),
        failure: None,
    };
    if cfg.within_limits(&summary) {
        out.success = true;
        return Ok(out);
    }

    let mut st = RegulationState {
        segment: full,
        step_kw: step0_kw,
        rest_kw: 0.0,
        iteration: 0,
        depth: 0,
        pass: 1,
        demanded_kw: 0.0,
        delivered_kw: 0.0,
    };

    let ids: Vec<String> = actors.iter().map(|a| a.id.clone()).collect();
    let mut check_compensation = false;
    let failure = loop {
        if st.iteration >= cfg.max_iterations {
            break "iteration cap reached".to_string();
        }
        st.iteration += 1;
        debug_assert!((st.rest_kw - (st.demanded_kw - st.delivered_kw)).abs() < 1e-6);

        let mode = if summary.min_v < cfg.v_min {
            VoltageMode::Undervoltage
        } else {
            VoltageMode::Overvoltage
        };
        let centers = compute_all_centers(model, body, &sol, &powers, Some(st.segment), cfg.centers)?;
        let record = |st: &RegulationState, event, plan: Option<&DispatchPlan>, s: &VoltageSummary| {
            let (g_g, dg_g) = split(centers.g_g);
            let (g_l, dg_l) = split(centers.g_l);
            let (g_gl, dg_gl) = split(centers.g_gl);
            TraceRecord {
                iteration: st.iteration,
                pass: st.pass,
                event,
                segment_lo: st.segment.0,
                segment_hi: st.segment.1,
                g_g,
                dg_g,
                g_l,
                dg_l,
                g_gl,
                dg_gl,
                step_kw: st.step_kw,
                rest_kw: st.rest_kw,
                primary_kw: plan.map_or(0.0, |p| p.primary_kw),
                counter_kw: plan.map_or(0.0, |p| p.counter_kw),
                min_v: s.min_v,
                max_v: s.max_v,
                metric: s.metric,
                actions: plan
                    .map(|p| {
                        p.actions
                            .iter()
                            .map(|a| format!("{}:{:+.3}", ids[a.actor], a.delta_kw))
                            .collect::<Vec<_>>()
                            .join(";")
                    })
                    .unwrap_or_default(),
            }
        };

        // The compensation test follows accepted steps only: the entry state
        // and a freshly restricted part always get one step attempt first.
        let compensated = check_compensation && match (centers.g_g, centers.g_l, centers.g_gl) {
            (Some(g), Some(l), gl) => {
                (cfg.restrict_on_overlap && intervals_overlap(&g, &l))
                    || (cfg.restrict_on_gl_between && gl.is_some_and(|gl| strictly_between(gl.g, g.g, l.g)))
            }
            _ => false,
        };

        check_compensation = false;
        let mut restrict = false;
        if compensated {
            restrict = true;
        } else {
            let ctx = ListContext {
                actors: &actors,
                coords: &run.coords,
                limits: &run.limits,
                segment: st.segment,
            };
            let (minus, plus) = populate_priority_lists(&centers, &ctx, mode);
            let plan = apply_step(&minus, &plus, st.step_kw, st.rest_kw, mode, dispatch);
            if plan.is_empty() {
                st.demanded_kw += st.step_kw;
                st.rest_kw = plan.rest_kw;
                out.trace.push(record(&st, TraceEvent::Empty, Some(&plan), &summary));
                restrict = true;
            } else {
                out.iterations += 1;
                let mut trial = actors.clone();
                for a in &plan.actions {
                    trial[a.actor].setpoint_kw += a.delta_kw;
                }
                let solved = run.solve(&trial).ok();
                let after = solved.as_ref().map(|(s, _)| VoltageSummary::of(s, cfg.v_sp));
                if evaluate_step(&summary, after.as_ref(), mode) {
                    let (new_sol, new_powers) = solved.expect("accepted plans converged");
                    let after = after.expect("accepted plans converged");
                    let (improvement, deficit) = match mode {
                        VoltageMode::Undervoltage => (after.min_v - summary.min_v, cfg.v_min - summary.min_v),
                        VoltageMode::Overvoltage => (summary.max_v - after.max_v, summary.max_v - cfg.v_max),
                    };
                    actors = trial;
                    sol = new_sol;
                    powers = new_powers;
                    summary = after;
                    st.demanded_kw += st.step_kw;
                    st.delivered_kw += plan.primary_kw;
                    st.rest_kw = plan.rest_kw;
                    out.trace.push(record(&st, TraceEvent::Accepted, Some(&plan), &summary));
                    out.metric_trace.push(summary.metric);
                    out.min_v_trace.push(summary.min_v);
                    out.setpoint_trace.push(actors.iter().map(|a| a.setpoint_kw).collect());
                    if cfg.record_profiles {
                        out.profiles.push(run.profile(&sol));
                    }
                    if cfg.within_limits(&summary) {
                        out.success = true;
                        break String::new();
                    }
                    check_compensation = true;
                    st.step_kw = adapt_step(st.step_kw, improvement, deficit, cfg.theta_small, step_cap);
                } else {
                    out.trace.push(record(&st, TraceEvent::Rejected, Some(&plan), &summary));
                    restrict = true;
                }
            }
        }

        if restrict {
            match restrict_lesser_part(st.segment, &centers, min_length) {
                Restriction::Segment(lo, hi) => {
                    st.segment = (lo, hi);
                    st.depth += 1;
                    out.trace.push(record(&st, TraceEvent::Restricted, None, &summary));
                }
                Restriction::Exhausted if st.pass == 1 => {
                    st.pass = 2;
                    st.segment = full;
                    st.depth = 0;
                    st.step_kw = step0_kw;
                    out.trace.push(record(&st, TraceEvent::Restart, None, &summary));
                }
                Restriction::Exhausted => break "lesser part exhausted on second pass".to_string(),
            }
        }
    };

    out.loop_passes = st.iteration;
    out.passes = st.pass;
    out.final_min_v = summary.min_v;
    out.final_max_v = summary.max_v;
    out.vpp_change_kw = vpp_power_kw(&actors) - initial_vpp;
    out.il_shed_kw = il_shed_kw(&actors);
    out.final_setpoints = actors.iter().map(|a| a.setpoint_kw).collect();
    if !out.success {
        out.failure = Some(failure);
    }
    Ok(out)
}

/// Centers of a solved case, convenience wrapper used by the CLI.
pub fn centers_for(
    model: &NetworkModel,
    body: &MainBody,
    actors: &[VppActor],
    bus_loads_kw: &[Complex64],
    opts: CenterOptions,
) -> Result<(VoltageSolution, crate::com::BusPowers, Centers)> {
    let powers = bus_powers(model, bus_loads_kw, actors)?;
    let sol = crate::powerflow::solve(model, &powers.net_injections())?;
    let centers = compute_all_centers(model, body, &sol, &powers, None, opts)?;
    Ok((sol, powers, centers))
}
