//! Bus currents as point masses along the main body, and their centers of
//! mass with weighted standard deviation.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{BusId, BusKind, NetworkModel};
use crate::powerflow::VoltageSolution;
use crate::topology::MainBody;

/// Buses whose current is below this (p.u.) carry no mass.
pub const CURRENT_THRESHOLD_PU: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassKind {
    /// g_G, injected (generation) currents.
    Generation,
    /// g_L, absorbed (load) currents.
    Load,
    /// g_GL, per-bus net currents.
    Net,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterOfMass {
    pub g: f64,
    pub delta_g: f64,
    pub total_weight: f64,
    pub kind: MassKind,
}

impl CenterOfMass {
    pub fn lower(&self) -> f64 {
        self.g - self.delta_g
    }

    pub fn upper(&self) -> f64 {
        self.g + self.delta_g
    }

    pub fn contains(&self, coord: f64) -> bool {
        coord >= self.lower() && coord <= self.upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// |I|
    #[default]
    Magnitude,
    /// |in-phase component of I relative to the bus voltage|
    RealPart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurrentSource {
    /// Per-device currents from the metered load and generation powers.
    #[default]
    Metered,
    /// Net currents of main-body buses reconstructed from voltages alone,
    /// classified as injected or absorbed by the sign of their active power.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CenterOptions {
    #[serde(default)]
    pub weighting: Weighting,
    #[serde(default)]
    pub source: CurrentSource,
}

/// Weighted mean coordinate and biased weighted standard deviation.
pub fn compute_center(weights: &[f64], coords: &[f64], kind: MassKind) -> Result<CenterOfMass> {
    if weights.len() != coords.len() {
        return Err(Error::Data(format!(
            "{} weights for {} coordinates",
            weights.len(),
            coords.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::Data(format!("invalid mass weight {w}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoCenter);
    }
    let g = weights.iter().zip(coords).map(|(w, c)| w * c).sum::<f64>() / total;
    // keep g inside the hull despite rounding
    let (lo, hi) = weights
        .iter()
        .zip(coords)
        .filter(|(w, _)| **w > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, c)| (lo.min(*c), hi.max(*c)));
    let g = g.clamp(lo, hi);
    let var = weights
        .iter()
        .zip(coords)
        .map(|(w, c)| w * (c - g).powi(2))
        .sum::<f64>()
        / total;
    Ok(CenterOfMass {
        g,
        delta_g: var.sqrt(),
        total_weight: total,
        kind,
    })
}

/// Net current injected by the middle of three consecutive buses into the
/// two adjoining segments, from voltages alone:
/// `(V_k − V_prev)/Z_k − (V_next − V_k)/Z_next`. For the last bus of a chain
/// pass `None` for the downstream side. Positive real part with voltage in
/// phase means generation.
pub fn estimate_bus_current(
    v_prev: Complex64,
    v_k: Complex64,
    z_k: Complex64,
    downstream: Option<(Complex64, Complex64)>,
) -> Result<Complex64> {
    if z_k.norm() == 0.0 {
        return Err(Error::Data("zero upstream impedance".into()));
    }
    let mut i = (v_k - v_prev) / z_k;
    if let Some((v_next, z_next)) = downstream {
        if z_next.norm() == 0.0 {
            return Err(Error::Data("zero downstream impedance".into()));
        }
        i -= (v_next - v_k) / z_next;
    }
    Ok(i)
}

/// Voltage-only current estimates for every main-body bus after the head, in chain
/// order. Each value includes the concentrated currents of its branches.
pub fn estimate_chain_currents(
    model: &NetworkModel,
    body: &MainBody,
    sol: &VoltageSolution,
) -> Result<Vec<(BusId, Complex64)>> {
    let idx: Vec<usize> = body
        .chain
        .iter()
        .map(|&b| model.index_of(b))
        .collect::<Result<_>>()?;
    let seg_z = |a: usize, b: usize| -> Result<Complex64> {
        model
            .neighbors(a)
            .iter()
            .find(|(m, _)| *m == b)
            .map(|&(_, s)| model.segment_z_pu(s))
            .ok_or_else(|| Error::Topology("main body is not a path".into()))
    };
    let mut out = Vec::with_capacity(idx.len().saturating_sub(1));
    for p in 1..idx.len() {
        let z_k = seg_z(idx[p - 1], idx[p])?;
        let downstream = match idx.get(p + 1) {
            Some(&nx) => Some((sol.voltages[nx], seg_z(idx[p], nx)?)),
            None => None,
        };
        let i = estimate_bus_current(sol.voltages[idx[p - 1]], sol.voltages[idx[p]], z_k, downstream)?;
        out.push((body.chain[p], i));
    }
    Ok(out)
}

/// Per-bus load and generation powers (kW + j kvar, both non-negative in P)
/// that produced a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct BusPowers {
    pub load_kw: Vec<Complex64>,
    pub gen_kw: Vec<Complex64>,
}

impl BusPowers {
    pub fn net_injections(&self) -> Vec<Complex64> {
        self.gen_kw.iter().zip(&self.load_kw).map(|(g, l)| g - l).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassPoint {
    pub bus: BusId,
    pub coord: f64,
    pub load: f64,
    pub generation: f64,
    pub net: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centers {
    pub g_g: Option<CenterOfMass>,
    pub g_l: Option<CenterOfMass>,
    pub g_gl: Option<CenterOfMass>,
}

fn weight(i: Complex64, v: Complex64, weighting: Weighting) -> f64 {
    let w = match weighting {
        Weighting::Magnitude => i.norm(),
        Weighting::RealPart => (i * v.conj()).re.abs() / v.norm(),
    };
    if i.norm() < CURRENT_THRESHOLD_PU {
        0.0
    } else {
        w
    }
}

/// Mass points of every non-head bus whose coordinate lies in `window`
/// (inclusive), branch buses placed at their coupling coordinate.
pub fn mass_points(
    model: &NetworkModel,
    body: &MainBody,
    sol: &VoltageSolution,
    powers: &BusPowers,
    window: Option<(f64, f64)>,
    opts: CenterOptions,
) -> Result<Vec<MassPoint>> {
    let inside = |c: f64| match window {
        Some((a, b)) => c >= a - 1e-12 && c <= b + 1e-12,
        None => true,
    };
    let s_base = model.base.s_base_kw();
    let mut points = Vec::new();
    match opts.source {
        CurrentSource::Metered => {
            for (k, bus) in model.buses.iter().enumerate() {
                if bus.kind == BusKind::FeederHead {
                    continue;
                }
                let coord = body.coordinate_of(bus.id)?;
                if !inside(coord) {
                    continue;
                }
                let v = sol.voltages[k];
                let il = (powers.load_kw[k] / s_base / v).conj();
                let ig = (powers.gen_kw[k] / s_base / v).conj();
                let point = MassPoint {
                    bus: bus.id,
                    coord,
                    load: weight(il, v, opts.weighting),
                    generation: weight(ig, v, opts.weighting),
                    net: weight(ig - il, v, opts.weighting),
                };
                if point.load > 0.0 || point.generation > 0.0 || point.net > 0.0 {
                    points.push(point);
                }
            }
        }
        CurrentSource::Estimated => {
            for (bus, i) in estimate_chain_currents(model, body, sol)? {
                let coord = body.coordinate_of(bus)?;
                if !inside(coord) {
                    continue;
                }
                let v = sol.voltages[model.index_of(bus)?];
                let w = weight(i, v, opts.weighting);
                if w == 0.0 {
                    continue;
                }
                let injecting = (v * i.conj()).re > 0.0;
                points.push(MassPoint {
                    bus,
                    coord,
                    load: if injecting { 0.0 } else { w },
                    generation: if injecting { w } else { 0.0 },
                    net: w,
                });
            }
        }
    }
    Ok(points)
}

fn center_of(points: &[MassPoint], pick: impl Fn(&MassPoint) -> f64, kind: MassKind) -> Option<CenterOfMass> {
    let w: Vec<f64> = points.iter().map(&pick).collect();
    let c: Vec<f64> = points.iter().map(|p| p.coord).collect();
    compute_center(&w, &c, kind).ok()
}

pub fn centers_from_points(points: &[MassPoint]) -> Centers {
    Centers {
        g_g: center_of(points, |p| p.generation, MassKind::Generation),
        g_l: center_of(points, |p| p.load, MassKind::Load),
        g_gl: center_of(points, |p| p.net, MassKind::Net),
    }
}

/// g_G, g_L and g_GL over the buses inside `window`. A center is `None` when
/// its class carries no weight there (no generation online, full local
/// compensation, ...).
pub fn compute_all_centers(
    model: &NetworkModel,
    body: &MainBody,
    sol: &VoltageSolution,
    powers: &BusPowers,
    window: Option<(f64, f64)>,
    opts: CenterOptions,
) -> Result<Centers> {
    let points = mass_points(model, body, sol, powers, window, opts)?;
    Ok(centers_from_points(&points))
}

/// Text rendering of the masses along the chain, one row per chain bus with
/// load (`-`) and generation (`+`) bars, and the center positions.
pub fn mass_diagram(body: &MainBody, points: &[MassPoint], centers: &Centers) -> String {
    let mut load = vec![0.0; body.len()];
    let mut gen = vec![0.0; body.len()];
    for p in points {
        if let Ok(pos) = body.chain_position(p.bus) {
            load[pos] += p.load;
            gen[pos] += p.generation;
        }
    }
    let peak = load.iter().chain(&gen).cloned().fold(0.0f64, f64::max).max(1e-12);
    let mark = |c: &Option<CenterOfMass>, lo: f64, hi: f64, tag: &str| match c {
        Some(cm) if cm.g >= lo && cm.g < hi => format!(" <{tag}"),
        _ => String::new(),
    };
    let mut out = String::new();
    for (pos, bus) in body.chain.iter().enumerate() {
        let lo = body.coords[pos];
        let hi = body.coords.get(pos + 1).copied().unwrap_or(f64::INFINITY);
        let nl = (load[pos] / peak * 30.0).round() as usize;
        let ng = (gen[pos] / peak * 30.0).round() as usize;
        let _ = writeln!(
            out,
            "{bus:>5} {lo:>9.4} |{:>30}|{:<30}|{}{}{}",
            "-".repeat(nl),
            "+".repeat(ng),
            mark(&centers.g_l, lo, hi, "gL"),
            mark(&centers.g_g, lo, hi, "gG"),
            mark(&centers.g_gl, lo, hi, "gGL"),
        );
    }
    out
}
