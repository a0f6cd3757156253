//! VPP actors, their setpoint limits and their effect on bus powers.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::com::BusPowers;
use crate::error::{Error, Result};
use crate::network::{BusId, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActorKind {
    DispatchableDg,
    StochasticDg,
    InterruptibleLoad,
    Storage,
}

impl ActorKind {
    pub fn is_generation(self) -> bool {
        matches!(self, ActorKind::DispatchableDg | ActorKind::StochasticDg)
    }
}

fn one() -> f64 {
    1.0
}

/// A controllable unit of the VPP.
///
/// `setpoint_kw` means DG output for generators, shed demand for
/// interruptible loads and net discharge (negative while charging) for
/// storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VppActor {
    pub id: String,
    pub bus: BusId,
    pub kind: ActorKind,
    pub rated_kw: f64,
    #[serde(default)]
    pub setpoint_kw: f64,
    #[serde(default = "one")]
    pub availability: f64,
    #[serde(default)]
    pub curtailment_protected: bool,
    /// Storage energy budget for the regulation horizon (one hour).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_kwh: Option<f64>,
    /// DG power factor, 1.0 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub actors: Vec<VppActor>,
}

pub fn load_fleet(path: impl AsRef<Path>) -> Result<Vec<VppActor>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_fleet(&text)
}

pub fn parse_fleet(text: &str) -> Result<Vec<VppActor>> {
    let file: FleetFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    for a in &file.actors {
        if !(a.rated_kw > 0.0) {
            return Err(Error::Data(format!("actor {} has non-positive rating", a.id)));
        }
        if !(0.0..=1.0).contains(&a.availability) {
            return Err(Error::Data(format!("actor {} availability outside [0, 1]", a.id)));
        }
    }
    Ok(file.actors)
}

/// Checks every actor sits on a declared bus and records it there.
pub fn attach_fleet(model: &mut NetworkModel, actors: &[VppActor]) -> Result<()> {
    for a in actors {
        model.attach_actor(a.bus, &a.id)?;
    }
    Ok(())
}

/// Lower and upper setpoint bound of each actor for a given bus loading.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ActorLimits {
    /// `bus_loads_kw` is the scenario demand per bus (model bus order); an
    /// interruptible load cannot shed more than the demand present at its bus.
    pub fn new(model: &NetworkModel, actors: &[VppActor], bus_loads_kw: &[Complex64]) -> Result<Self> {
        let mut lower = Vec::with_capacity(actors.len());
        let mut upper = Vec::with_capacity(actors.len());
        for a in actors {
            let (lo, hi) = match a.kind {
                ActorKind::DispatchableDg | ActorKind::StochasticDg => (0.0, a.availability * a.rated_kw),
                ActorKind::InterruptibleLoad => {
                    let demand = bus_loads_kw[model.index_of(a.bus)?].re.max(0.0);
                    (0.0, a.rated_kw.min(demand))
                }
                ActorKind::Storage => {
                    let p = a.energy_kwh.map_or(a.rated_kw, |e| a.rated_kw.min(e));
                    (-p, p)
                }
            };
            lower.push(lo);
            upper.push(hi);
        }
        Ok(Self { lower, upper })
    }

    pub fn admits(&self, i: usize, setpoint: f64) -> bool {
        let eps = 1e-9 * self.upper[i].abs().max(1.0);
        setpoint >= self.lower[i] - eps && setpoint <= self.upper[i] + eps
    }
}

/// Load and generation per bus once the actors' setpoints are applied.
pub fn bus_powers(model: &NetworkModel, bus_loads_kw: &[Complex64], actors: &[VppActor]) -> Result<BusPowers> {
    let mut load = bus_loads_kw.to_vec();
    let mut gen = vec![Complex64::default(); model.len()];
    for a in actors {
        let k = model.index_of(a.bus)?;
        match a.kind {
            ActorKind::DispatchableDg | ActorKind::StochasticDg => {
                let pf = a.power_factor.unwrap_or(1.0);
                let q = a.setpoint_kw * (1.0 - pf * pf).max(0.0).sqrt() / pf;
                gen[k] += Complex64::new(a.setpoint_kw, q);
            }
            ActorKind::InterruptibleLoad => {
                let base = bus_loads_kw[k];
                let ratio = if base.re > 0.0 { base.im / base.re } else { 0.0 };
                load[k] -= Complex64::new(a.setpoint_kw, a.setpoint_kw * ratio);
            }
            ActorKind::Storage => {
                if a.setpoint_kw >= 0.0 {
                    gen[k] += Complex64::new(a.setpoint_kw, 0.0);
                } else {
                    load[k] += Complex64::new(-a.setpoint_kw, 0.0);
                }
            }
        }
    }
    for l in &mut load {
        if l.re.abs() < 1e-9 {
            l.re = 0.0;
        }
    }
    Ok(BusPowers {
        load_kw: load,
        gen_kw: gen,
    })
}

/// Net VPP injection: DG output + shed load + storage discharge.
pub fn vpp_power_kw(actors: &[VppActor]) -> f64 {
    actors.iter().map(|a| a.setpoint_kw).sum()
}

pub fn generation_kw(actors: &[VppActor]) -> f64 {
    actors
        .iter()
        .filter(|a| a.kind.is_generation())
        .map(|a| a.setpoint_kw)
        .sum()
}

pub fn il_shed_kw(actors: &[VppActor]) -> f64 {
    actors
        .iter()
        .filter(|a| a.kind == ActorKind::InterruptibleLoad)
        .map(|a| a.setpoint_kw)
        .sum()
}

pub fn total_rated_kw(actors: &[VppActor]) -> f64 {
    actors.iter().map(|a| a.rated_kw).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> NetworkModel {
        NetworkModel::from_json(
            r#"{"base": {"kv": 20, "mva": 10},
                "buses": [{"id": 1, "kind": "feeder-head"}, {"id": 2, "kind": "load", "p_kw": 100, "q_kvar": 50}],
                "segments": [{"from": 1, "to": 2, "r_ohm": 1, "x_ohm": 1}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn fleet_parses_with_defaults() {
        let fleet = parse_fleet(
            r#"{"actors": [{"id": "w", "bus": 2, "kind": "stochastic-dg", "rated_kw": 200, "availability": 0.5},
                           {"id": "il", "bus": 2, "kind": "interruptible-load", "rated_kw": 150}]}"#,
        )
        .unwrap();
        assert_eq!(fleet[1].availability, 1.0);
        assert_eq!(fleet[1].setpoint_kw, 0.0);
        let m = model();
        let limits = ActorLimits::new(&m, &fleet, &[Complex64::default(), Complex64::new(100.0, 50.0)]).unwrap();
        assert_eq!(limits.upper, vec![100.0, 100.0]);
    }

    #[test]
    fn shedding_keeps_load_power_factor() {
        let m = model();
        let mut fleet = parse_fleet(
            r#"{"actors": [{"id": "il", "bus": 2, "kind": "interruptible-load", "rated_kw": 150}]}"#,
        )
        .unwrap();
        fleet[0].setpoint_kw = 40.0;
        let p = bus_powers(&m, &[Complex64::default(), Complex64::new(100.0, 50.0)], &fleet).unwrap();
        assert_eq!(p.load_kw[1], Complex64::new(60.0, 30.0));
    }

    #[test]
    fn bad_availability_rejected() {
        assert!(parse_fleet(
            r#"{"actors": [{"id": "w", "bus": 2, "kind": "stochastic-dg", "rated_kw": 200, "availability": 1.5}]}"#
        )
        .is_err());
    }
}
