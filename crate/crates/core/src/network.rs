//! Feeder model: buses, impedance segments, per-unit bases and the bus
//! admittance matrix.
//!
//! Networks are read from a JSON description with four sections
//! (`base`, `conductors`, `buses`, `segments`). Segment impedance comes either
//! from a conductor type and a length, or from explicit `r_ohm`/`x_ohm`.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type BusId = u32;

/// Default load power factor (lagging) when a bus gives neither `q_kvar` nor
/// `power_factor`.
pub const DEFAULT_LOAD_POWER_FACTOR: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    FeederHead,
    Junction,
    Load,
    Pole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Peak demand in kW + j kvar.
    pub base_load: Complex64,
    pub attached_actors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub from: BusId,
    pub to: BusId,
    /// Series impedance in ohms.
    pub impedance: Complex64,
    pub conductor: Option<String>,
    pub length_km: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Base {
    pub kv: f64,
    pub mva: f64,
}

impl Base {
    pub fn z_base(&self) -> f64 {
        self.kv * self.kv / self.mva
    }

    pub fn s_base_kw(&self) -> f64 {
        self.mva * 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    pub name: String,
    pub r_ohm_per_km: f64,
    pub x_ohm_per_km: f64,
}

/// Built-in overhead-line data for the conductor types used on the bundled
/// feeder, taken from typical manufacturer tables at 50 Hz and ~1 m
/// equivalent spacing. Entries in a network file override these.
pub fn default_conductors() -> Vec<Conductor> {
    [
        ("CU-95", 0.193, 0.335),
        ("CU-35", 0.524, 0.367),
        ("CU-16", 1.150, 0.392),
        ("ACSR-35", 0.835, 0.374),
        ("ACSR-16", 1.880, 0.397),
        ("AAAC-35", 0.966, 0.371),
    ]
    .into_iter()
    .map(|(name, r, x)| Conductor {
        name: name.to_string(),
        r_ohm_per_km: r,
        x_ohm_per_km: x,
    })
    .collect()
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub base: Option<Base>,
    #[serde(default)]
    pub conductors: Vec<Conductor>,
    pub buses: Vec<BusRecord>,
    pub segments: Vec<SegmentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: BusId,
    pub kind: BusKind,
    #[serde(default)]
    pub p_kw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_kvar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_factor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub from: BusId,
    pub to: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conductor: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_ohm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ohm: Option<f64>,
}

// ---------------------------------------------------------------------------
// Admittance matrix
// ---------------------------------------------------------------------------

/// Dense complex bus admittance matrix in per unit, indexed by bus position
/// (buses sorted by id).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.n + col]
    }

    fn add(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[row * self.n + col] += value;
    }

    pub fn max_abs_diff(&self, other: &AdmittanceMatrix) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Builds Y from series segment admittances: `Y[k][m] = -1/Z_km`,
/// `Y[k][k] = sum of 1/Z over incident segments`. No shunt elements.
pub fn build_admittance(model: &NetworkModel) -> Result<AdmittanceMatrix> {
    assemble_admittance(model.buses.len(), &model.index, &model.segments, model.base)
}

fn assemble_admittance(
    n: usize,
    index: &HashMap<BusId, usize>,
    segments: &[Segment],
    base: Base,
) -> Result<AdmittanceMatrix> {
    let mut y = AdmittanceMatrix::zeros(n);
    for seg in segments {
        let z = seg.impedance / base.z_base();
        if z.norm() == 0.0 || !z.norm().is_finite() {
            return Err(Error::Data(format!(
                "segment {}-{} has zero or invalid impedance",
                seg.from, seg.to
            )));
        }
        let adm = z.inv();
        let (i, j) = (index[&seg.from], index[&seg.to]);
        y.add(i, i, adm);
        y.add(j, j, adm);
        y.add(i, j, -adm);
        y.add(j, i, -adm);
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Network model
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub name: Option<String>,
    pub base: Base,
    pub conductors: Vec<Conductor>,
    /// Sorted by id; a bus's position in this vector is its matrix index.
    pub buses: Vec<Bus>,
    pub segments: Vec<Segment>,
    index: HashMap<BusId, usize>,
    head: usize,
    admittance: AdmittanceMatrix,
    /// Per bus: (neighbour index, segment index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NetworkModel::from_json(&text)
}

impl NetworkModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn from_file(file: NetworkFile) -> Result<Self> {
        let base = file
            .base
            .ok_or_else(|| Error::Unit("missing per-unit base section".into()))?;
        if !(base.kv > 0.0 && base.mva > 0.0) {
            return Err(Error::Unit(format!(
                "per-unit base must be positive (kv={}, mva={})",
                base.kv, base.mva
            )));
        }

        let mut conductors = default_conductors();
        for c in file.conductors {
            match conductors.iter_mut().find(|d| d.name == c.name) {
                Some(slot) => *slot = c,
                None => conductors.push(c),
            }
        }

        let mut buses = Vec::with_capacity(file.buses.len());
        for rec in &file.buses {
            if rec.p_kw < 0.0 && rec.kind == BusKind::Load {
                return Err(Error::Data(format!("load bus {} has negative demand", rec.id)));
            }
            let q = match (rec.q_kvar, rec.power_factor) {
                (Some(q), _) => q,
                (None, pf) => {
                    let pf = pf.unwrap_or(DEFAULT_LOAD_POWER_FACTOR);
                    if !(pf > 0.0 && pf <= 1.0) {
                        return Err(Error::Data(format!("bus {} power factor {pf}", rec.id)));
                    }
                    rec.p_kw * (1.0 - pf * pf).sqrt() / pf
                }
            };
            buses.push(Bus {
                id: rec.id,
                kind: rec.kind,
                base_load: Complex64::new(rec.p_kw, q),
                attached_actors: Vec::new(),
            });
        }
        buses.sort_by_key(|b| b.id);
        let mut index = HashMap::with_capacity(buses.len());
        for (i, b) in buses.iter().enumerate() {
            if index.insert(b.id, i).is_some() {
                return Err(Error::Topology(format!("duplicate bus id {}", b.id)));
            }
        }
        let heads: Vec<usize> = buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BusKind::FeederHead)
            .map(|(i, _)| i)
            .collect();
        if heads.len() != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one feeder-head bus, found {}",
                heads.len()
            )));
        }

        let mut segments = Vec::with_capacity(file.segments.len());
        for rec in &file.segments {
            for end in [rec.from, rec.to] {
                if !index.contains_key(&end) {
                    return Err(Error::Topology(format!(
                        "segment {}-{} references undeclared bus {end}",
                        rec.from, rec.to
                    )));
                }
            }
            if rec.from == rec.to {
                return Err(Error::Topology(format!("segment {0}-{0} is a self loop", rec.from)));
            }
            let impedance = match (rec.r_ohm, rec.x_ohm, &rec.conductor, rec.length_km) {
                (Some(r), Some(x), _, _) => Complex64::new(r, x),
                (None, None, Some(name), Some(len)) => {
                    let c = conductors.iter().find(|c| &c.name == name).ok_or_else(|| {
                        Error::Data(format!("unknown conductor type {name:?}"))
                    })?;
                    Complex64::new(c.r_ohm_per_km, c.x_ohm_per_km) * len
                }
                _ => {
                    return Err(Error::Parse(format!(
                        "segment {}-{} needs either r_ohm+x_ohm or conductor+length_km",
                        rec.from, rec.to
                    )))
                }
            };
            segments.push(Segment {
                from: rec.from,
                to: rec.to,
                impedance,
                conductor: rec.conductor.clone(),
                length_km: rec.length_km,
            });
        }

        Self::assemble(file.name, base, conductors, buses, segments, index, heads[0])
    }

    fn assemble(
        name: Option<String>,
        base: Base,
        conductors: Vec<Conductor>,
        buses: Vec<Bus>,
        segments: Vec<Segment>,
        index: HashMap<BusId, usize>,
        head: usize,
    ) -> Result<Self> {
        let n = buses.len();
        if segments.len() + 1 != n {
            return Err(Error::Topology(format!(
                "radial network needs {} segments for {} buses, found {}",
                n.saturating_sub(1),
                n,
                segments.len()
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for (s, seg) in segments.iter().enumerate() {
            let (i, j) = (index[&seg.from], index[&seg.to]);
            adjacency[i].push((j, s));
            adjacency[j].push((i, s));
        }
        // n-1 edges and connected <=> tree
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([head]);
        seen[head] = true;
        let mut reached = 1;
        while let Some(k) = queue.pop_front() {
            for &(m, _) in &adjacency[k] {
                if !seen[m] {
                    seen[m] = true;
                    reached += 1;
                    queue.push_back(m);
                }
            }
        }
        if reached != n {
            let lost = buses
                .iter()
                .zip(&seen)
                .find(|(_, s)| !**s)
                .map(|(b, _)| b.id)
                .unwrap_or_default();
            return Err(Error::Topology(format!(
                "bus {lost} is not connected to the feeder head (cycle or island)"
            )));
        }
        let admittance = assemble_admittance(n, &index, &segments, base)?;
        Ok(Self {
            name,
            base,
            conductors,
            buses,
            segments,
            index,
            head,
            admittance,
            adjacency,
        })
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            base: Some(self.base),
            conductors: self.conductors.clone(),
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id,
                    kind: b.kind,
                    p_kw: b.base_load.re,
                    q_kvar: Some(b.base_load.im),
                    power_factor: None,
                })
                .collect(),
            segments: self
                .segments
                .iter()
                .map(|s| match (&s.conductor, s.length_km) {
                    (Some(c), Some(len)) => SegmentRecord {
                        from: s.from,
                        to: s.to,
                        length_km: Some(len),
                        conductor: Some(c.clone()),
                        r_ohm: None,
                        x_ohm: None,
                    },
                    _ => SegmentRecord {
                        from: s.from,
                        to: s.to,
                        length_km: s.length_km,
                        conductor: None,
                        r_ohm: Some(s.impedance.re),
                        x_ohm: Some(s.impedance.im),
                    },
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("network serializes")
    }

    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn index_of(&self, id: BusId) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownBus(id))
    }

    pub fn bus(&self, id: BusId) -> Result<&Bus> {
        Ok(&self.buses[self.index_of(id)?])
    }

    pub fn head_index(&self) -> usize {
        self.head
    }

    pub fn head_id(&self) -> BusId {
        self.buses[self.head].id
    }

    pub fn admittance(&self) -> &AdmittanceMatrix {
        &self.admittance
    }

    pub fn neighbors(&self, idx: usize) -> &[(usize, usize)] {
        &self.adjacency[idx]
    }

    /// Segment impedance in per unit.
    pub fn segment_z_pu(&self, seg: usize) -> Complex64 {
        self.segments[seg].impedance / self.base.z_base()
    }

    pub fn load_bus_count(&self) -> usize {
        self.buses.iter().filter(|b| b.kind == BusKind::Load).count()
    }

    /// Sum of bus peak loads (kW + j kvar).
    pub fn total_peak_load(&self) -> Complex64 {
        self.buses.iter().map(|b| b.base_load).sum()
    }

    /// Net bus injections (kW + j kvar, generation positive) for every bus
    /// loaded at `scale` times its peak.
    pub fn scaled_injections(&self, scale: f64) -> Vec<Complex64> {
        self.buses.iter().map(|b| -b.base_load * scale).collect()
    }

    /// Copy with every segment impedance multiplied by `factor`.
    pub fn with_impedance_scaled(&self, factor: f64) -> Result<Self> {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                impedance: s.impedance * factor,
                conductor: None,
                length_km: s.length_km,
                ..s.clone()
            })
            .collect();
        Self::assemble(
            self.name.clone(),
            self.base,
            self.conductors.clone(),
            self.buses.clone(),
            segments,
            self.index.clone(),
            self.head,
        )
    }

    pub(crate) fn attach_actor(&mut self, bus: BusId, actor: &str) -> Result<()> {
        let i = self.index_of(bus)?;
        self.buses[i].attached_actors.push(actor.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_bus(z: (f64, f64)) -> String {
        format!(
            r#"{{"base": {{"kv": 1.0, "mva": 1.0}},
                "buses": [{{"id": 1, "kind": "feeder-head"}}, {{"id": 2, "kind": "load", "p_kw": 100}}],
                "segments": [{{"from": 1, "to": 2, "r_ohm": {}, "x_ohm": {}}}]}}"#,
            z.0, z.1
        )
    }

    #[test]
    fn minimal_file_loads() {
        let m = NetworkModel::from_json(&two_bus((0.1, 0.1))).unwrap();
        assert_eq!(m.segments.len(), 1);
        assert_eq!(m.total_peak_load().re, 100.0);
        let q = 100.0 * (1.0f64 - 0.95 * 0.95).sqrt() / 0.95;
        assert!((m.total_peak_load().im - q).abs() < 1e-12);
    }

    #[test]
    fn single_branch_admittance() {
        // Z = j0.5 p.u. on a 1 kV / 1 MVA base
        let m = NetworkModel::from_json(&two_bus((0.0, 0.5))).unwrap();
        let y = m.admittance();
        let j2 = Complex64::new(0.0, 2.0);
        assert!((y.get(0, 1) - j2).norm() < 1e-12);
        assert!((y.get(1, 0) - j2).norm() < 1e-12);
        assert!((y.get(0, 0) + j2).norm() < 1e-12);
        assert!((y.get(1, 1) + j2).norm() < 1e-12);
    }

    #[test]
    fn series_middle_diagonal_doubles() {
        let text = r#"{"base": {"kv": 1.0, "mva": 1.0},
            "buses": [{"id": 1, "kind": "feeder-head"}, {"id": 2, "kind": "pole"}, {"id": 3, "kind": "load", "p_kw": 10}],
            "segments": [{"from": 1, "to": 2, "r_ohm": 0.3, "x_ohm": 0.4},
                         {"from": 2, "to": 3, "r_ohm": 0.3, "x_ohm": 0.4}]}"#;
        let m = NetworkModel::from_json(text).unwrap();
        let y = m.admittance();
        assert!((y.get(1, 1) - y.get(0, 0) * 2.0).norm() < 1e-12);
        assert!((y.get(2, 2) - y.get(0, 0)).norm() < 1e-12);
    }

    #[test]
    fn undeclared_endpoint_is_topology_error() {
        let text = r#"{"base": {"kv": 1.0, "mva": 1.0},
            "buses": [{"id": 1, "kind": "feeder-head"}, {"id": 2, "kind": "load", "p_kw": 10}],
            "segments": [{"from": 1, "to": 999, "r_ohm": 0.3, "x_ohm": 0.4}]}"#;
        assert!(matches!(NetworkModel::from_json(text), Err(Error::Topology(_))));
    }

    #[test]
    fn cycle_and_island_are_rejected() {
        let cyc = r#"{"base": {"kv": 1.0, "mva": 1.0},
            "buses": [{"id": 1, "kind": "feeder-head"}, {"id": 2, "kind": "pole"}, {"id": 3, "kind": "pole"}, {"id": 4, "kind": "pole"}],
            "segments": [{"from": 2, "to": 3, "r_ohm": 1, "x_ohm": 1},
                         {"from": 3, "to": 4, "r_ohm": 1, "x_ohm": 1},
                         {"from": 4, "to": 2, "r_ohm": 1, "x_ohm": 1}]}"#;
        assert!(matches!(NetworkModel::from_json(cyc), Err(Error::Topology(_))));
        let few = r#"{"base": {"kv": 1.0, "mva": 1.0},
            "buses": [{"id": 1, "kind": "feeder-head"}, {"id": 2, "kind": "pole"}, {"id": 3, "kind": "pole"}],
            "segments": [{"from": 1, "to": 2, "r_ohm": 1, "x_ohm": 1}]}"#;
        assert!(matches!(NetworkModel::from_json(few), Err(Error::Topology(_))));
    }

    #[test]
    fn missing_base_is_unit_error() {
        let text = r#"{"buses": [{"id": 1, "kind": "feeder-head"}], "segments": []}"#;
        assert!(matches!(NetworkModel::from_json(text), Err(Error::Unit(_))));
    }

    #[test]
    fn malformed_record_is_parse_error() {
        let text = r#"{"base": {"kv": 1.0, "mva": 1.0}, "buses": [{"id": "x"}], "segments": []}"#;
        assert!(matches!(NetworkModel::from_json(text), Err(Error::Parse(_))));
    }

    #[test]
    fn zero_impedance_is_data_error() {
        assert!(matches!(
            NetworkModel::from_json(&two_bus((0.0, 0.0))),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn conductor_table_can_be_overridden() {
        let text = r#"{"base": {"kv": 20.0, "mva": 10.0},
            "conductors": [{"name": "CU-95", "r_ohm_per_km": 1.0, "x_ohm_per_km": 2.0}],
            "buses": [{"id": 1, "kind": "feeder-head"}, {"id": 2, "kind": "load", "p_kw": 10}],
            "segments": [{"from": 1, "to": 2, "length_km": 0.5, "conductor": "CU-95"}]}"#;
        let m = NetworkModel::from_json(text).unwrap();
        assert_eq!(m.segments[0].impedance, Complex64::new(0.5, 1.0));
    }
}
