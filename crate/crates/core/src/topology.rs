//! Main-body extraction: the longest electric path from the feeder head,
//! with every off-path subtree concentrated onto its coupling bus.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::network::{BusId, NetworkModel};

/// Relative tolerance under which two accumulated path impedances are a tie.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MainBody {
    /// Bus ids from the feeder head to the terminus.
    pub chain: Vec<BusId>,
    /// Accumulated |Z| in ohms from the head to each chain bus.
    pub coords: Vec<f64>,
    /// Buses hanging off each chain bus (nested branches flattened).
    pub branches: Vec<Vec<BusId>>,
    coupling: HashMap<BusId, usize>,
}

impl MainBody {
    /// Position on the chain of the bus itself or of its coupling bus.
    pub fn chain_position(&self, bus: BusId) -> Result<usize> {
        self.coupling.get(&bus).copied().ok_or(Error::UnknownBus(bus))
    }

    pub fn coordinate_of(&self, bus: BusId) -> Result<f64> {
        Ok(self.coords[self.chain_position(bus)?])
    }

    pub fn is_on_chain(&self, bus: BusId) -> bool {
        self.coupling
            .get(&bus)
            .is_some_and(|&pos| self.chain[pos] == bus)
    }

    pub fn total_length(&self) -> f64 {
        self.coords.last().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.chain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chain.is_empty()
    }
}

pub(crate) fn is_longer(candidate: f64, best: f64) -> bool {
    candidate > best + TIE_TOLERANCE * best.abs().max(1.0)
}

pub(crate) fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Depth-first walk from the feeder head; the chain ends at the leaf with the
/// largest accumulated |Z|, ties going to the smallest leaf id.
pub fn extract_main_body(model: &NetworkModel) -> MainBody {
    let n = model.len();
    let head = model.head_index();
    let mut parent = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut stack = vec![head];
    parent[head] = head;
    let mut best: Option<usize> = None;

    while let Some(k) = stack.pop() {
        let mut leaf = true;
        for &(m, seg) in model.neighbors(k) {
            if parent[m] != usize::MAX {
                continue;
            }
            leaf = false;
            parent[m] = k;
            dist[m] = dist[k] + model.segments[seg].impedance.norm();
            children[k].push(m);
            stack.push(m);
        }
        if leaf && k != head {
            best = Some(match best {
                None => k,
                Some(b) => {
                    let (dk, db) = (dist[k], dist[b]);
                    let tie_wins = is_tie(dk, db) && model.buses[k].id < model.buses[b].id;
                    if (is_longer(dk, db)) || tie_wins {
                        k
                    } else {
                        b
                    }
                }
            });
        }
    }

    let mut path = vec![best.unwrap_or(head)];
    while *path.last().unwrap() != head {
        let k = *path.last().unwrap();
        path.push(parent[k]);
    }
    path.reverse();

    let mut on_chain = vec![false; n];
    for &k in &path {
        on_chain[k] = true;
    }

    let mut coupling = HashMap::with_capacity(n);
    let mut branches = Vec::with_capacity(path.len());
    for (pos, &k) in path.iter().enumerate() {
        coupling.insert(model.buses[k].id, pos);
        let mut members = Vec::new();
        let mut todo: Vec<usize> = children[k].iter().copied().filter(|c| !on_chain[*c]).collect();
        while let Some(b) = todo.pop() {
            members.push(model.buses[b].id);
            coupling.insert(model.buses[b].id, pos);
            todo.extend(children[b].iter().copied());
        }
        members.sort_unstable();
        branches.push(members);
    }

    MainBody {
        chain: path.iter().map(|&k| model.buses[k].id).collect(),
        coords: path.iter().map(|&k| dist[k]).collect(),
        branches,
        coupling,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(segments: &[(u32, u32, f64)], n: u32) -> NetworkModel {
        let buses: Vec<String> = (0..n)
            .map(|i| {
                let kind = if i == 0 { "feeder-head" } else { "load" };
                format!(r#"{{"id": {i}, "kind": "{kind}", "p_kw": 10}}"#)
            })
            .collect();
        let segs: Vec<String> = segments
            .iter()
            .map(|(f, t, r)| format!(r#"{{"from": {f}, "to": {t}, "r_ohm": {r}, "x_ohm": 0}}"#))
            .collect();
        NetworkModel::from_json(&format!(
            r#"{{"base": {{"kv": 1, "mva": 1}}, "buses": [{}], "segments": [{}]}}"#,
            buses.join(","),
            segs.join(",")
        ))
        .unwrap()
    }

    #[test]
    fn pure_chain() {
        let m = net(&[(0, 1, 0.2), (1, 2, 0.2), (2, 3, 0.2), (3, 4, 0.2)], 5);
        let body = extract_main_body(&m);
        assert_eq!(body.chain, vec![0, 1, 2, 3, 4]);
        assert!(body.branches.iter().all(|b| b.is_empty()));
        assert!((body.coordinate_of(1).unwrap() - 0.2).abs() < 1e-12);
        for k in 0..5u32 {
            assert!((body.coordinate_of(k).unwrap() - 0.2 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn y_network_takes_longer_leg() {
        // head 0 -> A 1 -> B 2 (0.5), branch A -> C 3 (0.3)
        let m = net(&[(0, 1, 0.7), (1, 2, 0.5), (1, 3, 0.3)], 4);
        let body = extract_main_body(&m);
        assert_eq!(body.chain, vec![0, 1, 2]);
        assert_eq!(body.branches[1], vec![3]);
        assert!((body.coordinate_of(3).unwrap() - 0.7).abs() < 1e-12);
        assert!(!body.is_on_chain(3));
    }

    #[test]
    fn tie_goes_to_lower_leaf_id() {
        let m = net(&[(0, 1, 0.5), (1, 3, 0.5), (1, 2, 0.5)], 4);
        let body = extract_main_body(&m);
        assert_eq!(body.chain, vec![0, 1, 2]);
        assert_eq!(body.branches[1], vec![3]);
    }

    #[test]
    fn nested_branches_flatten_to_main_line() {
        // chain 0-1-2-3-4, branch 1-5-6 with sub-branch 5-7
        let m = net(
            &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 4, 1.0), (1, 5, 0.1), (5, 6, 0.1), (5, 7, 0.1)],
            8,
        );
        let body = extract_main_body(&m);
        assert_eq!(body.chain, vec![0, 1, 2, 3, 4]);
        assert_eq!(body.branches[1], vec![5, 6, 7]);
        assert_eq!(body.chain_position(7).unwrap(), 1);
    }

    #[test]
    fn unknown_bus() {
        let m = net(&[(0, 1, 1.0)], 2);
        assert!(matches!(
            extract_main_body(&m).coordinate_of(42),
            Err(Error::UnknownBus(42))
        ));
    }
}
