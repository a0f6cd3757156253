//! Independent oracles shared by the integration tests. Nothing here calls
//! into the solver, the topology code or the admittance builder.
#![allow(dead_code)]

use std::collections::VecDeque;

use comvr::network::{Base, BusKind, BusRecord, NetworkFile, NetworkModel, SegmentRecord};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BASE: Base = Base { kv: 20.0, mva: 10.0 };

pub fn z_base() -> f64 {
    BASE.kv * BASE.kv / BASE.mva
}

pub fn s_base_kw() -> f64 {
    BASE.mva * 1000.0
}

/// A radial case described only by raw records.
#[derive(Debug, Clone)]
pub struct RandomFeeder {
    pub file: NetworkFile,
    /// Net injection per bus id, kW + j kvar (generation positive).
    pub injections: Vec<(u32, Complex64)>,
}

impl RandomFeeder {
    pub fn model(&self) -> NetworkModel {
        NetworkModel::from_file(self.file.clone()).expect("random feeder is valid")
    }

    /// Injections in the model's bus order.
    pub fn injections_for(&self, model: &NetworkModel) -> Vec<Complex64> {
        model
            .buses
            .iter()
            .map(|b| self.injections.iter().find(|(id, _)| *id == b.id).unwrap().1)
            .collect()
    }
}

/// `n` buses with shuffled ids, each attached to a random earlier bus.
/// `coarse` draws impedances from a two-value set so equal-length paths are
/// common.
pub fn random_feeder(rng: &mut ChaCha8Rng, n: usize, coarse: bool) -> RandomFeeder {
    let mut ids: Vec<u32> = (0..n as u32).map(|i| 10 + 7 * i).collect();
    ids.shuffle(rng);
    let mut buses = Vec::new();
    let mut injections = Vec::new();
    for (i, &id) in ids.iter().enumerate() {
        let kind = if i == 0 { BusKind::FeederHead } else { BusKind::Load };
        let p = if i == 0 { 0.0 } else { rng.random_range(0.0..600.0) };
        buses.push(BusRecord {
            id,
            kind,
            p_kw: p,
            q_kvar: Some(0.3 * p),
            power_factor: None,
        });
        let s = if i == 0 {
            Complex64::default()
        } else if rng.random_bool(0.2) {
            Complex64::new(rng.random_range(0.0..400.0), rng.random_range(-50.0..50.0))
        } else {
            -Complex64::new(p, rng.random_range(0.0..0.5) * p)
        };
        injections.push((id, s));
    }
    let mut segments = Vec::new();
    for i in 1..n {
        let parent = ids[rng.random_range(0..i)];
        let (r, x) = if coarse {
            let v = if rng.random_bool(0.5) { 1.0 } else { 2.0 };
            (v, v)
        } else {
            (rng.random_range(0.1..2.5), rng.random_range(0.1..2.5))
        };
        segments.push(SegmentRecord {
            from: parent,
            to: ids[i],
            length_km: None,
            conductor: None,
            r_ohm: Some(r),
            x_ohm: Some(x),
        });
    }
    RandomFeeder {
        file: NetworkFile {
            name: None,
            base: Some(BASE),
            conductors: Vec::new(),
            buses,
            segments,
        },
        injections,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Tree view built from the raw records: parent and impedance (ohm) per bus.
#[derive(Debug, Clone)]
pub struct Tree {
    pub ids: Vec<u32>,
    pub head: usize,
    pub parent: Vec<Option<usize>>,
    pub z_ohm: Vec<Complex64>,
    pub children: Vec<Vec<usize>>,
    /// Breadth-first order from the head.
    pub order: Vec<usize>,
}

pub fn tree(file: &NetworkFile) -> Tree {
    let ids: Vec<u32> = file.buses.iter().map(|b| b.id).collect();
    let pos = |id: u32| ids.iter().position(|&x| x == id).unwrap();
    let head = file.buses.iter().position(|b| b.kind == BusKind::FeederHead).unwrap();
    let n = ids.len();
    let mut adj: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    for s in &file.segments {
        let z = Complex64::new(s.r_ohm.unwrap(), s.x_ohm.unwrap());
        let (a, b) = (pos(s.from), pos(s.to));
        adj[a].push((b, z));
        adj[b].push((a, z));
    }
    let mut parent = vec![None; n];
    let mut z_ohm = vec![Complex64::default(); n];
    let mut children = vec![Vec::new(); n];
    let mut seen = vec![false; n];
    let mut order = Vec::new();
    let mut q = VecDeque::from([head]);
    seen[head] = true;
    while let Some(k) = q.pop_front() {
        order.push(k);
        for &(m, z) in &adj[k] {
            if !seen[m] {
                seen[m] = true;
                parent[m] = Some(k);
                z_ohm[m] = z;
                children[k].push(m);
                q.push_back(m);
            }
        }
    }
    Tree {
        ids,
        head,
        parent,
        z_ohm,
        children,
        order,
    }
}

/// Backward/forward sweep. `inj_kw` is indexed like `t.ids`. Returns the
/// voltage phasors (p.u.) or `None` if the sweep does not settle.
pub fn sweep(t: &Tree, inj_kw: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = t.ids.len();
    let s: Vec<Complex64> = inj_kw.iter().map(|x| x / s_base_kw()).collect();
    let z: Vec<Complex64> = t.z_ohm.iter().map(|x| x / z_base()).collect();
    let mut v = vec![Complex64::new(1.0, 0.0); n];
    for _ in 0..500 {
        // current drawn from the parent into each bus's subtree
        let mut branch = vec![Complex64::default(); n];
        for &k in t.order.iter().rev() {
            if k == t.head {
                continue;
            }
            let own = -(s[k] / v[k]).conj();
            let sub: Complex64 = t.children[k].iter().map(|&c| branch[c]).sum();
            branch[k] = own + sub;
        }
        let mut next = v.clone();
        for &k in &t.order {
            if let Some(p) = t.parent[k] {
                next[k] = next[p] - z[k] * branch[k];
            }
        }
        let change = next.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        v = next;
        if change < 1e-13 {
            return Some(v);
        }
        if v.iter().any(|x| !x.norm().is_finite() || x.norm() < 0.2) {
            return None;
        }
    }
    None
}

/// Admittance matrix from the raw records (p.u.), indexed like `t.ids`.
pub fn admittance(t: &Tree) -> Vec<Vec<Complex64>> {
    let n = t.ids.len();
    let mut y = vec![vec![Complex64::default(); n]; n];
    for k in 0..n {
        if let Some(p) = t.parent[k] {
            let yk = 1.0 / (t.z_ohm[k] / z_base());
            y[k][k] += yk;
            y[p][p] += yk;
            y[k][p] -= yk;
            y[p][k] -= yk;
        }
    }
    y
}

/// S = V conj(Y V) in p.u.
pub fn power(y: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    (0..v.len())
        .map(|k| {
            let i: Complex64 = (0..v.len()).map(|m| y[k][m] * v[m]).sum();
            v[k] * i.conj()
        })
        .collect()
}

/// Central-difference Jacobian over non-head buses, columns `[θ..., ln V...]`
/// so the voltage columns are `V ∂/∂V`. Returns (H, N, J, L).
pub fn fd_jacobian(t: &Tree, v: &[Complex64], h: f64) -> [Vec<Vec<f64>>; 4] {
    let y = admittance(t);
    let keep: Vec<usize> = (0..t.ids.len()).filter(|&k| k != t.head).collect();
    let d = keep.len();
    let mut blocks = [vec![vec![0.0; d]; d], vec![vec![0.0; d]; d], vec![vec![0.0; d]; d], vec![vec![0.0; d]; d]];
    for (c, &m) in keep.iter().enumerate() {
        for var in 0..2 {
            let perturb = |sign: f64| {
                let mut w = v.to_vec();
                w[m] = if var == 0 {
                    w[m] * Complex64::from_polar(1.0, sign * h)
                } else {
                    w[m] * (sign * h).exp()
                };
                power(&y, &w)
            };
            let (plus, minus) = (perturb(1.0), perturb(-1.0));
            for (r, &k) in keep.iter().enumerate() {
                let ds = (plus[k] - minus[k]) / (2.0 * h);
                let (p_block, q_block) = if var == 0 { (0, 2) } else { (1, 3) };
                blocks[p_block][r][c] = ds.re;
                blocks[q_block][r][c] = ds.im;
            }
        }
    }
    blocks
}

/// Longest head-to-leaf path by accumulated |Z| found by listing every leaf
/// path. Ties within 1e-9 relative go to the smaller leaf id. Returns the
/// chain (ids), chain coordinates, and the coordinate of every bus id.
pub fn brute_main_body(t: &Tree) -> (Vec<u32>, Vec<f64>, Vec<(u32, f64)>) {
    let n = t.ids.len();
    let mut depth = vec![0.0; n];
    for &k in &t.order {
        if let Some(p) = t.parent[k] {
            depth[k] = depth[p] + t.z_ohm[k].norm();
        }
    }
    let leaves: Vec<usize> = (0..n).filter(|&k| k != t.head && t.children[k].is_empty()).collect();
    let mut best: Option<usize> = None;
    for &leaf in &leaves {
        best = match best {
            None => Some(leaf),
            Some(b) => {
                let (a, bb) = (depth[leaf], depth[b]);
                let tie = (a - bb).abs() <= 1e-9 * a.abs().max(bb.abs()).max(1.0);
                if (!tie && a > bb) || (tie && t.ids[leaf] < t.ids[b]) {
                    Some(leaf)
                } else {
                    Some(b)
                }
            }
        };
    }
    let mut path = Vec::new();
    let mut cur = best.unwrap_or(t.head);
    loop {
        path.push(cur);
        match t.parent[cur] {
            Some(p) => cur = p,
            None => break,
        }
    }
    path.reverse();
    let on_path = |k: usize| path.contains(&k);
    let coords: Vec<(u32, f64)> = (0..n)
        .map(|k| {
            let mut c = k;
            while !on_path(c) {
                c = t.parent[c].unwrap();
            }
            (t.ids[k], depth[c])
        })
        .collect();
    (
        path.iter().map(|&k| t.ids[k]).collect(),
        path.iter().map(|&k| depth[k]).collect(),
        coords,
    )
}

/// Two-bus closed form: receiving-end magnitude for a load P + jQ (p.u.)
/// over R + jX (p.u.) from a 1.0 p.u. source (high-voltage root).
pub fn two_bus_voltage(p: f64, q: f64, r: f64, x: f64) -> f64 {
    let b = 2.0 * (p * r + q * x) - 1.0;
    let c = (p * p + q * q) * (r * r + x * x);
    ((-b + (b * b - 4.0 * c).sqrt()) / 2.0).sqrt()
}

/// Load scale at which the two-bus receiving end sits at `v` p.u.: the
/// quartic solved for the scale s with P = s·p, Q = s·q.
pub fn two_bus_critical_scale(p: f64, q: f64, r: f64, x: f64, v: f64) -> f64 {
    // s²(p²+q²)(r²+x²) + s·2(pr+qx)v² + v⁴ − v² = 0
    let a = (p * p + q * q) * (r * r + x * x);
    let b = 2.0 * (p * r + q * x) * v * v;
    let c = v.powi(4) - v * v;
    (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
}

/// Tree view of a loaded model, built from its segment list (ohm values).
pub fn tree_of_model(model: &NetworkModel) -> Tree {
    let file = NetworkFile {
        name: None,
        base: Some(model.base),
        conductors: Vec::new(),
        buses: model
            .buses
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                kind: b.kind,
                p_kw: 0.0,
                q_kvar: None,
                power_factor: None,
            })
            .collect(),
        segments: model
            .segments
            .iter()
            .map(|s| SegmentRecord {
                from: s.from,
                to: s.to,
                length_km: None,
                conductor: None,
                r_ohm: Some(s.impedance.re),
                x_ohm: Some(s.impedance.im),
            })
            .collect(),
    };
    tree(&file)
}
