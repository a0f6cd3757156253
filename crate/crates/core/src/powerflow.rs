//! Newton-Raphson AC power flow in polar form.
//!
//! The correction vector is `[Δθ, ΔV/V]`, so the `N` and `L` blocks are the
//! derivatives with respect to a relative voltage change (`V_m ∂/∂V_m`).
//! Because the feeder is a tree, the Jacobian has the tree's sparsity in 2x2
//! blocks, and eliminating leaves first produces no fill-in: each Newton step
//! is solved in O(n).

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::network::{BusId, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Largest tolerated |ΔP| or |ΔQ| at a non-slack bus, in p.u.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageSolution {
    pub bus_ids: Vec<BusId>,
    /// Bus voltage phasors in p.u.
    pub voltages: Vec<Complex64>,
    /// Net injection per bus in kW + j kvar (generation positive). The slack
    /// entry holds the solved feeder-head injection.
    pub injections_kw: Vec<Complex64>,
    pub slack_injection_kw: Complex64,
    pub iterations: usize,
    pub max_mismatch: f64,
    losses_kw: f64,
}

impl VoltageSolution {
    pub fn magnitude(&self, idx: usize) -> f64 {
        self.voltages[idx].norm()
    }

    pub fn angle(&self, idx: usize) -> f64 {
        self.voltages[idx].arg()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.voltages.iter().map(|v| v.norm()).collect()
    }

    /// Lowest voltage magnitude; ties go to the lowest bus id.
    pub fn min_voltage(&self) -> (BusId, f64) {
        self.extreme(|a, b| a < b)
    }

    /// Highest voltage magnitude; ties go to the lowest bus id.
    pub fn max_voltage(&self) -> (BusId, f64) {
        self.extreme(|a, b| a > b)
    }

    fn extreme(&self, better: impl Fn(f64, f64) -> bool) -> (BusId, f64) {
        let mut best = (self.bus_ids[0], self.voltages[0].norm());
        for (id, v) in self.bus_ids.iter().zip(&self.voltages).skip(1) {
            let m = v.norm();
            if better(m, best.1) || (m == best.1 && *id < best.0) {
                best = (*id, m);
            }
        }
        best
    }

    /// Σ_k (V_k − V_sp)² over all buses.
    pub fn voltage_profile_metric(&self, v_sp: f64) -> f64 {
        voltage_profile_metric(&self.magnitudes(), v_sp)
    }

    /// Active losses from branch currents, |I|²·R summed over segments.
    pub fn losses_kw(&self) -> f64 {
        self.losses_kw
    }

    /// Net injected current (p.u.) at a bus: conj(S/V).
    pub fn current_injection_pu(&self, idx: usize, s_base_kw: f64) -> Complex64 {
        (self.injections_kw[idx] / s_base_kw / self.voltages[idx]).conj()
    }
}

pub fn voltage_profile_metric(magnitudes: &[f64], v_sp: f64) -> f64 {
    magnitudes.iter().map(|v| (v - v_sp).powi(2)).sum()
}

pub fn min_voltage(sol: &VoltageSolution) -> (BusId, f64) {
    sol.min_voltage()
}

/// Calculated complex power injections S_k = V_k · conj(Σ_m Y_km V_m), p.u.
pub fn calculated_power(model: &NetworkModel, voltages: &[Complex64]) -> Vec<Complex64> {
    let y = model.admittance();
    (0..model.len())
        .map(|k| {
            let mut current = y.get(k, k) * voltages[k];
            for &(m, _) in model.neighbors(k) {
                current += y.get(k, m) * voltages[m];
            }
            voltages[k] * current.conj()
        })
        .collect()
}

/// Dense Jacobian over the non-slack buses (in bus order, slack removed).
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub bus_ids: Vec<BusId>,
    pub h: Vec<Vec<f64>>,
    pub n: Vec<Vec<f64>>,
    pub j: Vec<Vec<f64>>,
    pub l: Vec<Vec<f64>>,
}

type Block = [[f64; 2]; 2];

/// Diagonal block for bus k given its calculated injection (p.u.).
fn diagonal_block(model: &NetworkModel, k: usize, vk: Complex64, sk: Complex64) -> Block {
    let ykk = model.admittance().get(k, k);
    let v2 = vk.norm_sqr();
    [
        [-sk.im - ykk.im * v2, sk.re + ykk.re * v2],
        [sk.re - ykk.re * v2, sk.im - ykk.im * v2],
    ]
}

/// Off-diagonal block ∂(P_k, Q_k)/∂(θ_m, V_m/V_m).
fn coupling_block(model: &NetworkModel, k: usize, m: usize, vk: Complex64, vm: Complex64) -> Block {
    let ykm = model.admittance().get(k, m);
    let (g, b) = (ykm.re, ykm.im);
    let t = vk.arg() - vm.arg();
    let vv = vk.norm() * vm.norm();
    let a = vv * (g * t.sin() - b * t.cos());
    let c = vv * (g * t.cos() + b * t.sin());
    [[a, c], [-c, a]]
}

pub fn jacobian(model: &NetworkModel, voltages: &[Complex64]) -> Jacobian {
    let head = model.head_index();
    let keep: Vec<usize> = (0..model.len()).filter(|&k| k != head).collect();
    let pos = |k: usize| keep.iter().position(|&x| x == k);
    let dim = keep.len();
    let mut jac = Jacobian {
        bus_ids: keep.iter().map(|&k| model.buses[k].id).collect(),
        h: vec![vec![0.0; dim]; dim],
        n: vec![vec![0.0; dim]; dim],
        j: vec![vec![0.0; dim]; dim],
        l: vec![vec![0.0; dim]; dim],
    };
    let s = calculated_power(model, voltages);
    for (r, &k) in keep.iter().enumerate() {
        let mut put = |c: usize, blk: Block| {
            jac.h[r][c] = blk[0][0];
            jac.n[r][c] = blk[0][1];
            jac.j[r][c] = blk[1][0];
            jac.l[r][c] = blk[1][1];
        };
        put(r, diagonal_block(model, k, voltages[k], s[k]));
        for &(m, _) in model.neighbors(k) {
            if let Some(c) = pos(m) {
                put(c, coupling_block(model, k, m, voltages[k], voltages[m]));
            }
        }
    }
    jac
}

fn inv2(a: &Block) -> Option<Block> {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let scale = a.iter().flatten().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if !det.is_finite() || det.abs() <= 1e-14 * scale * scale {
        return None;
    }
    Some([
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ])
}

fn mul(a: &Block, b: &Block) -> Block {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn mulv(a: &Block, v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

/// Breadth-first order from the slack and the parent of every bus.
fn tree_order(model: &NetworkModel) -> (Vec<usize>, Vec<usize>) {
    let head = model.head_index();
    let mut parent = vec![usize::MAX; model.len()];
    parent[head] = head;
    let mut order = Vec::with_capacity(model.len());
    let mut queue = VecDeque::from([head]);
    while let Some(k) = queue.pop_front() {
        order.push(k);
        for &(m, _) in model.neighbors(k) {
            if parent[m] == usize::MAX {
                parent[m] = k;
                queue.push_back(m);
            }
        }
    }
    (order, parent)
}

pub fn solve(model: &NetworkModel, injections_kw: &[Complex64]) -> Result<VoltageSolution> {
    solve_with(model, injections_kw, SolverOptions::default())
}

pub fn solve_with(
    model: &NetworkModel,
    injections_kw: &[Complex64],
    opts: SolverOptions,
) -> Result<VoltageSolution> {
    let n = model.len();
    if injections_kw.len() != n {
        return Err(Error::Data(format!(
            "{} injections given for {} buses",
            injections_kw.len(),
            n
        )));
    }
    let head = model.head_index();
    let s_base = model.base.s_base_kw();
    let spec: Vec<Complex64> = injections_kw.iter().map(|s| s / s_base).collect();
    let (order, parent) = tree_order(model);

    let mut v = vec![Complex64::new(1.0, 0.0); n];
    let mut diag = vec![[[0.0; 2]; 2]; n];
    let mut dinv = vec![[[0.0; 2]; 2]; n];
    let mut rhs = vec![[0.0; 2]; n];
    let mut up = vec![[[0.0; 2]; 2]; n];
    let mut x = vec![[0.0; 2]; n];

    let mut iterations = 0;
    loop {
        let calc = calculated_power(model, &v);
        let mut worst = 0.0f64;
        for k in 0..n {
            if k == head {
                continue;
            }
            let d = spec[k] - calc[k];
            rhs[k] = [d.re, d.im];
            worst = worst.max(d.re.abs()).max(d.im.abs());
        }
        if !worst.is_finite() {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: worst,
            });
        }
        if worst <= opts.tolerance {
            return Ok(finish(model, v, injections_kw, calc[head] * s_base, iterations, worst));
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NonConvergence {
                iterations,
                mismatch: worst,
            });
        }
        iterations += 1;

        for k in 0..n {
            if k != head {
                diag[k] = diagonal_block(model, k, v[k], calc[k]);
            }
        }
        // leaves first
        for &k in order.iter().rev() {
            if k == head {
                continue;
            }
            let inv = inv2(&diag[k]).ok_or(Error::NonConvergence {
                iterations,
                mismatch: worst,
            })?;
            dinv[k] = inv;
            let p = parent[k];
            up[k] = coupling_block(model, k, p, v[k], v[p]);
            if p != head {
                let down = coupling_block(model, p, k, v[p], v[k]);
                let f = mul(&down, &inv);
                let schur = mul(&f, &up[k]);
                for i in 0..2 {
                    for j in 0..2 {
                        diag[p][i][j] -= schur[i][j];
                    }
                }
                let fr = mulv(&f, rhs[k]);
                rhs[p][0] -= fr[0];
                rhs[p][1] -= fr[1];
            }
        }
        x[head] = [0.0, 0.0];
        for &k in &order {
            if k == head {
                continue;
            }
            let c = mulv(&up[k], x[parent[k]]);
            x[k] = mulv(&dinv[k], [rhs[k][0] - c[0], rhs[k][1] - c[1]]);
        }
        for k in 0..n {
            if k == head {
                continue;
            }
            let mag = v[k].norm() * (1.0 + x[k][1]);
            let ang = v[k].arg() + x[k][0];
            if !(mag.is_finite() && mag > 0.0) {
                return Err(Error::NonConvergence {
                    iterations,
                    mismatch: worst,
                });
            }
            v[k] = Complex64::from_polar(mag, ang);
        }
    }
}

fn finish(
    model: &NetworkModel,
    voltages: Vec<Complex64>,
    injections_kw: &[Complex64],
    slack_kw: Complex64,
    iterations: usize,
    mismatch: f64,
) -> VoltageSolution {
    let s_base = model.base.s_base_kw();
    let losses_pu: f64 = model
        .segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let z = model.segment_z_pu(s);
            let i = model.index_of(seg.from).unwrap();
            let j = model.index_of(seg.to).unwrap();
            let current = (voltages[i] - voltages[j]) / z;
            current.norm_sqr() * z.re
        })
        .sum();
    let mut injections = injections_kw.to_vec();
    injections[model.head_index()] = slack_kw;
    VoltageSolution {
        bus_ids: model.buses.iter().map(|b| b.id).collect(),
        voltages,
        injections_kw: injections,
        slack_injection_kw: slack_kw,
        iterations,
        max_mismatch: mismatch,
        losses_kw: losses_pu * s_base,
    }
}
