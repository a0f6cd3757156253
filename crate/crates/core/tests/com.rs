mod common;

use comvr::com::{compute_all_centers, compute_center, estimate_bus_current, estimate_chain_currents, BusPowers, CenterOptions, MassKind};
use comvr::fixtures::{build_rhodes_fixture, TWO_BUS_JSON, Y_NETWORK_JSON};
use comvr::network::NetworkModel;
use comvr::powerflow::{solve, VoltageSolution};
use comvr::topology::{extract_main_body, MainBody};
use num_complex::Complex64;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn hand_examples() {
    let c = compute_center(&[1.0, 1.0], &[0.2, 0.6], MassKind::Load).unwrap();
    assert!(rel(c.g, 0.4) <= 1e-12);
    assert!(rel(c.delta_g, 0.2) <= 1e-12);
    let c = compute_center(&[3.0, 1.0], &[0.0, 0.4], MassKind::Load).unwrap();
    assert!(rel(c.g, 0.1) <= 1e-12);
    assert!(rel(c.delta_g, 0.03f64.sqrt()) <= 1e-12);
    let c = compute_center(&[7.5], &[1.3], MassKind::Generation).unwrap();
    assert_eq!((c.g, c.delta_g), (1.3, 0.0));
}

fn weighted() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(0.001f64..10.0, n),
            prop::collection::vec(0.0f64..50.0, n),
        )
    })
}

proptest! {
    #[test]
    fn scale_invariance((w, c) in weighted(), k in 0.01f64..1000.0) {
        let a = compute_center(&w, &c, MassKind::Load).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * k).collect();
        let b = compute_center(&scaled, &c, MassKind::Load).unwrap();
        prop_assert!((a.g - b.g).abs() <= 1e-12 * a.g.abs().max(1e-12) + 1e-12);
        prop_assert!((a.delta_g - b.delta_g).abs() <= 1e-12 * a.delta_g.max(1.0) * 10.0);
    }

    #[test]
    fn inside_convex_hull((w, c) in weighted()) {
        let a = compute_center(&w, &c, MassKind::Net).unwrap();
        let lo = c.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(lo <= a.g && a.g <= hi);
        prop_assert!(a.delta_g >= 0.0);
    }

    #[test]
    fn translation_covariance((w, c) in weighted(), shift in -20.0f64..20.0) {
        let a = compute_center(&w, &c, MassKind::Load).unwrap();
        let moved: Vec<f64> = c.iter().map(|x| x + shift).collect();
        let b = compute_center(&w, &moved, MassKind::Load).unwrap();
        prop_assert!((b.g - (a.g + shift)).abs() <= 1e-12 * (a.g.abs() + shift.abs()).max(1.0) * 10.0);
        prop_assert!((a.delta_g - b.delta_g).abs() <= 1e-12 * a.delta_g.max(1.0) * 100.0);
    }

    #[test]
    fn zero_spread_iff_single_support((w, c) in weighted(), zero_mask in prop::collection::vec(any::<bool>(), 12)) {
        let mut w = w;
        for (x, z) in w.iter_mut().zip(&zero_mask) {
            if *z { *x = 0.0; }
        }
        let support: Vec<f64> = w.iter().zip(&c).filter(|(x, _)| **x > 0.0).map(|(_, c)| *c).collect();
        match compute_center(&w, &c, MassKind::Load) {
            Err(_) => prop_assert!(support.is_empty()),
            Ok(a) => {
                let single = support.iter().all(|x| *x == support[0]);
                prop_assert_eq!(a.delta_g == 0.0, single);
            }
        }
    }
}

#[test]
fn estimate_flat_and_pass_through() {
    let one = Complex64::new(1.0, 0.0);
    let z = Complex64::new(0.01, 0.02);
    assert_eq!(estimate_bus_current(one, one, z, Some((one, z))).unwrap(), Complex64::default());
    let vk = Complex64::new(0.97, -0.01);
    let i = Complex64::new(0.3, -0.1);
    let z2 = Complex64::new(0.02, 0.015);
    let got = estimate_bus_current(vk + i * z, vk, z, Some((vk - i * z2, z2))).unwrap();
    assert!(got.norm() < 1e-12);
    assert!(estimate_bus_current(one, one, Complex64::default(), None).is_err());
}

/// Every converged fixture case used for the current-reconstruction check.
pub fn fixture_cases() -> Vec<(NetworkModel, MainBody, VoltageSolution)> {
    let mut cases = Vec::new();
    for json in [TWO_BUS_JSON, Y_NETWORK_JSON] {
        let m = NetworkModel::from_json(json).unwrap();
        let body = extract_main_body(&m);
        for scale in [0.5, 1.0, 3.0] {
            let sol = solve(&m, &m.scaled_injections(scale)).unwrap();
            cases.push((m.clone(), body.clone(), sol));
        }
    }
    let (m, fleet) = build_rhodes_fixture().unwrap();
    let body = extract_main_body(&m);
    for scale in [0.2, 0.4, 0.5] {
        let mut inj = m.scaled_injections(scale);
        // some generation on the line too
        for a in fleet.iter().filter(|a| a.kind.is_generation()) {
            inj[m.index_of(a.bus).unwrap()] += Complex64::new(0.5 * a.rated_kw, 0.0);
        }
        let sol = solve(&m, &inj).unwrap();
        cases.push((m.clone(), body.clone(), sol));
    }
    cases
}

#[test]
fn chain_estimates_match_bus_injections() {
    for (m, body, sol) in fixture_cases() {
        let s_base = m.base.s_base_kw();
        let est = estimate_chain_currents(&m, &body, &sol).unwrap();
        let mut total = Complex64::default();
        for (bus, i) in &est {
            total += i;
            let pos = body.chain_position(*bus).unwrap();
            if body.branches[pos].is_empty() {
                let k = m.index_of(*bus).unwrap();
                let exact = (sol.injections_kw[k] / s_base / sol.voltages[k]).conj();
                assert!((i - exact).norm() < 1e-6, "bus {bus}: {i} vs {exact}");
            }
        }
        let h = m.head_index();
        let head = (sol.injections_kw[h] / s_base / sol.voltages[h]).conj();
        assert!((total + head).norm() < 1e-5, "{total} vs {head}");
    }
}

fn powers(m: &NetworkModel, load_scale: f64, gen: &[(u32, f64)]) -> BusPowers {
    let mut gen_kw = vec![Complex64::default(); m.len()];
    for (bus, p) in gen {
        gen_kw[m.index_of(*bus).unwrap()] += Complex64::new(*p, 0.0);
    }
    BusPowers {
        load_kw: m.buses.iter().map(|b| b.base_load * load_scale).collect(),
        gen_kw,
    }
}

#[test]
fn center_cases_on_y_network() {
    let m = NetworkModel::from_json(Y_NETWORK_JSON).unwrap();
    let body = extract_main_body(&m);
    let solve_with = |p: &BusPowers| solve(&m, &p.net_injections()).unwrap();

    // no DG online: g_G absent, g_GL = g_L
    let p = powers(&m, 1.0, &[]);
    let c = compute_all_centers(&m, &body, &solve_with(&p), &p, None, CenterOptions::default()).unwrap();
    assert!(c.g_g.is_none());
    let (l, gl) = (c.g_l.unwrap(), c.g_gl.unwrap());
    assert!((l.g - gl.g).abs() < 1e-12 && (l.delta_g - gl.delta_g).abs() < 1e-12);

    // generation colocated with every load, same complex power: net zero
    let p = BusPowers {
        load_kw: m.buses.iter().map(|b| b.base_load).collect(),
        gen_kw: m.buses.iter().map(|b| b.base_load).collect(),
    };
    let c = compute_all_centers(&m, &body, &solve_with(&p), &p, None, CenterOptions::default()).unwrap();
    assert!(c.g_gl.is_none());
    assert!((c.g_g.unwrap().g - c.g_l.unwrap().g).abs() < 1e-12);

    // generation near the head, load far away: g_G < g_L
    let p = powers(&m, 1.0, &[(1, 300.0)]);
    let c = compute_all_centers(&m, &body, &solve_with(&p), &p, None, CenterOptions::default()).unwrap();
    assert!(c.g_g.unwrap().g < c.g_l.unwrap().g);
}
