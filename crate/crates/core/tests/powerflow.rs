mod common;

use comvr::campaign::find_critical_loading;
use comvr::fixtures::{rhodes_model, TWO_BUS_JSON};
use comvr::network::NetworkModel;
use comvr::powerflow::{jacobian, solve};
use num_complex::Complex64;

use common::*;

fn oracle_order(t: &Tree, model: &NetworkModel) -> Vec<usize> {
    t.ids.iter().map(|&id| model.index_of(id).unwrap()).collect()
}

#[test]
fn newton_matches_sweep_on_random_feeders() {
    let mut r = rng(11);
    for case in 0..200 {
        let n = 3 + case % 8;
        let f = random_feeder(&mut r, n, false);
        let model = f.model();
        let t = tree(&f.file);
        let map = oracle_order(&t, &model);
        let inj = f.injections_for(&model);
        let inj_oracle: Vec<Complex64> = map.iter().map(|&k| inj[k]).collect();
        let expected = sweep(&t, &inj_oracle).expect("sweep converges");
        let sol = solve(&model, &inj).expect("newton converges");
        for (o, &k) in map.iter().enumerate() {
            let d = (sol.voltages[k] - expected[o]).norm();
            assert!(d < 1e-6, "case {case} bus {}: {d}", t.ids[o]);
        }
    }
}

#[test]
fn admittance_matches_records() {
    let mut r = rng(3);
    for _ in 0..50 {
        let f = random_feeder(&mut r, 6, false);
        let model = f.model();
        let t = tree(&f.file);
        let map = oracle_order(&t, &model);
        let y = admittance(&t);
        for a in 0..t.ids.len() {
            for b in 0..t.ids.len() {
                assert!((model.admittance().get(map[a], map[b]) - y[a][b]).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let mut r = rng(5);
    for case in 0..60 {
        let f = random_feeder(&mut r, 3 + case % 8, false);
        let model = f.model();
        let t = tree(&f.file);
        let map = oracle_order(&t, &model);
        let sol = solve(&model, &f.injections_for(&model)).unwrap();
        let v_oracle: Vec<Complex64> = map.iter().map(|&k| sol.voltages[k]).collect();
        let fd = fd_jacobian(&t, &v_oracle, 1e-6);
        let jac = jacobian(&model, &sol.voltages);
        let keep: Vec<usize> = (0..t.ids.len()).filter(|&k| k != t.head).collect();
        let row_of = |o: usize| jac.bus_ids.iter().position(|&id| id == t.ids[o]).unwrap();
        for (block, (mine, name)) in [(&jac.h, "H"), (&jac.n, "N"), (&jac.j, "J"), (&jac.l, "L")]
            .into_iter()
            .enumerate()
        {
            for (r_o, &ko) in keep.iter().enumerate() {
                for (c_o, &mo) in keep.iter().enumerate() {
                    let a = mine[row_of(ko)][row_of(mo)];
                    let b = fd[block][r_o][c_o];
                    assert!(
                        (a - b).abs() <= 1e-5 * b.abs().max(1.0),
                        "case {case} {name}[{}][{}]: {a} vs {b}",
                        t.ids[ko],
                        t.ids[mo]
                    );
                }
            }
        }
    }
}

#[test]
fn two_bus_closed_form() {
    let model = NetworkModel::from_json(TWO_BUS_JSON).unwrap();
    let z = z_base();
    for scale in [1.0, 50.0, 200.0, 400.0] {
        let inj = model.scaled_injections(scale);
        let sol = solve(&model, &inj).unwrap();
        let load = -inj[1] / s_base_kw();
        let expected = two_bus_voltage(load.re, load.im, 0.1 / z, 0.1 / z);
        assert!((sol.magnitude(1) - expected).abs() < 1e-9, "scale {scale}");
    }
}

#[test]
fn two_bus_critical_loading_matches_closed_form() {
    let model = NetworkModel::from_json(TWO_BUS_JSON).unwrap();
    let base: Vec<Complex64> = model.buses.iter().map(|b| b.base_load).collect();
    let crit = find_critical_loading(&model, &base, 0.90).unwrap();
    let l = base[1] / s_base_kw();
    let z = 0.1 / z_base();
    let s = two_bus_critical_scale(l.re, l.im, z, z, 0.90);
    assert!((crit.min_v - 0.90).abs() <= 5e-4);
    // the band on voltage maps to a band on the scale
    let v_at = |sc: f64| two_bus_voltage(sc * l.re, sc * l.im, z, z);
    assert!((v_at(crit.scale) - 0.90).abs() <= 5e-4);
    assert!((crit.scale - s).abs() / s < 0.02, "{} vs {s}", crit.scale);
}

#[test]
fn doubled_impedance_lowers_critical_scale() {
    let model = rhodes_model(comvr::fixtures::RHODES_MAIN_SEGMENT_KM).unwrap();
    let base: Vec<Complex64> = model.buses.iter().map(|b| b.base_load).collect();
    let a = find_critical_loading(&model, &base, 0.90).unwrap();
    let b = find_critical_loading(&model.with_impedance_scaled(2.0).unwrap(), &base, 0.90).unwrap();
    assert!(b.scale < a.scale);
}

#[test]
fn overloaded_feeder_reports_last_feasible_scale() {
    let model = NetworkModel::from_json(TWO_BUS_JSON).unwrap();
    let base: Vec<Complex64> = model.buses.iter().map(|b| b.base_load).collect();
    // the nose of the PV curve sits above 0.5 p.u., so 0.3 is unreachable
    let crit = find_critical_loading(&model, &base, 0.30).unwrap();
    assert!(crit.diverged);
    assert!(crit.min_v > 0.30);
    assert!(solve(&model, &model.scaled_injections(crit.scale)).is_ok());
}
