mod common;

use comvr::topology::extract_main_body;

use common::*;

fn check(seed: u64, cases: usize, max_n: usize, coarse: bool) -> usize {
    let mut r = rng(seed);
    let mut ties = 0;
    for case in 0..cases {
        let n = 2 + case % (max_n - 1);
        let f = random_feeder(&mut r, n, coarse);
        let t = tree(&f.file);
        let (chain, coords, all) = brute_main_body(&t);
        let body = extract_main_body(&f.model());
        assert_eq!(body.chain, chain, "case {case}");
        for (a, b) in body.coords.iter().zip(&coords) {
            assert!((a - b).abs() < 1e-9);
        }
        for (id, c) in all {
            assert!((body.coordinate_of(id).unwrap() - c).abs() < 1e-9, "case {case} bus {id}");
        }
        // count cases where another leaf was as long as the chosen one
        let leaves = (0..t.ids.len()).filter(|&k| k != t.head && t.children[k].is_empty()).count();
        if leaves > 1 {
            let mut d = vec![0.0; t.ids.len()];
            for &k in &t.order {
                if let Some(p) = t.parent[k] {
                    d[k] = d[p] + t.z_ohm[k].norm();
                }
            }
            let best = *coords.last().unwrap();
            let n_best = (0..t.ids.len())
                .filter(|&k| k != t.head && t.children[k].is_empty())
                .filter(|&k| (d[k] - best).abs() < 1e-9 * best.max(1.0))
                .count();
            if n_best > 1 {
                ties += 1;
            }
        }
    }
    ties
}

#[test]
fn dfs_matches_brute_force() {
    check(21, 500, 12, false);
}

#[test]
fn dfs_matches_brute_force_with_ties() {
    let ties = check(22, 500, 12, true);
    assert!(ties > 50, "only {ties} tie cases generated");
}
