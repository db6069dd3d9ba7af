mod common;

use common::nr::newton_raphson;
use common::{random_injections, random_tree, rng};
use gridvolt::network::build_topology_matrices;
use gridvolt::powerflow::{
    branch_loss, interconnection_exchange, interconnection_voltage, solve_bfs, sweep_once, InjectionSet, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn sweep_matches_newton_on_random_trees() {
    let mut r = rng(7);
    for case in 0..100 {
        let n = 2 + case % 19;
        let model = random_tree(&mut r, n);
        let inj = random_injections(&mut r, n, 0.3);
        let bfs = solve_bfs(&model, &inj, 0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let nr = newton_raphson(&model, &inj, 0, 1e-12).unwrap();
        for (a, b) in bfs.voltages.iter().zip(&nr.voltages) {
            assert!((a - b).norm() < 1e-6, "case {case}: {a} vs {b}");
        }
    }
}

#[test]
fn energy_balance_holds() {
    let mut r = rng(11);
    for _ in 0..30 {
        let model = random_tree(&mut r, 12);
        let inj = random_injections(&mut r, 12, 0.3);
        let s = solve_bfs(&model, &inj, 0, 1e-12, 200).unwrap();
        let losses: f64 = branch_loss(&s, &model).iter().sum();
        let net: f64 = inj.p[1..].iter().sum();
        assert!((s.slack_power.re + net - losses).abs() < 1e-9);
        assert!(s.branch_losses.iter().all(|&l| l >= 0.0));
    }
}

#[test]
fn converged_state_is_a_fixed_point() {
    let mut r = rng(3);
    let model = random_tree(&mut r, 15);
    let inj = random_injections(&mut r, 15, 0.3);
    let s = solve_bfs(&model, &inj, 0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let z = model.branch_impedances(&model.nominal_source());
    let (v, _) = sweep_once(&model, &inj, 0, &z, Complex64::new(1.0, 0.0), &s.voltages).unwrap();
    let change = v.iter().zip(&s.voltages).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(change < DEFAULT_TOL);
}

#[test]
fn topology_matrices_reproduce_sweep_voltages() {
    let mut r = rng(5);
    let model = random_tree(&mut r, 10);
    let inj = random_injections(&mut r, 10, 0.3);
    let s = solve_bfs(&model, &inj, 0, 1e-12, 200).unwrap();
    let t = build_topology_matrices(&model).unwrap();
    let load: Vec<Complex64> = (1..10).map(|j| -(inj.power(j) / s.voltages[j]).conj()).collect();
    let ibr = t.branch_currents(&load);
    let dv = t.voltage_drops(&ibr);
    for j in 1..10 {
        assert!((s.voltages[0] - dv[j - 1] - s.voltages[j]).norm() < 1e-10);
    }
}

#[test]
fn no_load_interconnection_voltage_is_source() {
    let mut r = rng(1);
    let model = random_tree(&mut r, 5);
    let s = solve_bfs(&model, &InjectionSet::zeros(5), 0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(interconnection_voltage(&s, &model), 1.0);
    assert_eq!(interconnection_exchange(&s, &model), Complex64::new(0.0, 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matrix_voltages_equal_branch_accumulation(seed in any::<u64>(), n in 2usize..=20) {
        let mut r = rng(seed);
        let model = random_tree(&mut r, n);
        let t = build_topology_matrices(&model).unwrap();
        let load: Vec<Complex64> = (1..n)
            .map(|_| Complex64::new(r_f(&mut r), r_f(&mut r)))
            .collect();
        let ibr = t.branch_currents(&load);
        let dv = t.voltage_drops(&ibr);
        // Direct Kirchhoff: accumulate subtree currents, then drops root-first.
        let order = model.radial_order();
        let mut sub = vec![Complex64::new(0.0, 0.0); n];
        for j in 1..n { sub[j] = load[j - 1]; }
        let mut cur = vec![Complex64::new(0.0, 0.0); model.n_branches()];
        for &b in order.branch_order.iter().rev() {
            let (p, c) = order.oriented[b];
            cur[b] = sub[c];
            let add = sub[c];
            sub[p] += add;
        }
        let mut drop = vec![Complex64::new(0.0, 0.0); n];
        for &b in &order.branch_order {
            let (p, c) = order.oriented[b];
            drop[c] = drop[p] + model.branches()[b].impedance() * cur[b];
        }
        for j in 1..n {
            prop_assert!((dv[j - 1] - drop[j]).norm() < 1e-12);
        }
        for (b, row) in t.bibc.iter().enumerate() {
            let child = order.oriented[b].1;
            for j in 1..n {
                let below = order.path_to(j).contains(&b);
                prop_assert_eq!(row[j - 1] == 1, below);
                prop_assert_eq!(t.bcbv[j - 1][b], if below { model.branches()[b].impedance() } else { Complex64::new(0.0, 0.0) });
                if j == child { prop_assert_eq!(row[j - 1], 1); }
            }
        }
    }

    #[test]
    fn sweep_and_newton_agree(seed in any::<u64>(), n in 2usize..=20) {
        let mut r = rng(seed);
        let model = random_tree(&mut r, n);
        let inj = random_injections(&mut r, n, 0.3);
        let bfs = solve_bfs(&model, &inj, 0, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let nr = newton_raphson(&model, &inj, 0, 1e-12).unwrap();
        for (a, b) in bfs.voltages.iter().zip(&nr.voltages) {
            prop_assert!((a - b).norm() < 1e-6);
        }
    }
}

fn r_f(r: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    r.random_range(-1.0..1.0)
}
