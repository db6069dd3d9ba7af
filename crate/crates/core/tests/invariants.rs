//! Properties every solved dispatch must satisfy, on randomized small
//! feeders with a generator, a battery and a shiftable load.

mod common;

use common::opf::{device_instance as instance, device_violations, STEPS};
use gridvolt::opf::{solve_iterative, ClarabelBackend, VsMode};
use gridvolt::vsupport::{active_region, Region};
use proptest::prelude::*;

fn capability() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["triangular", "rectangular", "semicircle"])
}

fn scheme() -> impl Strategy<Value = VsMode> {
    prop::sample::select(vec![VsMode::None, VsMode::Passive, VsMode::Active])
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn dispatch_respects_device_limits(
        cap in capability(),
        mode in scheme(),
        rating in 0.3f64..1.2,
        avail in prop::collection::vec(0.0f64..1.0, STEPS),
        load in 0.05f64..0.3,
        r in 0.005f64..0.03,
    ) {
        let inst = instance(cap, rating, &avail, load, r);
        let out = solve_iterative(&inst.ctx(mode), &ClarabelBackend::default()).unwrap();
        let bad = device_violations(&inst, &out.solution);
        prop_assert!(bad.is_empty(), "{}", bad.join("; "));
    }

    /// Light generation keeps the uncontrolled point inside the limits, so
    /// the slacks must come out zero.
    #[test]
    fn slacks_vanish_when_limits_can_be_met(
        cap in capability(),
        mode in scheme(),
        avail in prop::collection::vec(0.0f64..1.0, STEPS),
        load in 0.05f64..0.2,
    ) {
        let inst = instance(cap, 0.2, &avail, load, 0.01);
        let out = solve_iterative(&inst.ctx(mode), &ClarabelBackend::default()).unwrap();
        prop_assert!(out.solution.slack_v <= 1e-6, "s_V = {}", out.solution.slack_v);
        prop_assert!(out.solution.slack_i <= 1e-6, "s_I = {}", out.solution.slack_i);
    }

    #[test]
    fn regions_partition_off_the_boundary(
        e_q in -5.0f64..5.0,
        v_m in 0.9f64..1.1,
        v_set in 0.95f64..1.05,
        eps in 0.0f64..0.02,
    ) {
        let dv = v_m - v_set;
        prop_assume!(e_q.abs() > 1e-9 && (dv.abs() - eps).abs() > 1e-9);
        let in_a1 = e_q <= 0.0 && dv >= -eps;
        let in_a2 = e_q >= 0.0 && dv <= eps;
        let in_a3 = e_q < 0.0 && dv < -eps;
        let in_a4 = e_q > 0.0 && dv > eps;
        let hits = [in_a1, in_a2, in_a3, in_a4].iter().filter(|&&b| b).count();
        prop_assert_eq!(hits, 1);
        let expected = [Region::A1, Region::A2, Region::A3, Region::A4][[in_a1, in_a2, in_a3, in_a4].iter().position(|&b| b).unwrap()];
        prop_assert_eq!(active_region(e_q, v_m, v_set, eps), expected);
    }
}
