use gridvolt::der::{bess_step, capability_bounds, CapabilityMode, DgKind, DgUnit, Fleet};
use proptest::prelude::*;

fn unit(mode: CapabilityMode, rating: f64, oversize: f64, cos: f64) -> DgUnit {
    DgUnit {
        name: "g".into(),
        bus: 1,
        kind: DgKind::Pv,
        p_rating: rating,
        s_inv: rating * oversize,
        mode,
        cos_phi_max: cos,
        profile: "pv".into(),
        p_min_profile: None,
    }
}

proptest! {
    #[test]
    fn capability_sets_match_their_geometry(
        rating in 0.1f64..2.0,
        oversize in 1.0f64..1.3,
        cos in 0.8f64..1.0,
        frac in 0.0f64..1.0,
    ) {
        let p = frac * rating;
        let tan = (1.0 - cos * cos).sqrt() / cos;
        let tri = capability_bounds(&unit(CapabilityMode::Triangular, rating, oversize, cos), p).unwrap();
        let rect = capability_bounds(&unit(CapabilityMode::Rectangular, rating, oversize, cos), p).unwrap();
        let semi = capability_bounds(&unit(CapabilityMode::Semicircle, rating, oversize, cos), p).unwrap();
        prop_assert!((tri.q_max() - tan * p).abs() < 1e-12);
        prop_assert!((rect.q_max() - tan * rating).abs() < 1e-12);
        let s = rating * oversize;
        prop_assert!((semi.q_max() - (s * s - p * p).sqrt()).abs() < 1e-12);
        for set in [tri, rect, semi] {
            prop_assert!((set.q_min() + set.q_max()).abs() < 1e-12, "sets are symmetric");
            prop_assert!(set.contains(set.q_max(), 1e-9) && set.contains(set.q_min(), 1e-9));
            prop_assert!(!set.contains(set.q_max() + 1e-6, 1e-9));
        }
        prop_assert!(tri.q_max() <= rect.q_max() + 1e-12);
        let u = unit(CapabilityMode::Semicircle, rating, oversize, cos);
        if u.regions_nest() {
            prop_assert!(rect.q_max() <= semi.q_max() + 1e-12);
        }
    }

    #[test]
    fn charging_then_discharging_loses_energy(
        e0 in 0.0f64..1.0,
        p in 0.0f64..0.5,
        eta in 0.8f64..1.0,
    ) {
        let up = bess_step(e0, p, 0.0, eta, 0.25);
        let down = bess_step(up, 0.0, p, eta, 0.25);
        prop_assert!(down <= e0 + 1e-12);
        prop_assert!((up - e0 - eta * p * 0.25).abs() < 1e-12);
    }
}

#[test]
fn generation_above_the_inverter_is_rejected() {
    let u = unit(CapabilityMode::Triangular, 1.0, 1.1, 0.9);
    assert!(capability_bounds(&u, 1.2).is_err());
    assert!(capability_bounds(&u, -0.1).is_err());
}

#[test]
fn default_oversize_does_not_nest_regions() {
    let u = unit(CapabilityMode::Rectangular, 1.0, 1.1, 0.9);
    assert!(!u.regions_nest());
    assert!(unit(CapabilityMode::Rectangular, 1.0, 1.12, 0.9).regions_nest());
}

#[test]
fn fleet_files_fail_closed() {
    let unknown = r#"{"dg": [{"name": "g", "bus": 1, "kind": "pv", "rating_mva": 1, "capability": "tri", "profile": "pv", "extra": 1}]}"#;
    assert!(Fleet::from_json_str(unknown, 1.0).is_err());
    let bad_soc = r#"{"bess": [{"name": "b", "bus": 1, "capacity_kwh": 100, "soc_min": 0.9, "soc_max": 0.1,
        "e_start_kwh": 50, "p_max_kw": 10, "s_max_kva": 12, "efficiency": 0.9}]}"#;
    assert!(Fleet::from_json_str(bad_soc, 1.0).is_err());
    let ok = r#"{"controllable_loads": [{"name": "c", "bus": 1, "p_kw": 20, "profile": "flat", "shift_kw": 5}]}"#;
    let f = Fleet::from_json_str(ok, 2.0).unwrap();
    assert!((f.loads[0].p_peak - 0.01).abs() < 1e-12);
    assert!((f.loads[0].p_shift - 0.0025).abs() < 1e-12);
}
