#![allow(dead_code)]

pub mod nr;
pub mod opf;

use gridvolt::network::{BranchSpec, BusKind, BusSpec, ImpedanceUnit, NetworkFile, NetworkModel};
use gridvolt::powerflow::InjectionSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn pu_branch(name: String, from: u32, to: u32, r: f64, x: f64) -> BranchSpec {
    BranchSpec {
        name,
        from,
        to,
        r: Some(r),
        x: Some(x),
        unit: Some(ImpedanceUnit::Pu),
        length_km: None,
        uk_percent: None,
        ur_percent: None,
        rating_mva: None,
        ampacity_ka: None,
        i_max_pu: Some(10.0),
    }
}

/// Random radial tree with `n` buses (bus 0 slack) and per-unit impedances.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> NetworkModel {
    let mut buses = vec![BusSpec { id: 0, kind: BusKind::Slack, base_kv: 20.0, load: None }];
    let mut branches = Vec::new();
    for j in 1..n {
        buses.push(BusSpec { id: j as u32, kind: BusKind::Mv, base_kv: 20.0, load: None });
        let parent = rng.random_range(0..j) as u32;
        let r = rng.random_range(0.002..0.02);
        let x = rng.random_range(0.002..0.03);
        branches.push(pu_branch(format!("b{j}"), parent, j as u32, r, x));
    }
    let file = NetworkFile {
        name: "random".into(),
        base_mva: 1.0,
        buses,
        branches,
        transformer: None,
        thevenin: None,
        measurement_bus: None,
    };
    NetworkModel::from_file(&file).unwrap()
}

/// Mixed load/generation injections, moderate magnitude.
pub fn random_injections(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> InjectionSet {
    let mut inj = InjectionSet::zeros(n);
    for j in 1..n {
        inj.p[j] = scale * rng.random_range(-1.0..0.5);
        inj.q[j] = scale * rng.random_range(-0.4..0.4);
    }
    inj
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
