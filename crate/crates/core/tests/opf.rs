mod common;

use common::nr::newton_raphson;
use common::opf::{chain, grid_search, inputs, pv_fleet, three_bus, Instance, C_LOSS, KWH, TAN_PHI};
use gridvolt::opf::{solve_iterative, ClarabelBackend, OuterStatus, VsMode};
use gridvolt::powerflow::InjectionSet;

#[test]
fn three_bus_objective_matches_grid_search() {
    let backend = ClarabelBackend::default();
    let s_inv = 1.1_f64;
    let cases: [(&str, Box<dyn Fn(f64) -> (f64, f64)>); 2] = [
        ("triangular", Box::new(|p| (-TAN_PHI * p, TAN_PHI * p))),
        ("semicircle", Box::new(move |p: f64| {
            let h = (s_inv * s_inv - p * p).max(0.0).sqrt();
            (-h, h)
        })),
    ];
    for (cap, q_range) in cases {
        let inst = three_bus(cap);
        assert!((inst.fleet.dg[0].tan_phi() - TAN_PHI).abs() < 1e-12);
        let out = solve_iterative(&inst.ctx(VsMode::None), &backend).unwrap();
        assert_eq!(out.report.status, OuterStatus::Converged, "{cap}");
        let grid = grid_search(&inst, q_range, 1e-3);
        let obj = out.solution.objective;
        let rel = (obj - grid.cost).abs() / grid.cost;
        let d = &out.solution.dispatch[0];
        assert!(
            rel <= 0.02,
            "{cap}: OPF {obj:.4} (P {:.4}, Q {:.4}) vs grid {:.4} (P {:.3}, Q {:.3})",
            d.dg_p[0],
            d.dg_q[0],
            grid.cost,
            grid.p,
            grid.q
        );
        assert!(out.solution.slack_v <= 1e-6 && out.solution.slack_i <= 1e-6);
    }
}

#[test]
fn cost_rows_sum_to_totals() {
    let inst = three_bus("triangular");
    let backend = ClarabelBackend::default();
    for mode in [VsMode::None, VsMode::Passive, VsMode::Active] {
        let out = solve_iterative(&inst.ctx(mode), &backend).unwrap();
        for table in [&out.solution.costs, &out.exact.costs] {
            for r in &table.rows {
                let vs = match mode {
                    VsMode::None => 0.0,
                    VsMode::Passive => r.vs_passive,
                    VsMode::Active => r.vs_active,
                };
                let sum = r.curtailment + r.reactive + r.losses + vs + r.penalty;
                assert!((sum - r.total).abs() < 1e-9, "{mode:?}: {sum} vs {}", r.total);
            }
            let t = table.totals();
            let sum: f64 = table.rows.iter().map(|r| r.total).sum();
            assert!((t.total - sum).abs() < 1e-9);
        }
    }
}

#[test]
fn uncongested_feeder_needs_no_control() {
    let net = chain(3, 0.01, 0.01);
    let fleet = pv_fleet(2, 0.2, "triangular");
    let load = [(0.0, 0.0), (0.1, 0.03), (0.1, 0.03)];
    let inp = inputs(&net, &fleet, 2, &load, &[vec![0.15], vec![0.1]], 1.0);
    let inst = Instance::new(net, fleet, inp);
    let out = solve_iterative(&inst.ctx(VsMode::None), &ClarabelBackend::default()).unwrap();
    for (t, d) in out.solution.dispatch.iter().enumerate() {
        assert!((d.dg_p[0] - inst.inputs.dg_avail[t][0]).abs() < 1e-6, "curtailed at step {t}");
    }
    assert!(out.solution.slack_v <= 1e-6);
    assert!(out.solution.big_m_binding.is_empty());
}

fn benchmark_network() -> gridvolt::network::NetworkModel {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/benchmark/network.json");
    gridvolt::network::load_network(&path).unwrap()
}

/// With no controllable units the tap is the only decision. Heavy load
/// pushes the untapped feeder below the band, so the solver must pick one of
/// the enumerated in-band positions. Within an outer iteration currents are
/// fixed by the linearization point, so losses do not rank the in-band taps.
#[test]
fn tap_choice_is_in_band_by_enumeration() {
    let net = benchmark_network();
    let fleet = gridvolt::der::Fleet::empty();
    for scale in [1.0, 1.15, 1.3] {
        let load: Vec<(f64, f64)> =
            net.buses().iter().map(|b| b.load.as_ref().map_or((0.0, 0.0), |l| (scale * l.p, scale * l.q))).collect();
        let inp = inputs(&net, &fleet, 1, &load, &[vec![]], 1.0);
        let inst = Instance::new(net.clone(), fleet.clone(), inp);
        let out = solve_iterative(&inst.ctx(VsMode::None), &ClarabelBackend::default()).unwrap();
        let (lo, hi) = net.tap_range();
        let z = net.branch_impedances(&net.nominal_source());
        let tap_branch = net.transformer().map(|t| t.branch);
        let mut in_band = Vec::new();
        for tap in lo..=hi {
            let mut inj = InjectionSet { p: load.iter().map(|l| -l.0).collect(), q: load.iter().map(|l| -l.1).collect() };
            inj.p[0] = 0.0;
            inj.q[0] = 0.0;
            let Some(nr) = newton_raphson(&net, &inj, tap, 1e-10) else { continue };
            let v = &nr.voltages;
            let ok = (0..net.n_buses())
                .filter(|&j| net.is_distribution_bus(j))
                .all(|j| (inst.options.v_min..=inst.options.v_max).contains(&v[j].norm()));
            if !ok {
                continue;
            }
            let step = net.tap_step() * f64::from(tap);
            let loss: f64 = net
                .branches()
                .iter()
                .enumerate()
                .filter(|(_, br)| br.kind != gridvolt::network::BranchKind::Thevenin)
                .map(|(b, br)| {
                    let drop = v[br.from] - v[br.to] - if Some(b) == tap_branch { step } else { 0.0 };
                    (drop / z[b]).norm_sqr() * br.r
                })
                .sum();
            in_band.push((tap, loss * C_LOSS * KWH));
        }
        assert!(!in_band.iter().any(|(t, _)| *t == 0), "scale {scale}: the nominal tap should be out of band");
        let chosen = out.solution.dispatch[0].tap;
        let &(_, cost) = in_band
            .iter()
            .find(|(t, _)| *t == chosen)
            .unwrap_or_else(|| panic!("scale {scale}: tap {chosen} is out of band; in band: {in_band:?}"));
        let exact = out.exact.costs.totals();
        assert!(out.solution.slack_v <= 1e-6, "scale {scale}");
        assert_eq!(exact.penalty, 0.0);
        assert!((exact.losses - cost).abs() <= 1e-6 * cost, "scale {scale}: {} vs {cost}", exact.losses);
    }
}

/// Planning with the passive charge in the objective never costs more than
/// ignoring it and paying the charge afterwards.
#[test]
fn passive_awareness_never_costs_more() {
    use gridvolt::opf::MipStatus;
    let net = chain(3, 0.04, 0.03);
    let fleet = pv_fleet(2, 1.0, "semicircle");
    let load = [(0.0, 0.0), (0.3, 0.25), (0.2, 0.15)];
    let avail: Vec<Vec<f64>> = [0.0, 0.2, 0.5, 0.9, 1.0, 0.7, 0.3, 0.05].iter().map(|a| vec![*a]).collect();
    let inp = inputs(&net, &fleet, avail.len(), &load, &avail, 1.0);
    let mut inst = Instance::new(net, fleet, inp);
    for tariff in ["preset-2018", "preset-2021"] {
        inst.tariff = gridvolt::vsupport::resolve_tariff(tariff).unwrap();
        let backend = ClarabelBackend::default();
        let aware = solve_iterative(&inst.ctx(VsMode::Passive), &backend).unwrap();
        let unaware = solve_iterative(&inst.ctx(VsMode::None), &backend).unwrap();
        let a = aware.exact.costs.totals();
        let u = unaware.exact.costs.totals();
        let u_total = u.operational() + u.penalty + u.vs_passive;
        let gap = if aware.solution.status == MipStatus::Optimal { 0.0 } else { aware.solution.gap };
        assert!(
            a.total <= u_total + (1e-3 + gap) * u_total.abs().max(1.0),
            "{tariff}: aware {:.4} vs unaware {:.4}",
            a.total,
            u_total
        );
    }
}
