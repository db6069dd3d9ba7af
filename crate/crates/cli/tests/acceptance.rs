//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! fails if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use chrono::{Duration, NaiveDate};
use common::nr::newton_raphson;
use common::opf::{device_instance, device_violations, grid_search, three_bus, STEPS, TAN_PHI};
use common::{random_injections, random_tree, rng};
use gridvolt::opf::{solve_iterative, ClarabelBackend, MipStatus, OuterStatus, VsMode};
use gridvolt::powerflow::{solve_bfs, DEFAULT_MAX_ITER, DEFAULT_TOL};
use gridvolt::sim::{compare_capabilities, run_day, run_season, total_under, Scenario, SolveCache};
use gridvolt::vsupport::{resolve_tariff, settle_month, ComplianceStatus, IntervalRecord};
use rand::Rng;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration as Wall, Instant};

const PF_TOL: f64 = 1e-6;
const PF_CASES: usize = 100;
const PF_MAX_BUSES: usize = 20;
const PF_BUDGET: Wall = Wall::from_secs(1);
const OUTER_TOL: f64 = 1e-4;
const OUTER_MAX_ITER: usize = 10;
const DAY_BUDGET: Wall = Wall::from_secs(600);
const GRID_STEP: f64 = 1e-3;
const GRID_REL: f64 = 0.02;
const DOMINANCE_REL: f64 = 1e-3;
const INVARIANT_CASES: usize = 24;
const SLACK_TOL: f64 = 1e-6;

struct Outcome {
    id: u8,
    pass: bool,
    detail: String,
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn date(s: &str) -> NaiveDate {
    s.parse().unwrap()
}

fn pf_oracle() -> Outcome {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    let mut bfs_time = Wall::ZERO;
    let mut failures = 0;
    for case in 0..PF_CASES {
        let n = 2 + case % (PF_MAX_BUSES - 1);
        let model = random_tree(&mut r, n);
        let inj = random_injections(&mut r, n, 0.3);
        let t0 = Instant::now();
        let bfs = solve_bfs(&model, &inj, 0, DEFAULT_TOL, DEFAULT_MAX_ITER);
        bfs_time += t0.elapsed();
        match (bfs, newton_raphson(&model, &inj, 0, 1e-12)) {
            (Ok(b), Some(nr)) => {
                for (a, c) in b.voltages.iter().zip(&nr.voltages) {
                    worst = worst.max((a - c).norm());
                }
            }
            _ => failures += 1,
        }
    }
    Outcome {
        id: 1,
        pass: failures == 0 && worst <= PF_TOL && bfs_time < PF_BUDGET,
        detail: format!(
            "{PF_CASES} trees of 2..={PF_MAX_BUSES} buses, max |ΔV| {worst:.2e} pu, sweep time {:.1} ms, {failures} failed",
            bfs_time.as_secs_f64() * 1e3
        ),
    }
}

fn outer_loop(sc: &Scenario, cache: &SolveCache) -> Outcome {
    let backend = ClarabelBackend::default();
    let t0 = Instant::now();
    let day = run_day(sc, date("2018-07-15"), &backend, cache).unwrap();
    let wall = t0.elapsed();
    let r = &day.report;
    let first_below = r.mismatch.iter().position(|m| *m < OUTER_TOL).map(|k| k + 1);
    let pass = r.status == OuterStatus::Converged
        && first_below.is_some_and(|k| k <= OUTER_MAX_ITER)
        && wall < DAY_BUDGET;
    Outcome {
        id: 2,
        pass,
        detail: format!(
            "2018-07-15 passive: mismatches {:?}, below {OUTER_TOL:e} at iteration {first_below:?}, {:.0} s",
            r.mismatch.iter().map(|m| format!("{m:.1e}")).collect::<Vec<_>>(),
            wall.as_secs_f64()
        ),
    }
}

fn grid_oracle() -> Outcome {
    let inst = three_bus("triangular");
    let out = solve_iterative(&inst.ctx(VsMode::None), &ClarabelBackend::default()).unwrap();
    let grid = grid_search(&inst, |p| (-TAN_PHI * p, TAN_PHI * p), GRID_STEP);
    let obj = out.solution.objective;
    let rel = (obj - grid.cost).abs() / grid.cost;
    let d = &out.solution.dispatch[0];
    Outcome {
        id: 3,
        pass: out.report.status == OuterStatus::Converged && rel <= GRID_REL,
        detail: format!(
            "OPF {obj:.4} CHF at P {:.4}, Q {:.4}; grid {:.4} CHF at P {:.3}, Q {:.3}; rel diff {:.3}%",
            d.dg_p[0],
            d.dg_q[0],
            grid.cost,
            grid.p,
            grid.q,
            rel * 100.0
        ),
    }
}

fn dominance(sc: &Scenario, cache: &SolveCache) -> Outcome {
    let backend = ClarabelBackend::default();
    let aware = run_season(sc, &backend, cache, 1).unwrap();
    let unaware = run_season(&sc.variant(VsMode::None, None), &backend, cache, 1).unwrap();
    let mut strict_fail = Vec::new();
    let mut gap_fail = Vec::new();
    for (a, u) in aware.days.iter().zip(&unaware.days) {
        let reference = total_under(&u.costs, VsMode::Passive);
        let slack = DOMINANCE_REL * reference.abs();
        if a.costs.total > reference + slack {
            strict_fail.push(a.date);
            let gap = if a.mip_status == MipStatus::Optimal { 0.0 } else { a.gap };
            if a.costs.total > reference + slack + gap * reference.abs() {
                gap_fail.push(a.date);
            }
        }
    }
    let delta = aware.total_delta_percent.unwrap_or(f64::NAN);
    let gaps = aware.days.iter().map(|d| d.gap).fold(0.0, f64::max);
    Outcome {
        id: 4,
        pass: gap_fail.is_empty() && delta < 0.0,
        detail: format!(
            "{} days, {} distinct solves; total {:.2} vs unaware+charges {:.2} CHF (delta {delta:.2}%); \
             days above within 1e-3: {:?}; above within 1e-3 + gap: {:?}; max reported gap {gaps:.3}",
            aware.days.len(),
            aware.distinct_days,
            aware.totals.total,
            aware.reference.as_ref().map_or(f64::NAN, |r| total_under(r, VsMode::Passive)),
            strict_fail,
            gap_fail
        ),
    }
}

fn capability_ordering(cache: &SolveCache) -> Outcome {
    let sc = Scenario::load(&data("benchmark/scenario_undervoltage.json")).unwrap();
    let c = compare_capabilities(&sc, &ClarabelBackend::default(), cache, 1).unwrap();
    let semi = c.modes.iter().find(|m| m.capability == Some(gridvolt::der::CapabilityMode::Semicircle)).unwrap();
    let semi_vs = semi.totals.vs_active;
    let chain: Vec<String> = c.ordering.iter().map(|o| format!("{} {:.2} ≥ {} {:.2}", o.higher, o.higher_vs, o.lower, o.lower_vs)).collect();
    Outcome {
        id: 5,
        pass: c.ordering_holds && semi_vs < 0.0,
        detail: format!("{}; semi {semi_vs:.2} CHF; regions nest: {}", chain.join(", "), c.nested),
    }
}

fn settlement() -> Outcome {
    let t = resolve_tariff("preset-2021").unwrap().active;
    let month = |y: i32, m: u32, share: f64| -> Vec<IntervalRecord> {
        let start = NaiveDate::from_ymd_opt(y, m, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let next = start.date().checked_add_months(chrono::Months::new(1)).unwrap();
        let n = (next - start.date()).num_days() as usize * 96;
        let ok = (share * n as f64).round() as usize;
        (0..n)
            .map(|k| {
                let ts = start + Duration::minutes(15 * k as i64);
                let v_m = if k < ok { 1.0 } else { 0.97 };
                IntervalRecord::new(ts, 1.0, -0.5, v_m, 1.0, &t)
            })
            .collect()
    };
    let paid = settle_month(&month(2021, 6, 5.0 / 6.0), &t, None).unwrap();
    let neither = settle_month(&month(2021, 6, 0.75), &t, None).unwrap();
    let first = settle_month(&month(2021, 6, 0.65), &t, None).unwrap();
    let second = settle_month(&month(2021, 7, 0.65), &t, Some(&first)).unwrap();
    let pass = paid.status == ComplianceStatus::Remunerated
        && neither.status == ComplianceStatus::BelowRemuneration
        && first.status == ComplianceStatus::DemotionWarning
        && second.status == ComplianceStatus::Demoted;
    Outcome {
        id: 6,
        pass,
        detail: format!(
            "{:.2}% → {:?}, {:.2}% → {:?}, {:.2}% then {:.2}% → {:?}",
            paid.compliant_fraction * 100.0,
            paid.status,
            neither.compliant_fraction * 100.0,
            neither.status,
            first.compliant_fraction * 100.0,
            second.compliant_fraction * 100.0,
            second.status
        ),
    }
}

fn invariants() -> Outcome {
    let mut r = rng(77);
    let caps = ["triangular", "rectangular", "semicircle"];
    let modes = [VsMode::None, VsMode::Passive, VsMode::Active];
    let backend = ClarabelBackend::default();
    let mut problems = Vec::new();
    for case in 0..INVARIANT_CASES {
        let cap = caps[case % 3];
        let mode = modes[(case / 3) % 3];
        let avail: Vec<f64> = (0..STEPS).map(|_| r.random_range(0.0..1.0)).collect();
        let rating = r.random_range(0.3..1.2);
        let inst = device_instance(cap, rating, &avail, r.random_range(0.05..0.3), r.random_range(0.005..0.03));
        let out = solve_iterative(&inst.ctx(mode), &backend).unwrap();
        problems.extend(device_violations(&inst, &out.solution).into_iter().map(|p| format!("case {case}: {p}")));
        // Light generation: the uncontrolled point is inside the limits.
        let light = device_instance(cap, 0.2, &avail, r.random_range(0.05..0.2), 0.01);
        let out = solve_iterative(&light.ctx(mode), &backend).unwrap();
        if out.solution.slack_v > SLACK_TOL || out.solution.slack_i > SLACK_TOL {
            problems.push(format!("case {case}: slacks {} / {}", out.solution.slack_v, out.solution.slack_i));
        }
    }
    Outcome {
        id: 7,
        pass: problems.is_empty(),
        detail: format!("{} solved feeders; {}", 2 * INVARIANT_CASES, if problems.is_empty() { "clean".into() } else { problems.join("; ") }),
    }
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let scenario = data("benchmark/scenario.json");
    for d in &dirs {
        let status = Command::new(env!("CARGO_BIN_EXE_gridvolt"))
            .args(["simulate", "--scenario"])
            .arg(&scenario)
            .args(["--vs-mode", "none", "--start", "2018-06-03", "--end", "2018-06-03", "--seed", "7", "--out"])
            .arg(d.path())
            .status()
            .unwrap();
        assert!(status.code().is_some_and(|c| c == 0 || c == 4), "simulate exited with {status}");
    }
    let files = ["solution.json", "timeseries.csv", "settlement.csv", "report.md", "summary.csv"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(dirs[0].path().join(f)).unwrap() != std::fs::read(dirs[1].path().join(f)).unwrap())
        .collect();
    Outcome {
        id: 8,
        pass: differing.is_empty(),
        detail: format!("two seeded simulate runs; differing outputs: {differing:?}"),
    }
}

fn record(results: &mut Vec<Outcome>, r: Outcome) {
    println!("criterion {}: {} | {}", r.id, if r.pass { "PASS" } else { "FAIL" }, r.detail);
    results.push(r);
}

#[test]
fn acceptance() {
    let cache = SolveCache::new();
    let passive = Scenario::load(&data("benchmark/scenario.json")).unwrap();
    let mut results = Vec::new();
    record(&mut results, pf_oracle());
    record(&mut results, outer_loop(&passive, &cache));
    record(&mut results, grid_oracle());
    record(&mut results, dominance(&passive, &cache));
    record(&mut results, capability_ordering(&cache));
    record(&mut results, settlement());
    record(&mut results, invariants());
    record(&mut results, determinism());
    let failed: Vec<u8> = results.iter().filter(|r| !r.pass).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
