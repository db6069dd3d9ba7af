//! Daily and seasonal runs.

use super::scenario::Scenario;
use super::{horizon_for_day, SimError};
use crate::der::CapabilityMode;
use crate::opf::{
    evaluate_exact, no_control, solve_iterative, ConicBackend, ConvergenceReport, CostTotals, ExactEvaluation,
    HorizonInputs, MipStatus, OpfContext, OpfSolution, OuterStatus, VsMode,
};
use crate::vsupport::{metered, IntervalRecord};
use chrono::{NaiveDate, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::{Arc, Mutex};

/// Relative tolerance of seasonal cost comparisons.
pub const ORDER_TOL_REL: f64 = 1e-3;

#[derive(Debug)]
struct Solved {
    solution: OpfSolution,
    report: ConvergenceReport,
    /// The day's schedule is the one solved without VS awareness.
    unaware: bool,
}

/// Outer-loop solves keyed by every input that affects them except the
/// calendar date. Days with identical profiles are solved once.
#[derive(Debug, Default)]
pub struct SolveCache {
    map: Mutex<HashMap<u128, Arc<Solved>>>,
}

impl SolveCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: u128) -> Option<Arc<Solved>> {
        self.map.lock().expect("cache lock").get(&key).cloned()
    }

    fn insert(&self, key: u128, value: Arc<Solved>) {
        self.map.lock().expect("cache lock").insert(key, value);
    }
}

fn fingerprint(sc: &Scenario, inputs: &HorizonInputs) -> u128 {
    let mut key = inputs.clone();
    key.timestamps.clear();
    // The setpoint only enters the active-scheme model.
    if sc.vs_mode() != VsMode::Active {
        key.v_set.clear();
    }
    let net = &sc.network;
    let text = format!(
        "{:?}|{:?}|{:?}|{:?}|{}|{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
        net.buses(),
        net.branches(),
        net.transformer(),
        net.thevenin(),
        net.measurement_bus(),
        sc.fleet,
        sc.config.costs,
        sc.options,
        sc.tariff,
        sc.vs_mode(),
        key
    );
    let half = |salt: u8| {
        let mut h = DefaultHasher::new();
        salt.hash(&mut h);
        text.hash(&mut h);
        h.finish()
    };
    (u128::from(half(1)) << 64) | u128::from(half(2))
}

fn context<'a>(sc: &'a Scenario, inputs: &'a HorizonInputs) -> OpfContext<'a> {
    OpfContext {
        network: &sc.network,
        fleet: &sc.fleet,
        inputs,
        coeffs: &sc.config.costs,
        tariff: &sc.tariff,
        vs_mode: sc.vs_mode(),
        options: &sc.options,
    }
}

/// Solves the day for the scenario's scheme. Aware schemes also weigh the
/// unaware schedule, which is feasible for them: the outer loop is a local
/// method and the two runs may settle at different linearization points.
/// The schedule with the lower ex-post cost under the scenario's scheme wins.
fn solve(sc: &Scenario, inputs: &HorizonInputs, backend: &dyn ConicBackend, cache: &SolveCache) -> Result<Solved, SimError> {
    let ctx = context(sc, inputs);
    let out = solve_iterative(&ctx, backend)?;
    let aware = Solved { solution: out.solution, report: out.report, unaware: false };
    if sc.vs_mode() == VsMode::None {
        return Ok(aware);
    }
    let plain = cached_solve(&sc.variant(VsMode::None, None), inputs, backend, cache)?;
    let ex_post = |s: &Solved| -> Result<f64, SimError> {
        Ok(evaluate_exact(&ctx, &s.solution.dispatch, None, sc.vs_mode())?.costs.totals().total)
    };
    if ex_post(&plain)? < ex_post(&aware)? {
        log::debug!("unaware schedule is cheaper ex post; adopting it");
        return Ok(Solved { solution: plain.solution.clone(), report: plain.report.clone(), unaware: true });
    }
    Ok(aware)
}

fn cached_solve(
    sc: &Scenario,
    inputs: &HorizonInputs,
    backend: &dyn ConicBackend,
    cache: &SolveCache,
) -> Result<Arc<Solved>, SimError> {
    let key = fingerprint(sc, inputs);
    if let Some(s) = cache.get(key) {
        return Ok(s);
    }
    let s = Arc::new(solve(sc, inputs, backend, cache)?);
    cache.insert(key, s.clone());
    Ok(s)
}

/// One solved day with its ex-post evaluation.
#[derive(Clone, Debug)]
pub struct DayRun {
    pub date: NaiveDate,
    pub inputs: HorizonInputs,
    pub solution: OpfSolution,
    pub report: ConvergenceReport,
    /// Exact power flow of the dispatch; `total` uses the scenario's scheme.
    pub exact: ExactEvaluation,
    /// Exact power flow without control.
    pub baseline: ExactEvaluation,
    /// Metered settlement intervals of the dispatch.
    pub records: Vec<IntervalRecord>,
    /// The schedule is the unaware one (cheaper ex post than the aware solve).
    pub unaware_schedule: bool,
}

/// Per-day entry of a seasonal result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub date: NaiveDate,
    pub outer_iterations: usize,
    /// Voltage mismatch of the reported iterate (pu).
    pub mismatch: f64,
    pub outer_status: OuterStatus,
    pub mip_status: MipStatus,
    pub gap: f64,
    pub objective: f64,
    pub costs: CostTotals,
    pub compliant_intervals: usize,
    #[serde(default)]
    pub unaware_schedule: bool,
}

impl DayRun {
    pub fn summary(&self) -> DaySummary {
        DaySummary {
            date: self.date,
            outer_iterations: self.report.iterations,
            mismatch: self.report.mismatch[self.report.selected - 1],
            outer_status: self.report.status,
            mip_status: self.solution.status,
            gap: self.solution.gap,
            objective: self.solution.objective,
            costs: self.exact.costs.totals(),
            compliant_intervals: self.records.iter().filter(|r| r.region.is_compliant()).count(),
            unaware_schedule: self.unaware_schedule,
        }
    }
}

fn finish_day(sc: &Scenario, date: NaiveDate, inputs: HorizonInputs, solved: &Solved) -> Result<DayRun, SimError> {
    let mut solution = solved.solution.clone();
    solution.timestamps.clone_from(&inputs.timestamps);
    for (row, ts) in solution.costs.rows.iter_mut().zip(&inputs.timestamps) {
        row.timestamp = *ts;
    }
    let ctx = context(sc, &inputs);
    let exact = evaluate_exact(&ctx, &solution.dispatch, None, sc.vs_mode())?;
    let (_, baseline) = no_control(&ctx)?;
    let records = exact
        .steps
        .iter()
        .enumerate()
        .map(|(t, s)| {
            IntervalRecord::new(
                inputs.timestamps[t],
                metered(s.e_p),
                metered(s.e_q),
                s.v_m,
                inputs.v_set[t],
                &sc.tariff.active,
            )
        })
        .collect();
    Ok(DayRun {
        date,
        inputs,
        solution,
        report: solved.report.clone(),
        exact,
        baseline,
        records,
        unaware_schedule: solved.unaware,
    })
}

fn inputs_for(sc: &Scenario, date: NaiveDate) -> Result<HorizonInputs, SimError> {
    horizon_for_day(&sc.network, &sc.fleet, &sc.profiles, date, &sc.config.v_set)
}

/// Solves one calendar day (a single outer-loop call over 96 steps).
pub fn run_day(sc: &Scenario, date: NaiveDate, backend: &dyn ConicBackend, cache: &SolveCache) -> Result<DayRun, SimError> {
    let inputs = inputs_for(sc, date)?;
    let solved = cached_solve(sc, &inputs, backend, cache)?;
    finish_day(sc, date, inputs, &solved)
}

/// Aggregated result of a run over a date range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub vs_mode: VsMode,
    pub capability: Option<CapabilityMode>,
    pub tariff: String,
    pub days: Vec<DaySummary>,
    /// Sum of the daily totals in date order.
    pub totals: CostTotals,
    /// Totals of the same range solved without VS awareness (ex-post
    /// charges included); absent for unaware runs.
    pub reference: Option<CostTotals>,
    /// Change of total cost against the reference, percent.
    pub total_delta_percent: Option<f64>,
    /// Change of VS cost against the reference, percent.
    pub vs_delta_percent: Option<f64>,
    /// Share of compliant intervals per hour of day.
    pub hourly_compliance: Vec<f64>,
    /// Outer-loop solves actually performed for this range.
    pub distinct_days: usize,
    #[serde(skip)]
    pub records: Vec<IntervalRecord>,
}

impl RunResult {
    /// Seasonal VS charge under this run's scheme.
    pub fn vs_cost(&self) -> f64 {
        self.totals.vs(self.vs_mode)
    }
}

/// Cost of a reference run if it had been settled under `scheme`.
pub fn total_under(totals: &CostTotals, scheme: VsMode) -> f64 {
    totals.operational() + totals.penalty + totals.vs(scheme)
}

fn percent(value: f64, reference: f64) -> Option<f64> {
    (reference != 0.0).then(|| (value - reference) / reference.abs() * 100.0)
}

fn hourly_compliance(records: &[IntervalRecord]) -> Vec<f64> {
    let mut hits = [0usize; 24];
    let mut seen = [0usize; 24];
    for r in records {
        let h = r.timestamp.hour() as usize;
        seen[h] += 1;
        hits[h] += usize::from(r.region.is_compliant());
    }
    (0..24).map(|h| if seen[h] == 0 { 0.0 } else { hits[h] as f64 / seen[h] as f64 }).collect()
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, SimError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| SimError::Config(format!("thread pool: {e}")))
}

fn run_range(sc: &Scenario, backend: &dyn ConicBackend, cache: &SolveCache, jobs: usize) -> Result<RunResult, SimError> {
    let dates = sc.dates();
    let inputs: Vec<HorizonInputs> = dates.iter().map(|d| inputs_for(sc, *d)).collect::<Result<_, _>>()?;
    let keys: Vec<u128> = inputs.iter().map(|i| fingerprint(sc, i)).collect();
    let mut pending: Vec<(u128, usize)> = Vec::new();
    for (k, key) in keys.iter().enumerate() {
        if cache.get(*key).is_none() && !pending.iter().any(|(p, _)| p == key) {
            pending.push((*key, k));
        }
    }
    let mut distinct: Vec<u128> = keys.clone();
    distinct.sort_unstable();
    distinct.dedup();
    log::info!("{} days, {} distinct, {} to solve", dates.len(), distinct.len(), pending.len());
    let solved: Vec<Result<Solved, SimError>> = pool(jobs)?.install(|| {
        pending.par_iter().map(|(_, k)| solve(sc, &inputs[*k], backend, cache).map_err(|e| day_error(dates[*k], e))).collect()
    });
    for ((key, _), s) in pending.iter().zip(solved) {
        cache.insert(*key, Arc::new(s?));
    }
    let mut days = Vec::with_capacity(dates.len());
    let mut records = Vec::with_capacity(dates.len() * super::STEPS_PER_DAY);
    let mut totals = CostTotals::default();
    for ((date, inp), key) in dates.iter().zip(inputs).zip(&keys) {
        let solved = cache.get(*key).expect("solved above");
        let day = finish_day(sc, *date, inp, &solved)?;
        let summary = day.summary();
        totals.add(&summary.costs);
        days.push(summary);
        records.extend(day.records);
    }
    Ok(RunResult {
        vs_mode: sc.vs_mode(),
        capability: sc.config.capability,
        tariff: sc.tariff.name.clone(),
        days,
        totals,
        reference: None,
        total_delta_percent: None,
        vs_delta_percent: None,
        hourly_compliance: hourly_compliance(&records),
        distinct_days: distinct.len(),
        records,
    })
}

fn day_error(date: NaiveDate, e: SimError) -> SimError {
    SimError::Day { date, source: Box::new(e) }
}

/// Runs every day of the scenario's range. Aware runs also solve the
/// unaware reference and report the cost change against it.
pub fn run_season(sc: &Scenario, backend: &dyn ConicBackend, cache: &SolveCache, jobs: usize) -> Result<RunResult, SimError> {
    if sc.vs_mode() == VsMode::None {
        return run_range(sc, backend, cache, jobs);
    }
    // The reference first: aware solves reuse its cached schedules.
    let reference = run_range(&sc.variant(VsMode::None, None), backend, cache, jobs)?;
    let mut result = run_range(sc, backend, cache, jobs)?;
    let scheme = sc.vs_mode();
    let r = reference.totals;
    result.total_delta_percent = percent(result.totals.total, total_under(&r, scheme));
    result.vs_delta_percent = percent(result.totals.vs(scheme), r.vs(scheme));
    result.reference = Some(r);
    Ok(result)
}

/// One `a ≥ b` check of the capability ordering.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingCheck {
    pub higher: String,
    pub lower: String,
    pub higher_vs: f64,
    pub lower_vs: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapabilityComparison {
    /// Unaware run, VS priced under the active scheme.
    pub reference: RunResult,
    /// Active-aware runs for triangular, rectangular and semicircle.
    pub modes: Vec<RunResult>,
    /// Whether the three regions nest for every generator.
    pub nested: bool,
    pub ordering: Vec<OrderingCheck>,
    pub ordering_holds: bool,
}

/// `a ≥ b` up to [`ORDER_TOL_REL`] of the larger seasonal total.
pub fn at_least(a: f64, b: f64, scale: f64) -> bool {
    a >= b - ORDER_TOL_REL * scale.abs()
}

/// Runs the unaware reference and the active scheme under each capability
/// mode, and checks VS(none) ≥ VS(tri) ≥ VS(rect) ≥ VS(semi).
pub fn compare_capabilities(
    sc: &Scenario,
    backend: &dyn ConicBackend,
    cache: &SolveCache,
    jobs: usize,
) -> Result<CapabilityComparison, SimError> {
    let reference = run_range(&sc.variant(VsMode::None, None), backend, cache, jobs)?;
    let mut modes = Vec::new();
    for mode in CapabilityMode::ALL {
        let mut r = run_range(&sc.variant(VsMode::Active, Some(mode)), backend, cache, jobs)?;
        let refs = reference.totals.clone();
        r.total_delta_percent = percent(r.totals.total, total_under(&refs, VsMode::Active));
        r.vs_delta_percent = percent(r.totals.vs_active, refs.vs_active);
        r.reference = Some(refs);
        modes.push(r);
    }
    let nested = sc.fleet.dg.iter().all(|u| u.regions_nest());
    let mut chain = vec![("none".to_string(), reference.totals.vs_active, total_under(&reference.totals, VsMode::Active))];
    chain.extend(modes.iter().map(|r| {
        let name = r.capability.map_or("configured", |c| c.short()).to_string();
        (name, r.totals.vs_active, r.totals.total)
    }));
    let ordering: Vec<OrderingCheck> = chain
        .windows(2)
        .map(|w| {
            let scale = w[0].2.abs().max(w[1].2.abs());
            OrderingCheck {
                higher: w[0].0.clone(),
                lower: w[1].0.clone(),
                higher_vs: w[0].1,
                lower_vs: w[1].1,
                holds: at_least(w[0].1, w[1].1, scale),
            }
        })
        .collect();
    let ordering_holds = ordering.iter().all(|c| c.holds);
    Ok(CapabilityComparison { reference, modes, nested, ordering, ordering_holds })
}
