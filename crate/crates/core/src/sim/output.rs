//! Run artifacts and their file renderings.
//!
//! `solution.json` holds a [`RunArtifact`]; the markdown report and CSV
//! tables are pure functions of it, so they can be regenerated later.

use super::run::{CapabilityComparison, DayRun, RunResult};
use super::scenario::Scenario;
use super::SimError;
use crate::der::CapabilityMode;
use crate::opf::{ConvergenceReport, CostTable, CostTotals, OpfSolution, VsMode};
use crate::vsupport::{
    metered, passive_qlim, settle_month, ComplianceReport, IntervalRecord, Region, TIMESTAMP_FORMAT,
};
use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const SOLUTION_FILE: &str = "solution.json";
pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const SETTLEMENT_FILE: &str = "settlement.csv";
pub const REPORT_FILE: &str = "report.md";
pub const SUMMARY_FILE: &str = "summary.csv";

/// One step of a daily run, ready for plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub timestamp: NaiveDateTime,
    /// Metered exchange per window, export positive (MWh, Mvarh).
    pub e_p: f64,
    pub e_q: f64,
    /// Reactive exchange without control.
    pub e_q_baseline: f64,
    /// Half-width of the passive cost-free band.
    pub e_qlim: f64,
    pub v_m: f64,
    pub v_set: f64,
    pub region: Region,
    pub tap: i32,
    pub dg_p: f64,
    pub dg_q: f64,
    pub bess_p: f64,
    pub bess_q: f64,
    pub bess_energy: f64,
    pub cl_shift: i32,
    /// Extreme distribution-bus voltage magnitudes of the exact power flow.
    pub v_low: f64,
    pub v_high: f64,
    pub curtailment: f64,
    pub reactive: f64,
    pub losses: f64,
    pub vs_passive: f64,
    pub vs_active: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DayArtifact {
    pub date: NaiveDate,
    pub vs_mode: VsMode,
    pub capability: Option<CapabilityMode>,
    pub tariff: String,
    pub epsilon: f64,
    pub convergence: ConvergenceReport,
    pub solution: OpfSolution,
    /// Ex-post costs on the exact power flow.
    pub costs: CostTable,
    pub baseline: CostTotals,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeasonArtifact {
    pub result: RunResult,
    /// Settlement of every fully covered calendar month.
    pub monthly: Vec<ComplianceReport>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunArtifact {
    Day(Box<DayArtifact>),
    Season(Box<SeasonArtifact>),
    Capabilities(Box<CapabilityComparison>),
}

impl DayArtifact {
    pub fn new(sc: &Scenario, day: &DayRun) -> Self {
        let net = &sc.network;
        let trace = day
            .exact
            .steps
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let d = &day.solution.dispatch[t];
                let c = &day.exact.costs.rows[t];
                let mags = day.exact.states[t]
                    .voltages
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j > 0 && net.is_distribution_bus(*j))
                    .map(|(_, v)| v.norm());
                let (v_low, v_high) = mags.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
                let e_p = metered(s.e_p);
                TraceRow {
                    timestamp: day.inputs.timestamps[t],
                    e_p,
                    e_q: metered(s.e_q),
                    e_q_baseline: metered(day.baseline.steps[t].e_q),
                    e_qlim: passive_qlim(e_p, &sc.tariff.passive),
                    v_m: s.v_m,
                    v_set: day.inputs.v_set[t],
                    region: day.records[t].region,
                    tap: d.tap,
                    dg_p: d.dg_p.iter().sum(),
                    dg_q: d.dg_q.iter().sum(),
                    bess_p: d.bess_dis.iter().sum::<f64>() - d.bess_ch.iter().sum::<f64>(),
                    bess_q: d.bess_q.iter().sum(),
                    bess_energy: d.bess_energy.iter().sum(),
                    cl_shift: d.cl_shift.iter().sum(),
                    v_low,
                    v_high,
                    curtailment: c.curtailment,
                    reactive: c.reactive,
                    losses: c.losses,
                    vs_passive: c.vs_passive,
                    vs_active: c.vs_active,
                    penalty: c.penalty,
                    total: c.total,
                }
            })
            .collect();
        Self {
            date: day.date,
            vs_mode: sc.vs_mode(),
            capability: sc.config.capability,
            tariff: sc.tariff.name.clone(),
            epsilon: sc.tariff.active.epsilon,
            convergence: day.report.clone(),
            solution: day.solution.clone(),
            costs: day.exact.costs.clone(),
            baseline: day.baseline.costs.totals(),
            trace,
        }
    }
}

fn month_intervals(date: NaiveDate) -> usize {
    let first = date.with_day(1).expect("day 1 exists");
    let next = first.checked_add_months(chrono::Months::new(1)).expect("month in range");
    (next - first).num_days() as usize * super::STEPS_PER_DAY
}

/// Settles each calendar month the records fully cover, in order.
pub fn settle_covered(records: &[IntervalRecord], sc: &Scenario) -> Result<Vec<ComplianceReport>, SimError> {
    let mut out: Vec<ComplianceReport> = Vec::new();
    let mut start = 0;
    while start < records.len() {
        let ts = records[start].timestamp;
        let key = (ts.year(), ts.month());
        let len = records[start..].iter().take_while(|r| (r.timestamp.year(), r.timestamp.month()) == key).count();
        if len == month_intervals(ts.date()) {
            out.push(settle_month(&records[start..start + len], &sc.tariff.active, out.last())?);
        }
        start += len;
    }
    Ok(out)
}

impl SeasonArtifact {
    pub fn new(sc: &Scenario, result: RunResult) -> Result<Self, SimError> {
        let monthly = settle_covered(&result.records, sc)?;
        Ok(Self { result, monthly })
    }
}

fn ts(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

fn csv_string(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, SimError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| SimError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn f(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

fn region_name(r: Region) -> &'static str {
    match r {
        Region::A1 => "A1",
        Region::A2 => "A2",
        Region::A3 => "A3",
        Region::A4 => "A4",
    }
}

/// Settlement rows in the format read by `read_records`.
pub fn settlement_csv(records: &[IntervalRecord]) -> Result<String, SimError> {
    csv_string(
        &["timestamp", "E_P_MWh", "E_Q_Mvarh", "Vm_pu", "Vset_pu", "region", "cost_chf"],
        records.iter().map(|r| {
            vec![
                ts(&r.timestamp),
                f(r.e_p, 3),
                f(r.e_q, 3),
                // Full precision keeps the region of re-read records unchanged.
                r.v_m.to_string(),
                r.v_set.to_string(),
                region_name(r.region).to_string(),
                f(r.cost, 6),
            ]
        }),
    )
}

fn day_timeseries(a: &DayArtifact) -> Result<String, SimError> {
    let header = [
        "timestamp", "E_P_MWh", "E_Q_Mvarh", "E_Q_baseline_Mvarh", "E_Qlim_Mvarh", "Vm_pu", "Vset_pu", "region", "tap",
        "dg_p_pu", "dg_q_pu", "bess_p_pu", "bess_q_pu", "bess_energy_pu_h", "cl_shift", "v_low_pu", "v_high_pu",
        "curtailment_chf", "reactive_chf", "losses_chf", "vs_passive_chf", "vs_active_chf", "penalty_chf", "total_chf",
    ];
    csv_string(
        &header,
        a.trace.iter().map(|r| {
            vec![
                ts(&r.timestamp),
                f(r.e_p, 3),
                f(r.e_q, 3),
                f(r.e_q_baseline, 3),
                f(r.e_qlim, 3),
                f(r.v_m, 6),
                f(r.v_set, 6),
                region_name(r.region).to_string(),
                r.tap.to_string(),
                f(r.dg_p, 6),
                f(r.dg_q, 6),
                f(r.bess_p, 6),
                f(r.bess_q, 6),
                f(r.bess_energy, 6),
                r.cl_shift.to_string(),
                f(r.v_low, 6),
                f(r.v_high, 6),
                f(r.curtailment, 6),
                f(r.reactive, 6),
                f(r.losses, 6),
                f(r.vs_passive, 6),
                f(r.vs_active, 6),
                f(r.penalty, 6),
                f(r.total, 6),
            ]
        }),
    )
}

fn season_timeseries(r: &RunResult) -> Result<String, SimError> {
    let header = [
        "date", "outer_iterations", "mismatch_pu", "outer_status", "mip_status", "gap", "curtailment_chf", "reactive_chf",
        "losses_chf", "vs_passive_chf", "vs_active_chf", "penalty_chf", "total_chf", "compliant_intervals",
        "unaware_schedule",
    ];
    csv_string(
        &header,
        r.days.iter().map(|d| {
            vec![
                d.date.to_string(),
                d.outer_iterations.to_string(),
                format!("{:.3e}", d.mismatch),
                json_name(&d.outer_status),
                json_name(&d.mip_status),
                f(d.gap, 6),
                f(d.costs.curtailment, 6),
                f(d.costs.reactive, 6),
                f(d.costs.losses, 6),
                f(d.costs.vs_passive, 6),
                f(d.costs.vs_active, 6),
                f(d.costs.penalty, 6),
                f(d.costs.total, 6),
                d.compliant_intervals.to_string(),
                d.unaware_schedule.to_string(),
            ]
        }),
    )
}

fn json_name<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn totals_row(label: &str, t: &CostTotals) -> Vec<String> {
    vec![
        label.to_string(),
        f(t.curtailment, 6),
        f(t.reactive, 6),
        f(t.losses, 6),
        f(t.vs_passive, 6),
        f(t.vs_active, 6),
        f(t.penalty, 6),
        f(t.total, 6),
    ]
}

const TOTALS_HEADER: [&str; 8] =
    ["run", "curtailment_chf", "reactive_chf", "losses_chf", "vs_passive_chf", "vs_active_chf", "penalty_chf", "total_chf"];

fn run_label(r: &RunResult) -> String {
    match r.capability {
        Some(c) => format!("{}-{}", r.vs_mode.as_str(), c.short()),
        None => r.vs_mode.as_str().to_string(),
    }
}

/// Category totals of every run in the artifact.
pub fn summary_csv(a: &RunArtifact) -> Result<String, SimError> {
    let rows = match a {
        RunArtifact::Day(d) => vec![totals_row(d.vs_mode.as_str(), &d.costs.totals()), totals_row("no-control", &d.baseline)],
        RunArtifact::Season(s) => {
            let mut rows = vec![totals_row(&run_label(&s.result), &s.result.totals)];
            if let Some(r) = &s.result.reference {
                rows.push(totals_row("none", r));
            }
            rows
        }
        RunArtifact::Capabilities(c) => std::iter::once(totals_row("none", &c.reference.totals))
            .chain(c.modes.iter().map(|m| totals_row(&run_label(m), &m.totals)))
            .collect(),
    };
    csv_string(&TOTALS_HEADER, rows)
}

fn md_totals(out: &mut String, rows: &[(String, &CostTotals)]) {
    out.push_str("| run | curtailment | reactive | losses | VS passive | VS active | penalty | total |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|\n");
    for (label, t) in rows {
        let _ = writeln!(
            out,
            "| {label} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
            t.curtailment, t.reactive, t.losses, t.vs_passive, t.vs_active, t.penalty, t.total
        );
    }
}

fn md_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |p| format!("{p:+.2} %"))
}

fn md_hourly_compliance(out: &mut String, runs: &[(String, &[f64])]) {
    out.push_str("| hour |");
    for (label, _) in runs {
        let _ = write!(out, " {label} |");
    }
    out.push_str("\n|---:|");
    out.push_str(&"---:|".repeat(runs.len()));
    out.push('\n');
    for h in 0..24 {
        let _ = write!(out, "| {h:02} |");
        for (_, v) in runs {
            let _ = write!(out, " {:.0} % |", v.get(h).copied().unwrap_or(0.0) * 100.0);
        }
        out.push('\n');
    }
}

fn render_day(a: &DayArtifact) -> String {
    let mut out = String::new();
    let cap = a.capability.map_or("as configured", |c| c.short());
    let _ = writeln!(out, "# Daily run {}\n", a.date);
    let _ = writeln!(out, "- scheme: {}, capability: {cap}, tariff: {}", a.vs_mode.as_str(), a.tariff);
    let c = &a.convergence;
    let _ = writeln!(
        out,
        "- outer loop: {} after {} iterations, reported iterate {} (mismatch {:.3e} pu)",
        json_name(&c.status),
        c.iterations,
        c.selected,
        c.mismatch[c.selected - 1]
    );
    let s = &a.solution;
    let _ = writeln!(
        out,
        "- MIP: {}, objective {:.4}, bound {:.4}, gap {:.4}, {} nodes",
        json_name(&s.status),
        s.objective,
        s.bound,
        s.gap,
        s.nodes
    );
    let _ = writeln!(out, "- big-M rows at their bound: {}\n", s.big_m_binding.len());
    out.push_str("## Costs (CHF, exact power flow)\n\n");
    md_totals(&mut out, &[(a.vs_mode.as_str().to_string(), &a.costs.totals()), ("no control".into(), &a.baseline)]);
    out.push_str("\n## Hourly profile\n\n");
    out.push_str("| hour | E_P (MWh) | E_Q (Mvarh) | E_Q no control | band ± | V_m | V_set | compliant | VS passive | VS active |\n");
    out.push_str("|---:|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for h in 0..24 {
        let rows: Vec<&TraceRow> = a.trace.iter().filter(|r| r.timestamp.hour() as usize == h).collect();
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        let sum = |g: fn(&TraceRow) -> f64| rows.iter().map(|r| g(r)).sum::<f64>();
        let compliant = rows.iter().filter(|r| r.region.is_compliant()).count();
        let _ = writeln!(
            out,
            "| {h:02} | {:.3} | {:.3} | {:.3} | {:.3} | {:.4} | {:.4} | {compliant}/{} | {:.4} | {:.4} |",
            sum(|r| r.e_p),
            sum(|r| r.e_q),
            sum(|r| r.e_q_baseline),
            sum(|r| r.e_qlim) / n,
            sum(|r| r.v_m) / n,
            sum(|r| r.v_set) / n,
            rows.len(),
            sum(|r| r.vs_passive),
            sum(|r| r.vs_active),
        );
    }
    let _ = writeln!(out, "\nTolerance band: V_set ± {:.4} pu. Per-step data in `{TIMESERIES_FILE}`.", a.epsilon);
    out
}

fn render_season(s: &SeasonArtifact) -> String {
    let r = &s.result;
    let mut out = String::new();
    let (first, last) = (r.days.first().map(|d| d.date), r.days.last().map(|d| d.date));
    let _ = writeln!(out, "# Seasonal run {} to {}\n", fmt_date(first), fmt_date(last));
    let _ = writeln!(
        out,
        "- scheme: {}, tariff: {}, {} days ({} distinct)",
        run_label(r),
        r.tariff,
        r.days.len(),
        r.distinct_days
    );
    let converged = r.days.iter().filter(|d| json_name(&d.outer_status) == "converged").count();
    let _ = writeln!(out, "- outer loop converged on {converged} of {} days", r.days.len());
    let adopted = r.days.iter().filter(|d| d.unaware_schedule).count();
    let _ = writeln!(out, "- unaware schedule adopted (cheaper ex post) on {adopted} days\n");
    out.push_str("## Costs (CHF)\n\n");
    let mut rows = vec![(run_label(r), &r.totals)];
    if let Some(refs) = &r.reference {
        rows.push(("none".to_string(), refs));
    }
    md_totals(&mut out, &rows);
    let _ = writeln!(
        out,
        "\nTotal cost change against the unaware run: {}. VS cost change: {}.\n",
        md_pct(r.total_delta_percent),
        md_pct(r.vs_delta_percent)
    );
    if !s.monthly.is_empty() {
        out.push_str("## Monthly settlement (active scheme)\n\n| month | compliant | share | status | cost |\n|---|---:|---:|---|---:|\n");
        for m in &s.monthly {
            let _ = writeln!(
                out,
                "| {} | {}/{} | {:.2} % | {} | {:.2} |",
                m.month,
                m.compliant,
                m.intervals,
                m.compliant_fraction * 100.0,
                json_name(&m.status),
                m.total_cost
            );
        }
        out.push('\n');
    }
    out.push_str("## Hourly compliance\n\n");
    md_hourly_compliance(&mut out, &[(run_label(r), &r.hourly_compliance)]);
    out
}

fn fmt_date(d: Option<NaiveDate>) -> String {
    d.map_or_else(|| "-".into(), |d| d.to_string())
}

fn render_capabilities(c: &CapabilityComparison) -> String {
    let mut out = String::new();
    let (first, last) = (c.reference.days.first().map(|d| d.date), c.reference.days.last().map(|d| d.date));
    let _ = writeln!(out, "# Capability comparison {} to {}\n", fmt_date(first), fmt_date(last));
    let _ = writeln!(
        out,
        "Capability regions {} for every generator.\n",
        if c.nested { "nest" } else { "do not nest" }
    );
    out.push_str("## Voltage-support cost (active scheme, CHF)\n\n| run | VS cost | change vs none | total |\n|---|---:|---:|---:|\n");
    let _ = writeln!(
        out,
        "| none | {:.2} | - | {:.2} |",
        c.reference.totals.vs_active,
        super::run::total_under(&c.reference.totals, VsMode::Active)
    );
    for m in &c.modes {
        let _ = writeln!(out, "| {} | {:.2} | {} | {:.2} |", run_label(m), m.totals.vs_active, md_pct(m.vs_delta_percent), m.totals.total);
    }
    out.push_str("\n## Ordering\n\n| check | holds |\n|---|---|\n");
    for o in &c.ordering {
        let _ = writeln!(out, "| {} ({:.2}) ≥ {} ({:.2}) | {} |", o.higher, o.higher_vs, o.lower, o.lower_vs, if o.holds { "yes" } else { "NO" });
    }
    out.push_str("\n## Hourly compliance\n\n");
    let mut runs: Vec<(String, &[f64])> = vec![("none".into(), &c.reference.hourly_compliance)];
    runs.extend(c.modes.iter().map(|m| (run_label(m), m.hourly_compliance.as_slice())));
    md_hourly_compliance(&mut out, &runs);
    out
}

pub fn render_report(a: &RunArtifact) -> String {
    match a {
        RunArtifact::Day(d) => render_day(d),
        RunArtifact::Season(s) => render_season(s),
        RunArtifact::Capabilities(c) => render_capabilities(c),
    }
}

/// Primary output files of a run, relative name and content.
pub fn render_files(a: &RunArtifact, records: &[IntervalRecord]) -> Result<Vec<(&'static str, String)>, SimError> {
    let mut json = serde_json::to_string_pretty(a)?;
    json.push('\n');
    let series = match a {
        RunArtifact::Day(d) => day_timeseries(d)?,
        RunArtifact::Season(s) => season_timeseries(&s.result)?,
        RunArtifact::Capabilities(c) => {
            let mut all = season_timeseries(&c.reference)?;
            for m in &c.modes {
                let t = season_timeseries(m)?;
                all.push_str(t.split_once('\n').map_or("", |(_, body)| body));
            }
            all
        }
    };
    Ok(vec![
        (SOLUTION_FILE, json),
        (TIMESERIES_FILE, series),
        (SETTLEMENT_FILE, settlement_csv(records)?),
        (REPORT_FILE, render_report(a)),
        (SUMMARY_FILE, summary_csv(a)?),
    ])
}

/// Writes the rendered files into `dir` and returns their paths.
pub fn write_files(dir: &Path, files: &[(&'static str, String)]) -> Result<Vec<PathBuf>, SimError> {
    std::fs::create_dir_all(dir)?;
    files
        .iter()
        .map(|(name, body)| {
            let p = dir.join(name);
            std::fs::write(&p, body)?;
            Ok(p)
        })
        .collect()
}
