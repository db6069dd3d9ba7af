use crate::cli::{OpfArgs, PfArgs, ReportArgs, ScenarioArgs, SettleArgs, SimulateArgs};
use crate::manifest::{hash_file, sha256_hex, FileHash, Manifest};
use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use gridvolt::network::{load_network, NetworkModel};
use gridvolt::opf::backend_from_env;
use gridvolt::powerflow::{solve_bfs, InjectionSet, DEFAULT_MAX_ITER, DEFAULT_TOL};
use gridvolt::sim::output::{render_files, render_report, summary_csv, DayArtifact, RunArtifact, SeasonArtifact};
use gridvolt::sim::output::{REPORT_FILE, SOLUTION_FILE, SUMMARY_FILE};
use gridvolt::sim::profiles::SyntheticSpec;
use gridvolt::sim::{compare_capabilities, run_day, run_season, ProfileSource, Scenario, ScenarioConfig, SolveCache};
use gridvolt::vsupport::{read_records, resolve_tariff, settle_stream, ComplianceReport, TariffFile};
use serde::Deserialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Slack values at or below this count as zero when flagging violations.
const SLACK_TOL: f64 = 1e-6;

pub const COMPLIANCE_JSON: &str = "compliance.json";
pub const COMPLIANCE_CSV: &str = "compliance.csv";
pub const VOLTAGES_FILE: &str = "voltages.csv";
pub const BRANCHES_FILE: &str = "branches.csv";

/// Result of a subcommand that ran to completion.
#[derive(Debug, Default)]
pub struct Outcome {
    /// The dispatch still violates a network limit on the exact power flow.
    pub violation: bool,
}

/// Bundled benchmark used when neither `--scenario` nor `--network` is given.
fn bundled_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/benchmark/scenario.json")
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("resolving {}", p.display()))
}

fn args_vec() -> Vec<String> {
    std::env::args().skip(1).collect()
}

/// Tariff argument with any file part made absolute.
fn tariff_arg(spec: &str) -> Result<String> {
    if TariffFile::builtin().presets.iter().any(|p| p.name == spec) {
        return Ok(spec.to_string());
    }
    Ok(match spec.split_once('#') {
        Some((file, preset)) => format!("{}#{preset}", absolute(Path::new(file))?.display()),
        None => absolute(Path::new(spec))?.display().to_string(),
    })
}

/// Builds the scenario from a file (or the bundled benchmark) and the
/// command-line overrides. Returns it with the input files it read.
fn build_scenario(
    a: &ScenarioArgs,
    range: Option<(NaiveDate, NaiveDate)>,
) -> Result<(Scenario, Vec<PathBuf>)> {
    let (mut cfg, base, mut inputs) = match (&a.scenario, &a.network) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ScenarioConfig::from_json_str(&text)?;
            let base = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            (cfg, base, vec![path.clone()])
        }
        (None, Some(network)) => {
            let fleet = a.fleet.clone().context("--fleet is required with --network and no --scenario")?;
            let (start, end) = range.context("a date (--day, or --start and --end) is required without --scenario")?;
            let profiles = match &a.profiles {
                Some(p) => ProfileSource::File(p.clone()),
                None => ProfileSource::Synthetic(SyntheticSpec::new(a.seed.unwrap_or(0), start, end)),
            };
            let cfg = ScenarioConfig {
                network: network.clone(),
                fleet,
                profiles,
                tariff: "preset-2018".into(),
                vs_mode: Default::default(),
                capability: None,
                horizon: Default::default(),
                v_set: Default::default(),
                start,
                end,
                costs: Default::default(),
                solver: Default::default(),
            };
            (cfg, std::env::current_dir()?, Vec::new())
        }
        (None, None) => {
            let path = bundled_scenario();
            let cfg = ScenarioConfig::from_json_str(&std::fs::read_to_string(&path)?)?;
            let base = path.parent().expect("bundled scenario has a parent").to_path_buf();
            (cfg, base, vec![path])
        }
    };
    if let Some(p) = &a.network {
        cfg.network = absolute(p)?;
    }
    if let Some(p) = &a.fleet {
        cfg.fleet = absolute(p)?;
    }
    if let Some(p) = &a.profiles {
        cfg.profiles = ProfileSource::File(absolute(p)?);
    }
    if let Some(t) = &a.tariff {
        cfg.tariff = tariff_arg(t)?;
    }
    if let Some(m) = a.vs_mode {
        cfg.vs_mode = m;
    }
    if a.capability.is_some() {
        cfg.capability = a.capability;
    }
    if a.gap.is_some() {
        cfg.solver.gap = a.gap;
    }
    if a.big_m.is_some() {
        cfg.solver.big_m = a.big_m;
    }
    if let Some((start, end)) = range {
        cfg.start = start;
        cfg.end = end;
    }
    if let ProfileSource::Synthetic(spec) = &mut cfg.profiles {
        if let Some(seed) = a.seed {
            spec.seed = seed;
        }
    }
    let sc = Scenario::from_config(cfg, &base)?;
    inputs.push(sc.config.network.clone());
    inputs.push(sc.config.fleet.clone());
    if let ProfileSource::File(p) = &sc.config.profiles {
        inputs.push(p.clone());
    }
    let tariff_file = sc.config.tariff.split('#').next().unwrap_or_default();
    if Path::new(tariff_file).is_file() {
        inputs.push(PathBuf::from(tariff_file));
    }
    Ok((sc, inputs))
}

fn scenario_seed(sc: &Scenario) -> Option<u64> {
    match &sc.config.profiles {
        ProfileSource::Synthetic(spec) => Some(spec.seed),
        ProfileSource::File(_) => None,
    }
}

/// Writes `files` into `dir` and seals them with a manifest.
fn finish(
    dir: &Path,
    subcommand: &str,
    seed: Option<u64>,
    inputs: &[PathBuf],
    files: &[(&str, String)],
) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut m = Manifest::new(subcommand, args_vec(), seed);
    m.inputs = inputs.iter().map(|p| hash_file(p)).collect::<Result<_>>()?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body).with_context(|| format!("writing {name}"))?;
        m.outputs.push(FileHash { path: (*name).to_string(), sha256: sha256_hex(body.as_bytes()) });
    }
    m.write(dir)
}

#[derive(Debug, Deserialize)]
struct InjectionRow {
    bus: u32,
    p_mw: f64,
    q_mvar: f64,
}

fn peak_injections(net: &NetworkModel) -> InjectionSet {
    let mut inj = InjectionSet::zeros(net.n_buses());
    for (i, bus) in net.buses().iter().enumerate() {
        if let Some(l) = &bus.load {
            inj.p[i] = -l.p;
            inj.q[i] = -l.q;
        }
    }
    inj
}

fn read_injections(path: &Path, net: &NetworkModel) -> Result<InjectionSet> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut inj = InjectionSet::zeros(net.n_buses());
    for row in csv::Reader::from_reader(file).deserialize::<InjectionRow>() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        let i = net.bus_index(row.bus).with_context(|| format!("unknown bus {} in {}", row.bus, path.display()))?;
        inj.p[i] += row.p_mw / net.base_mva;
        inj.q[i] += row.q_mvar / net.base_mva;
    }
    Ok(inj)
}

pub fn pf(a: &PfArgs) -> Result<Outcome> {
    let net = load_network(&a.network)?;
    let mut inputs = vec![a.network.clone()];
    let inj = match &a.injections {
        Some(p) => {
            inputs.push(p.clone());
            read_injections(p, &net)?
        }
        None => peak_injections(&net),
    };
    let tap = a.tap.unwrap_or_else(|| net.transformer().map_or(0, |t| t.tap));
    let state = solve_bfs(&net, &inj, tap, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let mut volts = String::from("bus,v_pu,angle_deg\n");
    for (bus, v) in net.buses().iter().zip(&state.voltages) {
        writeln!(volts, "{},{},{}", bus.id, v.norm(), v.arg().to_degrees())?;
    }
    let mut branches = String::from("branch,from,to,i_pu,loading,loss_mw\n");
    let mut violation = state.voltages.iter().skip(1).any(|v| v.norm().is_nan());
    for (k, br) in net.branches().iter().enumerate() {
        let i = state.branch_currents[k].norm();
        let loading = br.i_max.map(|m| i / m);
        violation |= loading.is_some_and(|l| l > 1.0);
        writeln!(
            branches,
            "{},{},{},{},{},{}",
            br.name,
            net.buses()[br.from].id,
            net.buses()[br.to].id,
            i,
            loading.map_or(String::new(), |l| l.to_string()),
            state.branch_losses[k] * net.base_mva
        )?;
    }
    finish(&a.out, "pf", None, &inputs, &[(VOLTAGES_FILE, volts), (BRANCHES_FILE, branches)])?;
    Ok(Outcome { violation })
}

pub fn opf(a: &OpfArgs) -> Result<Outcome> {
    let (sc, inputs) = build_scenario(&a.scenario, a.day.map(|d| (d, d)))?;
    let date = a.day.unwrap_or(sc.config.start);
    let backend = backend_from_env()?;
    let day = run_day(&sc, date, backend.as_ref(), &SolveCache::new())?;
    let s = &day.solution;
    let violation = day.exact.costs.totals().penalty > 0.0 || s.slack_v > SLACK_TOL || s.slack_i > SLACK_TOL;
    let artifact = RunArtifact::Day(Box::new(DayArtifact::new(&sc, &day)));
    let files = render_files(&artifact, &day.records)?;
    finish(&a.scenario.out, "opf", scenario_seed(&sc), &inputs, &files)?;
    Ok(Outcome { violation })
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let range = match (a.start, a.end) {
        (Some(s), Some(e)) => Some((s, e)),
        (Some(s), None) => Some((s, s)),
        (None, Some(_)) => bail!("--end requires --start"),
        (None, None) => None,
    };
    let (sc, inputs) = build_scenario(&a.scenario, range)?;
    let backend = backend_from_env()?;
    let cache = SolveCache::new();
    let (artifact, records, penalty) = if a.compare_capabilities {
        let c = compare_capabilities(&sc, backend.as_ref(), &cache, a.jobs)?;
        let penalty = c.modes.iter().map(|m| m.totals.penalty).sum::<f64>() + c.reference.totals.penalty;
        let records = c.reference.records.clone();
        (RunArtifact::Capabilities(Box::new(c)), records, penalty)
    } else {
        let r = run_season(&sc, backend.as_ref(), &cache, a.jobs)?;
        let records = r.records.clone();
        let penalty = r.totals.penalty;
        (RunArtifact::Season(Box::new(SeasonArtifact::new(&sc, r)?)), records, penalty)
    };
    let files = render_files(&artifact, &records)?;
    finish(&a.scenario.out, "simulate", scenario_seed(&sc), &inputs, &files)?;
    Ok(Outcome { violation: penalty > 0.0 })
}

fn compliance_csv(reports: &[ComplianceReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn compliance_report(tariff: &str, reports: &[ComplianceReport]) -> String {
    let mut out = format!("# Settlement\n\nTariff: `{tariff}`\n\n");
    out.push_str("| month | intervals | compliant | share | status | cost (CHF) |\n|---|---:|---:|---:|---|---:|\n");
    for r in reports {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.2}% | {} | {:.2} |",
            r.month,
            r.intervals,
            r.compliant,
            r.compliant_fraction * 100.0,
            status,
            r.total_cost
        );
    }
    out
}

#[derive(Debug, serde::Serialize, Deserialize)]
struct SettlementArtifact {
    tariff: String,
    months: Vec<ComplianceReport>,
}

fn settlement_files(s: &SettlementArtifact) -> Result<Vec<(&'static str, String)>> {
    let mut json = serde_json::to_string_pretty(s)?;
    json.push('\n');
    Ok(vec![
        (COMPLIANCE_JSON, json),
        (COMPLIANCE_CSV, compliance_csv(&s.months)?),
        (REPORT_FILE, compliance_report(&s.tariff, &s.months)),
    ])
}

pub fn settle(a: &SettleArgs) -> Result<Outcome> {
    let tariff = resolve_tariff(&a.tariff)?;
    let file = std::fs::File::open(&a.records).with_context(|| format!("opening {}", a.records.display()))?;
    let records = read_records(file, &tariff.active)?;
    let months = settle_stream(&records, &tariff.active)?;
    let artifact = SettlementArtifact { tariff: a.tariff.clone(), months };
    let mut inputs = vec![a.records.clone()];
    let tariff_file = a.tariff.split('#').next().unwrap_or_default();
    if Path::new(tariff_file).is_file() {
        inputs.push(PathBuf::from(tariff_file));
    }
    finish(&a.out, "settle", None, &inputs, &settlement_files(&artifact)?)?;
    Ok(Outcome::default())
}

/// Checks the run directory and regenerates its report tables.
pub fn report(a: &ReportArgs) -> Result<Outcome> {
    let m = Manifest::verify(&a.run)?;
    let rewrite = |name: &str, body: &str| -> Result<()> {
        std::fs::write(a.run.join(name), body).with_context(|| format!("writing {name}"))
    };
    match m.subcommand.as_str() {
        "opf" | "simulate" => {
            let path = a.run.join(SOLUTION_FILE);
            let text = std::fs::read_to_string(&path).with_context(|| format!("missing artifact {}", path.display()))?;
            let artifact: RunArtifact = serde_json::from_str(&text).context("malformed solution file")?;
            rewrite(REPORT_FILE, &render_report(&artifact))?;
            rewrite(SUMMARY_FILE, &summary_csv(&artifact)?)?;
        }
        "settle" => {
            let path = a.run.join(COMPLIANCE_JSON);
            let text = std::fs::read_to_string(&path).with_context(|| format!("missing artifact {}", path.display()))?;
            let s: SettlementArtifact = serde_json::from_str(&text).context("malformed compliance file")?;
            for (name, body) in settlement_files(&s)? {
                rewrite(name, &body)?;
            }
        }
        other => bail!("no report for `{other}` runs"),
    }
    Ok(Outcome::default())
}
