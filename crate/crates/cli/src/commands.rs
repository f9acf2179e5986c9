use std::fs;
use std::io::BufWriter;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use fiscalprey::dynamics::{boundedness_certificate, integrate, IntegrationOptions};
use fiscalprey::empirics::{
    compare_with_reference, composition, knn_impute, load_csv, CompositionReport, ReferenceComparison,
};
use fiscalprey::equilibria::{all_equilibria, EquilibriumRecord};
use fiscalprey::poly::Complex;
use fiscalprey::stability::{
    global_predicates, local_stability, lyapunov_scan, perturbation_probe, Claim, GlobalPredicates, LyapunovScanReport,
    Spectral,
};
use fiscalprey::{forward_backward_sweep, EquilibriumClass};
use serde::Serialize;

use crate::scenario::Scenario;
use crate::svg::{line_chart, pie_chart, Series};
use crate::CliError;

const PROBE_MAGNITUDE: f64 = 1e-4;
const N_STARTS: usize = 64;
const LYAPUNOV_RESOLUTION: usize = 50;

fn prepare(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::input(format!("cannot create {}: {e}", out.display())))
}

fn write_text(path: PathBuf, text: &str) -> Result<(), CliError> {
    fs::write(&path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::input(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

fn create(path: PathBuf) -> Result<BufWriter<fs::File>, CliError> {
    fs::File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
#[serde(untagged)]
enum Availability<T> {
    Available(T),
    Unavailable { unavailable: String },
}

impl<T> From<fiscalprey::Result<T>> for Availability<T> {
    fn from(r: fiscalprey::Result<T>) -> Self {
        match r {
            Ok(v) => Availability::Available(v),
            Err(e) => Availability::Unavailable { unavailable: e.to_string() },
        }
    }
}

pub fn simulate(scenario: &Scenario, out: &Path) -> Result<(), CliError> {
    prepare(out)?;
    let traj = integrate(&scenario.params, scenario.initial_state, scenario.t_end, &IntegrationOptions::default())?;
    if scenario.wants("trajectory.csv") {
        let mut w = create(out.join("trajectory.csv"))?;
        traj.write_csv(&mut w).map_err(|e| CliError::input(e.to_string()))?;
    }
    if scenario.wants("trajectory.svg") {
        let column = |f: fn(&fiscalprey::State) -> f64| -> Vec<(f64, f64)> {
            traj.times.iter().zip(&traj.states).map(|(t, s)| (*t, f(s))).collect()
        };
        let series = [
            Series { label: "F̄ informal", points: column(|s| s.fbar) },
            Series { label: "F formal", points: column(|s| s.f) },
            Series { label: "G revenue", points: column(|s| s.g) },
        ];
        write_text(out.join("trajectory.svg"), &line_chart("Trajectory", "t", "level", &series))?;
    }
    if scenario.wants("boundedness.json") {
        let cert: Availability<_> = boundedness_certificate(&scenario.params, &traj, 0.5).into();
        write_json(out.join("boundedness.json"), &cert)?;
    }
    println!("simulate: {} accepted steps, final state {:?}", traj.len(), traj.last().to_array());
    Ok(())
}

#[derive(Serialize)]
struct StabilityRecord {
    eigenvalues: Vec<[f64; 2]>,
    spectral_verdict: Spectral,
    characteristic: [f64; 3],
    routh_hurwitz: [bool; 3],
    routh_hurwitz_stable: bool,
    analytic_conditions: std::collections::BTreeMap<String, bool>,
    claim: Option<Claim>,
    agreement: bool,
}

#[derive(Serialize)]
struct ProbeRecord {
    magnitude: f64,
    returns: bool,
    final_distance: f64,
}

#[derive(Serialize)]
struct EquilibriumEntry {
    #[serde(flatten)]
    record: EquilibriumRecord,
    stability: Availability<StabilityRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    probe: Option<Availability<ProbeRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    global_predicates: Option<Availability<GlobalPredicates>>,
}

#[derive(Serialize)]
struct EquilibriaReport {
    seed: u64,
    equilibria: Vec<EquilibriumEntry>,
    lyapunov: Availability<LyapunovScanReport>,
    all_agree: bool,
}

pub fn equilibria(scenario: &Scenario, out: &Path, seed: u64) -> Result<(), CliError> {
    prepare(out)?;
    let p = &scenario.params;
    let reports = all_equilibria(p, N_STARTS)?;
    let mut entries = Vec::with_capacity(reports.len());
    let mut all_agree = true;
    for (i, r) in reports.iter().enumerate() {
        let stability = local_stability(p, r).map(|v| {
            all_agree &= v.agreement;
            StabilityRecord {
                eigenvalues: v.eigenvalues.iter().map(|z: &Complex| [z.re, z.im]).collect(),
                spectral_verdict: v.spectral_verdict,
                characteristic: v.characteristic,
                routh_hurwitz: v.routh_hurwitz,
                routh_hurwitz_stable: v.routh_hurwitz_stable(),
                analytic_conditions: v.analytic_conditions.iter().cloned().collect(),
                claim: v.claim,
                agreement: v.agreement,
            }
        });
        let probe = (r.feasible && r.point.min_component() >= 0.0).then(|| {
            perturbation_probe(p, &r.point, PROBE_MAGNITUDE, scenario.t_end, seed.wrapping_add(i as u64))
                .map(|pr| ProbeRecord {
                    magnitude: PROBE_MAGNITUDE,
                    returns: pr.returns,
                    final_distance: pr.final_distance,
                })
                .into()
        });
        let global = (r.class == EquilibriumClass::Coexistence).then(|| global_predicates(p, &r.point).into());
        entries.push(EquilibriumEntry {
            record: EquilibriumRecord::from(r),
            stability: stability.into(),
            probe,
            global_predicates: global,
        });
    }
    let lyapunov = fiscalprey::stability::LyapunovSetup::new(p)
        .and_then(|setup| lyapunov_scan(p, setup.g0 / 2.0, LYAPUNOV_RESOLUTION))
        .into();
    let report = EquilibriaReport { seed, equilibria: entries, lyapunov, all_agree };
    if scenario.wants("equilibria.json") {
        write_json(out.join("equilibria.json"), &report)?;
    }
    println!("equilibria: {} points, conditions agree with spectra: {}", report.equilibria.len(), all_agree);
    Ok(())
}

pub fn control(scenario: &Scenario, out: &Path) -> Result<(), CliError> {
    let cp = scenario.control.as_ref().ok_or_else(|| CliError::input("scenario has no control block"))?;
    prepare(out)?;
    let sol = forward_backward_sweep(&scenario.params, cp, scenario.initial_state)?;
    if scenario.wants("control.csv") {
        let mut w = create(out.join("control.csv"))?;
        sol.write_csv(&mut w).map_err(|e| CliError::input(e.to_string()))?;
    }
    if scenario.wants("control_summary.json") {
        write_json(out.join("control_summary.json"), &sol.summary())?;
    }
    if scenario.wants("control.svg") {
        let series = [Series { label: "u(t)", points: sol.grid.iter().copied().zip(sol.u.iter().copied()).collect() }];
        write_text(out.join("control.svg"), &line_chart("Penalty control", "t", "u", &series))?;
    }
    println!("control: objective {:e}, {} iterations, converged {}", sol.objective, sol.iterations, sol.converged);
    Ok(())
}

#[derive(Serialize)]
struct DataReport {
    #[serde(flatten)]
    composition: CompositionReport,
    k: usize,
    reference: ReferenceComparison,
}

pub fn data(csv: &Path, k: usize, years: Option<RangeInclusive<i32>>, out: &Path) -> Result<(), CliError> {
    let raw = load_csv(csv)?;
    if raw.is_empty() {
        return Err(CliError::input("fiscal series has no rows"));
    }
    prepare(out)?;
    let gaps = raw.missing_count();
    let series = knn_impute(&raw, k)?;
    let years = years.unwrap_or(series.years[0]..=*series.years.last().unwrap());
    let report = composition(&series, years)?;
    let slices: Vec<(&str, f64)> = report.shares.iter().map(|(h, s)| (h.as_str(), *s)).collect();
    write_text(out.join("composition_pie.svg"), &pie_chart("Tax-head composition", &slices))?;
    let ratio = |f: fn(&fiscalprey::empirics::YearRatio) -> f64| -> Vec<(f64, f64)> {
        report.ratios.iter().map(|r| (r.year as f64, f(r))).collect()
    };
    let series = [
        Series { label: "total tax/GDP", points: ratio(|r| r.ratio) },
        Series { label: "personal income tax/GDP", points: ratio(|r| r.personal_income_tax) },
        Series { label: "company tax/GDP", points: ratio(|r| r.company_tax) },
    ];
    write_text(out.join("ratio.svg"), &line_chart("Tax-to-GDP ratio", "year", "ratio", &series))?;
    println!("data: {gaps} imputed cells, peak ratio {:.4} in {}", report.peak_ratio, report.peak_year);
    let reference = compare_with_reference(&report);
    write_json(out.join("composition.json"), &DataReport { composition: report, k, reference })?;
    Ok(())
}
