//! Fixed experiment plans built on the sweep runner.

use std::fmt::Write as _;
use std::path::Path;

use crate::clkl::{NoiseMode, StartSet};
use crate::crb::{crb_sweep, nan_median, CrbSummary};
use crate::manifold::ArrayConfig;
use crate::Result;

use super::config::HarnessConfig;
use super::sweep::{
    run_trials, summarize, write_records, Method, SummaryRow, SweepPoint, SweepSpec, TrialRecord,
};

pub const ABLATION_SNRS: [f64; 3] = [-5.0, 5.0, 15.0];
pub const ABLATION_VARIANTS: [&str; 4] = ["full", "reestimate_n0", "single_start", "no_scan"];
pub const CONVERGENCE_SNRS: [f64; 4] = [-10.0, 0.0, 10.0, 20.0];
pub const RUNTIME_ELEMENTS: [usize; 4] = [32, 64, 128, 256];
pub const CRB_PATHS: [usize; 5] = [1, 2, 3, 4, 5];
pub const CRB_SNR_DB: f64 = 10.0;
/// Monte-Carlo size of the ablation, convergence and runtime plans.
pub const SHORT_MC: usize = 50;

fn short_mc(cfg: &HarnessConfig) -> usize {
    if cfg.mc_explicit {
        cfg.mc
    } else {
        SHORT_MC
    }
}

fn base_spec(cfg: &HarnessConfig, experiment: &str, variable: &str, mc: usize) -> SweepSpec {
    SweepSpec {
        experiment: experiment.into(),
        variable: variable.into(),
        points: Vec::new(),
        mc,
        seed: cfg.seed,
        methods: vec![Method::Clkl],
        fixed_combiner: cfg.fixed_combiner,
        workers: cfg.workers,
        record_runtime: false,
        keep_traces: false,
    }
}

/// CL-KL with one component switched off at a time.
pub fn ablation_spec(cfg: &HarnessConfig) -> SweepSpec {
    let mut spec = base_spec(cfg, "ablation", "snr", short_mc(cfg));
    for &snr in &ABLATION_SNRS {
        let mut sc = cfg.scenario.clone();
        sc.snr_db = snr;
        for &variant in &ABLATION_VARIANTS {
            let mut clkl = cfg.clkl.apply(&sc);
            match variant {
                "reestimate_n0" => clkl.noise_mode = NoiseMode::Reestimate { every: 10 },
                "single_start" => clkl.starts = StartSet::FarOnly,
                "no_scan" => clkl.scan_passes = 0,
                _ => {}
            }
            spec.points.push(SweepPoint {
                value: snr.to_string(),
                variant: variant.into(),
                scenario: sc.clone(),
                clkl,
            });
        }
    }
    spec
}

fn snr_points(cfg: &HarnessConfig, snrs: &[f64]) -> Vec<SweepPoint> {
    snrs.iter()
        .map(|&snr| {
            let mut sc = cfg.scenario.clone();
            sc.snr_db = snr;
            SweepPoint {
                value: snr.to_string(),
                variant: "full".into(),
                clkl: cfg.clkl.apply(&sc),
                scenario: sc,
            }
        })
        .collect()
}

pub fn convergence_spec(cfg: &HarnessConfig) -> SweepSpec {
    let mut spec = base_spec(cfg, "convergence", "snr", short_mc(cfg));
    spec.points = snr_points(cfg, &CONVERGENCE_SNRS);
    spec.keep_traces = true;
    spec
}

/// Single-worker timing over array sizes; N_RF, N and d stay at their
/// configured values.
pub fn runtime_spec(cfg: &HarnessConfig) -> Result<SweepSpec> {
    let mut spec = base_spec(cfg, "runtime", "m_elements", short_mc(cfg));
    spec.methods = cfg.methods.clone();
    spec.workers = 1;
    spec.record_runtime = true;
    for &m in &RUNTIME_ELEMENTS {
        let mut sc = cfg.scenario.clone();
        sc.array = ArrayConfig::new(cfg.scenario.array.carrier_hz(), m)?;
        spec.points.push(SweepPoint {
            value: m.to_string(),
            variant: "full".into(),
            clkl: cfg.clkl.apply(&sc),
            scenario: sc,
        });
    }
    Ok(spec)
}

/// Objective trace of one convergence trial, as `ΔL(t) = L(t) − L(1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub snr_db: String,
    pub trial: usize,
    pub iteration: usize,
    pub objective: f64,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceOutcome {
    pub records: Vec<TrialRecord>,
    pub traces: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
    /// Per SNR: fraction of traces whose objective never increases by more
    /// than `1e-9` relative.
    pub monotone_rate: Vec<(String, f64)>,
}

pub fn run_convergence(spec: &SweepSpec) -> Result<ConvergenceOutcome> {
    let outputs = run_trials(spec)?;
    let mut traces = Vec::new();
    let mut monotone: Vec<(String, usize, usize)> = Vec::new();
    for o in &outputs {
        let Some(trace) = &o.trace else { continue };
        let r = &o.record;
        if trace.is_empty() {
            continue;
        }
        let l1 = trace[0];
        for (t, &l) in trace.iter().enumerate() {
            traces.push(TraceRow {
                snr_db: r.sweep_value.clone(),
                trial: r.trial,
                iteration: t + 1,
                objective: l,
                delta: l - l1,
            });
        }
        let ok = trace.windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
        match monotone.iter_mut().find(|m| m.0 == r.sweep_value) {
            Some(m) => {
                m.1 += ok as usize;
                m.2 += 1;
            }
            None => monotone.push((r.sweep_value.clone(), ok as usize, 1)),
        }
    }
    let records: Vec<TrialRecord> = outputs.into_iter().map(|o| o.record).collect();
    Ok(ConvergenceOutcome {
        summary: summarize(&records),
        records,
        traces,
        monotone_rate: monotone.into_iter().map(|(v, k, n)| (v, k as f64 / n as f64)).collect(),
    })
}

pub fn write_traces(path: &Path, traces: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["snr_db", "trial", "iteration", "objective", "delta_objective"])?;
    for t in traces {
        w.write_record([
            t.snr_db.clone(),
            t.trial.to_string(),
            t.iteration.to_string(),
            t.objective.to_string(),
            t.delta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Path to the trace file written next to a records CSV.
pub fn trace_path(out: &Path) -> std::path::PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("convergence");
    out.with_file_name(format!("{stem}_traces.csv"))
}

pub fn format_convergence(outcome: &ConvergenceOutcome) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>8} {:>6} {:>10} {:>10} {:>10} {:>10}", "snr_dB", "n", "med_iters", "converged", "N0_ratio", "monotone");
    for row in &outcome.summary {
        let mono = outcome
            .monotone_rate
            .iter()
            .find(|m| m.0 == row.value)
            .map_or(f64::NAN, |m| m.1);
        let _ = writeln!(
            s,
            "{:>8} {:>6} {:>10.0} {:>10.2} {:>10.3} {:>10.2}",
            row.value, row.trials, row.median_iterations, row.convergence_rate, row.median_noise_ratio, mono
        );
    }
    s
}

/// Median estimator runtime per (M, method) in seconds.
pub fn runtime_table(records: &[TrialRecord]) -> Vec<(usize, String, f64)> {
    let mut out: Vec<(usize, String, f64)> = Vec::new();
    for r in records {
        if !out.iter().any(|o| o.0 == r.elements && o.1 == r.method) {
            let times: Vec<f64> = records
                .iter()
                .filter(|x| x.elements == r.elements && x.method == r.method && x.error.is_empty())
                .filter_map(|x| x.runtime_s)
                .collect();
            out.push((r.elements, r.method.clone(), nan_median(&times)));
        }
    }
    out
}

pub fn format_runtime(table: &[(usize, String, f64)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>6} {:>8} {:>12}", "M", "method", "median_ms");
    for (m, method, t) in table {
        let _ = writeln!(s, "{m:>6} {method:>8} {:>12.3}", t * 1e3);
    }
    s
}

/// Median `√CRB` for d = 1..5 at +10 dB.
pub fn crb_report(cfg: &HarnessConfig, trials: usize) -> Result<Vec<CrbSummary>> {
    CRB_PATHS
        .iter()
        .map(|&d| {
            let mut sc = cfg.scenario.clone();
            sc.paths = d;
            sc.snr_db = CRB_SNR_DB;
            crb_sweep(&sc, trials, cfg.seed)
        })
        .collect()
}

pub fn format_crb(rows: &[CrbSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>3} {:>7} {:>7} {:>12} {:>12} {:>12}", "d", "trials", "valid", "crb_deg", "crb_m", "cond");
    for r in rows {
        let _ = writeln!(
            s,
            "{:>3} {:>7} {:>7} {:>12.5} {:>12.5} {:>12.3e}",
            r.paths, r.trials, r.valid_trials, r.median_theta_deg, r.median_range_m, r.median_condition
        );
    }
    s
}

pub fn write_crb(path: &Path, rows: &[CrbSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["paths", "snr_db", "trials", "valid_trials", "median_crb_theta_deg", "median_crb_range_m", "median_condition"])?;
    for r in rows {
        w.write_record([
            r.paths.to_string(),
            r.snr_db.to_string(),
            r.trials.to_string(),
            r.valid_trials.to_string(),
            r.median_theta_deg.to_string(),
            r.median_range_m.to_string(),
            r.median_condition.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes records when an output path was given.
pub fn maybe_write(out: Option<&Path>, records: &[TrialRecord]) -> Result<()> {
    match out {
        Some(p) => write_records(p, records),
        None => Ok(()),
    }
}
