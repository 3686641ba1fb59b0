//! Seeded Monte-Carlo sweeps.
//!
//! Trial `k` of every sweep point uses seed `base + k`, so all points share
//! their random draws except for the swept quantity. Trials run on a rayon
//! pool of the requested size and are collected in `(point, trial, method)`
//! order, which makes the CSV independent of the worker count.

use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clkl::{clkl_estimate, ClklConfig};
use crate::crb::{crb_trial, nan_median};
use crate::estimate::EstimateResult;
use crate::manifold::ArrayConfig;
use crate::metrics::{evaluate, nmse_db, RmsePool};
use crate::psomp::{psomp_estimate, DictionaryParams, PolarDictionary};
use crate::scene::{draw_combiner, draw_scene, draw_scene_with_combiner, ScenarioConfig, Scene, SceneRng};
use crate::{CMat, Error, Result};

use super::config::{HarnessConfig, SNR_MENU};

/// Bumped whenever a column is added, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Clkl,
    Psomp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Clkl => "clkl",
            Self::Psomp => "psomp",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clkl" | "cl-kl" => Ok(Self::Clkl),
            "psomp" | "p-somp" => Ok(Self::Psomp),
            other => Err(Error::InvalidConfig(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    Snr,
    NRf,
    Snapshots,
    Paths,
    RangeMaxFrac,
    Elements,
    SourceModel,
    TruthModel,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Snr => "snr",
            Self::NRf => "n_rf",
            Self::Snapshots => "n_snapshots",
            Self::Paths => "d",
            Self::RangeMaxFrac => "range_max_frac",
            Self::Elements => "m_elements",
            Self::SourceModel => "source_model",
            Self::TruthModel => "truth_model",
        }
    }

    pub fn default_values(self) -> Vec<String> {
        let v: Vec<String> = match self {
            Self::Snr => SNR_MENU.iter().map(|s| s.to_string()).collect(),
            Self::NRf => ["4", "8", "12", "16"].map(String::from).to_vec(),
            Self::Snapshots => ["16", "32", "64", "128"].map(String::from).to_vec(),
            Self::Paths => ["1", "2", "3", "4", "5"].map(String::from).to_vec(),
            Self::RangeMaxFrac => ["0.1", "0.25", "0.5", "1", "2", "5"].map(String::from).to_vec(),
            Self::Elements => ["32", "64", "128", "256"].map(String::from).to_vec(),
            Self::SourceModel => ["gaussian", "qpsk"].map(String::from).to_vec(),
            Self::TruthModel => ["usw", "fresnel"].map(String::from).to_vec(),
        };
        v
    }

    /// Copy of `base` with this variable set to `value`.
    pub fn apply(self, base: &ScenarioConfig, value: &str) -> Result<ScenarioConfig> {
        let bad = || Error::InvalidConfig(format!("bad value '{value}' for sweep '{}'", self.name()));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let int = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
        let mut sc = base.clone();
        match self {
            Self::Snr => sc.snr_db = num(value)?,
            Self::NRf => sc.rf_chains = int(value)?,
            Self::Snapshots => sc.snapshots = int(value)?,
            Self::Paths => sc.paths = int(value)?,
            Self::RangeMaxFrac => sc.range_support.1 = num(value)?,
            Self::Elements => sc.array = ArrayConfig::new(base.array.carrier_hz(), int(value)?)?,
            Self::SourceModel => sc.source_model = value.parse()?,
            Self::TruthModel => sc.truth_model = value.parse()?,
        }
        sc.validate()?;
        Ok(sc)
    }
}

impl FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "snr" | "snr_db" => Ok(Self::Snr),
            "n_rf" | "rf_chains" => Ok(Self::NRf),
            "n_snapshots" | "n" | "snapshots" => Ok(Self::Snapshots),
            "d" | "paths" => Ok(Self::Paths),
            "range_max_frac" => Ok(Self::RangeMaxFrac),
            "m_elements" | "m" | "elements" => Ok(Self::Elements),
            "source_model" => Ok(Self::SourceModel),
            "truth_model" => Ok(Self::TruthModel),
            other => Err(Error::InvalidConfig(format!("unknown sweep variable '{other}'"))),
        }
    }
}

/// One CSV row: a (sweep point, trial, method) triple.
///
/// Angles in degrees, ranges in metres, NMSE both linear and in dB.
/// `rmse_*` are over the trial's matched paths; pooled sweep RMSEs are the
/// root of the mean of their squares. `runtime_s` is estimator-only wall
/// clock and is left empty unless timing was requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub experiment: String,
    pub variant: String,
    pub sweep_variable: String,
    pub sweep_value: String,
    pub trial: usize,
    pub seed: u64,
    pub method: String,
    pub elements: usize,
    pub rf_chains: usize,
    pub snapshots: usize,
    pub paths: usize,
    pub snr_db: f64,
    pub range_min_frac: f64,
    pub range_max_frac: f64,
    pub source_model: String,
    pub truth_model: String,
    pub fixed_combiner: bool,
    pub whitened: bool,
    pub nmse: f64,
    pub nmse_db: f64,
    pub rmse_theta_deg: f64,
    pub rmse_range_m: f64,
    pub failed: bool,
    /// 1 = ring, 2 = near, 3 = far.
    pub winning_start: Option<u8>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// `N̂₀ / N₀`.
    pub noise_ratio: f64,
    pub padded_atoms: Option<usize>,
    pub rank_deficient: bool,
    pub dictionary_size: Option<usize>,
    /// Path-averaged `√CRB` at the true parameters (NaN for an invalid FIM).
    pub crb_theta_deg: f64,
    pub crb_range_m: f64,
    pub runtime_s: Option<f64>,
    /// Empty unless the estimator returned an error or panicked.
    pub error: String,
}

/// A scenario plus estimator settings evaluated `mc` times.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: String,
    pub variant: String,
    pub scenario: ScenarioConfig,
    pub clkl: ClklConfig,
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub experiment: String,
    pub variable: String,
    pub points: Vec<SweepPoint>,
    pub mc: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub fixed_combiner: bool,
    pub workers: usize,
    pub record_runtime: bool,
    /// Keep each CL-KL trial's winning objective trace.
    pub keep_traces: bool,
}

impl SweepSpec {
    /// Sweep described by a harness config.
    pub fn from_config(cfg: &HarnessConfig) -> Result<Self> {
        let values = cfg.values.clone().unwrap_or_else(|| cfg.sweep.default_values());
        let points = values
            .iter()
            .map(|v| {
                let scenario = cfg.sweep.apply(&cfg.scenario, v)?;
                Ok(SweepPoint {
                    value: v.clone(),
                    variant: "full".into(),
                    clkl: cfg.clkl.apply(&scenario),
                    scenario,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            experiment: "sweep".into(),
            variable: cfg.sweep.name().into(),
            points,
            mc: cfg.mc,
            seed: cfg.seed,
            methods: cfg.methods.clone(),
            fixed_combiner: cfg.fixed_combiner,
            workers: cfg.workers,
            record_runtime: false,
            keep_traces: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() || self.mc == 0 || self.methods.is_empty() || self.workers == 0 {
            return Err(Error::InvalidConfig(
                "sweep needs points, mc >= 1, methods and workers >= 1".into(),
            ));
        }
        for p in &self.points {
            p.scenario.validate()?;
            p.clkl.validate()?;
        }
        Ok(())
    }
}

/// Runs `f`, turning both errors and panics into an error message.
pub fn run_guarded<T, F: FnOnce() -> Result<T>>(f: F) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(payload) => Err(match payload.downcast_ref::<&str>() {
            Some(s) => format!("panic: {s}"),
            None => match payload.downcast_ref::<String>() {
                Some(s) => format!("panic: {s}"),
                None => "panic".into(),
            },
        }),
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: TrialRecord,
    pub trace: Option<Vec<f64>>,
}

struct PointContext {
    dictionary: Option<PolarDictionary>,
    combiner: Option<CMat>,
}

fn blank_record(spec: &SweepSpec, point: &SweepPoint, trial: usize, seed: u64, method: Method) -> TrialRecord {
    let sc = &point.scenario;
    TrialRecord {
        schema_version: SCHEMA_VERSION,
        experiment: spec.experiment.clone(),
        variant: point.variant.clone(),
        sweep_variable: spec.variable.clone(),
        sweep_value: point.value.clone(),
        trial,
        seed,
        method: method.name().into(),
        elements: sc.array.elements(),
        rf_chains: sc.rf_chains,
        snapshots: sc.snapshots,
        paths: sc.paths,
        snr_db: sc.snr_db,
        range_min_frac: sc.range_support.0,
        range_max_frac: sc.range_support.1,
        source_model: sc.source_model.to_string(),
        truth_model: sc.truth_model.to_string(),
        fixed_combiner: spec.fixed_combiner,
        whitened: match method {
            Method::Clkl => point.clkl.whiten,
            Method::Psomp => true,
        },
        nmse: f64::NAN,
        nmse_db: f64::NAN,
        rmse_theta_deg: f64::NAN,
        rmse_range_m: f64::NAN,
        failed: true,
        winning_start: None,
        iterations: None,
        converged: None,
        noise_ratio: f64::NAN,
        padded_atoms: None,
        rank_deficient: false,
        dictionary_size: None,
        crb_theta_deg: f64::NAN,
        crb_range_m: f64::NAN,
        runtime_s: None,
        error: String::new(),
    }
}

fn estimate(method: Method, scene: &Scene, point: &SweepPoint, ctx: &PointContext) -> Result<EstimateResult> {
    let sc = &point.scenario;
    let obs = scene.observation();
    match method {
        Method::Clkl => clkl_estimate(&obs, &sc.array, sc.paths, &point.clkl),
        Method::Psomp => {
            let dict = ctx.dictionary.as_ref().expect("dictionary built for P-SOMP points");
            psomp_estimate(&obs, &sc.array, sc.paths, dict, sc.range_max())
        }
    }
}

fn run_trial(spec: &SweepSpec, point: &SweepPoint, ctx: &PointContext, trial: usize) -> Vec<TrialOutput> {
    let seed = spec.seed.wrapping_add(trial as u64);
    let sc = &point.scenario;
    let scene = run_guarded(|| {
        let mut rng = SceneRng::new(seed);
        match &ctx.combiner {
            Some(w) => draw_scene_with_combiner(sc, &mut rng, w.clone()),
            None => draw_scene(sc, &mut rng),
        }
    });
    let crb = scene.as_ref().ok().and_then(|s| {
        crb_trial(&sc.array, &s.combiner, &s.paths, s.noise_power, sc.snapshots).ok()
    });
    spec.methods
        .iter()
        .map(|&method| {
            let mut rec = blank_record(spec, point, trial, seed, method);
            if let Some(c) = crb {
                rec.crb_theta_deg = c.theta_deg;
                rec.crb_range_m = c.range_m;
            }
            let scene = match &scene {
                Ok(s) => s,
                Err(e) => {
                    rec.error = e.clone();
                    return TrialOutput { record: rec, trace: None };
                }
            };
            let outcome = run_guarded(|| {
                let start = Instant::now();
                let est = estimate(method, scene, point, ctx)?;
                let elapsed = start.elapsed().as_secs_f64();
                let metrics = evaluate(&est, &scene.paths, &scene.channel)?;
                Ok((est, metrics, elapsed))
            });
            let mut trace = None;
            match outcome {
                Ok((est, m, elapsed)) => {
                    rec.nmse = m.nmse;
                    rec.nmse_db = m.nmse_db;
                    rec.rmse_theta_deg = m.rmse_theta_deg;
                    rec.rmse_range_m = m.rmse_range_m;
                    rec.failed = m.failed;
                    rec.noise_ratio = est.noise_estimate / scene.noise_power;
                    rec.rank_deficient = est.rank_deficient;
                    if let Some(d) = &est.clkl {
                        let w = d.winner();
                        rec.winning_start = Some(w.kind.label());
                        rec.iterations = Some(w.iterations);
                        rec.converged = Some(w.converged);
                        rec.padded_atoms = Some(d.padded_atoms);
                        if spec.keep_traces {
                            trace = Some(w.trace.clone());
                        }
                    }
                    if let Some(d) = &est.psomp {
                        rec.dictionary_size = Some(d.dictionary_size);
                    }
                    if spec.record_runtime {
                        rec.runtime_s = Some(elapsed);
                    }
                }
                Err(e) => rec.error = e,
            }
            TrialOutput { record: rec, trace }
        })
        .collect()
}

/// Runs every point × trial × method and returns the outputs in
/// `(point, trial, method)` order.
pub fn run_trials(spec: &SweepSpec) -> Result<Vec<TrialOutput>> {
    spec.validate()?;
    let contexts: Vec<PointContext> = spec
        .points
        .iter()
        .map(|p| {
            let sc = &p.scenario;
            let dictionary = if spec.methods.contains(&Method::Psomp) {
                Some(PolarDictionary::build(
                    &sc.array,
                    &DictionaryParams::new(sc.range_min(), sc.range_max()),
                )?)
            } else {
                None
            };
            let combiner = if spec.fixed_combiner {
                let mut rng = SceneRng::new(spec.seed);
                Some(draw_combiner(sc.array.elements(), sc.rf_chains, &mut rng.combiner)?)
            } else {
                None
            };
            Ok(PointContext { dictionary, combiner })
        })
        .collect::<Result<_>>()?;
    for (p, ctx) in spec.points.iter().zip(&contexts) {
        if let Some(d) = &ctx.dictionary {
            log::info!(
                "point {}: P-SOMP dictionary S = {}, adjacent coherence {:.3}, psomp.mmv=eig",
                p.value,
                d.len(),
                d.max_adjacent_coherence
            );
        }
    }
    let jobs: Vec<(usize, usize)> = (0..spec.points.len())
        .flat_map(|p| (0..spec.mc).map(move |t| (p, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    let nested: Vec<Vec<TrialOutput>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(p, t)| run_trial(spec, &spec.points[p], &contexts[p], t))
            .collect()
    });
    Ok(nested.into_iter().flatten().collect())
}

/// Aggregate of one (point, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub value: String,
    pub variant: String,
    pub method: String,
    pub trials: usize,
    pub errors: usize,
    /// `10 log10` of the mean linear NMSE.
    pub mean_nmse_db: f64,
    pub median_nmse_db: f64,
    pub rmse_theta_deg: f64,
    pub rmse_range_m: f64,
    pub failure_rate: f64,
    pub median_noise_ratio: f64,
    /// Fraction of formally converged CL-KL trials (NaN for P-SOMP).
    pub convergence_rate: f64,
    pub median_iterations: f64,
    /// Winning-start counts (ring, near, far).
    pub start_wins: [usize; 3],
    pub median_runtime_s: f64,
    pub median_crb_theta_deg: f64,
    pub median_crb_range_m: f64,
}

/// Per-(point, method) aggregates in first-appearance order. Trials that
/// errored are counted but excluded from every statistic.
pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, String, String)> = Vec::new();
    for r in records {
        let k = (r.sweep_value.clone(), r.variant.clone(), r.method.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(value, variant, method)| {
            let cell: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.sweep_value == value && r.variant == variant && r.method == method)
                .collect();
            let ok: Vec<&TrialRecord> = cell.iter().copied().filter(|r| r.error.is_empty()).collect();
            let col = |f: &dyn Fn(&TrialRecord) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let mut pool = RmsePool::default();
            for r in &ok {
                pool.sum_sq_theta += r.rmse_theta_deg.powi(2) * r.paths as f64;
                pool.sum_sq_range += r.rmse_range_m.powi(2) * r.paths as f64;
                pool.count += r.paths;
            }
            let n = ok.len().max(1) as f64;
            let converged: Vec<bool> = ok.iter().filter_map(|r| r.converged).collect();
            let mut start_wins = [0; 3];
            for r in &ok {
                if let Some(s) = r.winning_start {
                    start_wins[(s - 1) as usize] += 1;
                }
            }
            SummaryRow {
                trials: cell.len(),
                errors: cell.len() - ok.len(),
                mean_nmse_db: if ok.is_empty() {
                    f64::NAN
                } else {
                    nmse_db(col(&|r| r.nmse).iter().sum::<f64>() / n)
                },
                median_nmse_db: nan_median(&col(&|r| r.nmse_db)),
                rmse_theta_deg: pool.rmse_theta_deg(),
                rmse_range_m: pool.rmse_range_m(),
                failure_rate: if ok.is_empty() {
                    f64::NAN
                } else {
                    ok.iter().filter(|r| r.failed).count() as f64 / n
                },
                median_noise_ratio: nan_median(&col(&|r| r.noise_ratio)),
                convergence_rate: if converged.is_empty() {
                    f64::NAN
                } else {
                    converged.iter().filter(|&&c| c).count() as f64 / converged.len() as f64
                },
                median_iterations: nan_median(&col(&|r| r.iterations.map_or(f64::NAN, |i| i as f64))),
                start_wins,
                median_runtime_s: nan_median(&col(&|r| r.runtime_s.unwrap_or(f64::NAN))),
                median_crb_theta_deg: nan_median(&col(&|r| r.crb_theta_deg)),
                median_crb_range_m: nan_median(&col(&|r| r.crb_range_m)),
                value,
                variant,
                method,
            }
        })
        .collect()
}

/// Fixed-width text table of a summary.
pub fn format_summary(variable: &str, rows: &[SummaryRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>14} {:>14} {:>6} {:>5} {:>4} {:>9} {:>9} {:>8} {:>8} {:>6} {:>7} {:>6} {:>6} {:>12} {:>9}",
        variable, "variant", "method", "n", "err", "nmse_dB", "med_dB", "rmse_deg", "rmse_m", "fail",
        "N0_rat", "conv", "iters", "wins(r/n/f)", "ms"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:>14} {:>14} {:>6} {:>5} {:>4} {:>9.2} {:>9.2} {:>8.2} {:>8.2} {:>6.2} {:>7.3} {:>6.2} {:>6.0} {:>12} {:>9.2}",
            r.value,
            r.variant,
            r.method,
            r.trials,
            r.errors,
            r.mean_nmse_db,
            r.median_nmse_db,
            r.rmse_theta_deg,
            r.rmse_range_m,
            r.failure_rate,
            r.median_noise_ratio,
            r.convergence_rate,
            r.median_iterations,
            format!("{}/{}/{}", r.start_wins[0], r.start_wins[1], r.start_wins[2]),
            r.median_runtime_s * 1e3,
        );
    }
    out
}

pub fn write_records(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for r in rd.deserialize() {
        out.push(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

/// Runs a sweep, optionally writing the CSV.
pub fn run_sweep(spec: &SweepSpec, out: Option<&Path>) -> Result<SweepOutcome> {
    let records: Vec<TrialRecord> = run_trials(spec)?.into_iter().map(|o| o.record).collect();
    if let Some(path) = out {
        write_records(path, &records)?;
    }
    let summary = summarize(&records);
    Ok(SweepOutcome { records, summary })
}
