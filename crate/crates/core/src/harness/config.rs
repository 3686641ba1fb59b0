//! Plain-text `key = value` configuration.
//!
//! One setting per line, `#` starts a comment, keys are case-insensitive.
//! Unknown keys are rejected so typos do not silently fall back to defaults.
//!
//! ```text
//! # scenario
//! carrier_ghz = 28
//! M = 64
//! N_RF = 8
//! N = 64
//! d = 3
//! snr_db = 10
//! angle_min_deg = 20
//! angle_max_deg = 60
//! range_min_frac = 0.05
//! range_max_frac = 1.0
//! source_model = gaussian
//! truth_model = usw
//!
//! # run
//! sweep = snr
//! values = -15, -10, -5, 0, 5, 10, 15, 20, 25
//! mc = 100
//! seed = 42
//! methods = clkl, psomp
//! fixed_combiner = false
//! workers = 4
//!
//! # estimator
//! clkl.lambda = 1e-3
//! clkl.t_max = 150
//! ```

use std::path::Path;
use std::str::FromStr;

use crate::clkl::{ClklConfig, NoiseMode, PowerInit, StartSet};
use crate::manifold::ArrayConfig;
use crate::scene::ScenarioConfig;
use crate::{Error, Result};

use super::sweep::{Method, SweepVariable};

/// Desk-scale default trial count.
pub const DEFAULT_MC: usize = 100;
/// Trial count of the full-scale runs.
pub const FULL_MC: usize = 400;
pub const DEFAULT_SEED: u64 = 42;
/// SNR menu of the default sweep (dB).
pub const SNR_MENU: [f64; 9] = [-15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0, 25.0];

/// Optional overrides of [`ClklConfig`]; range bounds always follow the
/// scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClklOverrides {
    pub coarse_angles: Option<usize>,
    pub fine_angles: Option<usize>,
    pub fine_curvatures: Option<usize>,
    pub sparsity: Option<f64>,
    pub max_iterations: Option<usize>,
    pub rel_tolerance: Option<f64>,
    pub ring_beta: Option<f64>,
    pub scan_passes: Option<usize>,
    pub starts: Option<StartSet>,
    pub noise_mode: Option<NoiseMode>,
    pub power_init: Option<PowerInit>,
    pub whiten: Option<bool>,
}

impl ClklOverrides {
    pub fn apply(&self, sc: &ScenarioConfig) -> ClklConfig {
        let mut c = ClklConfig::for_scenario(sc);
        if let Some(v) = self.coarse_angles {
            c.coarse_angles = v;
        }
        if let Some(v) = self.fine_angles {
            c.fine_angles = v;
        }
        if let Some(v) = self.fine_curvatures {
            c.fine_curvatures = v;
        }
        if let Some(v) = self.sparsity {
            c.sparsity = v;
        }
        if let Some(v) = self.max_iterations {
            c.max_iterations = v;
        }
        if let Some(v) = self.rel_tolerance {
            c.rel_tolerance = v;
        }
        if let Some(v) = self.ring_beta {
            c.ring_beta = v;
        }
        if let Some(v) = self.scan_passes {
            c.scan_passes = v;
        }
        if let Some(v) = self.starts {
            c.starts = v;
        }
        if let Some(v) = self.noise_mode {
            c.noise_mode = v;
        }
        if let Some(v) = self.power_init {
            c.power_init = v;
        }
        if let Some(v) = self.whiten {
            c.whiten = v;
        }
        c
    }
}

/// Everything a config file can set.
#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub scenario: ScenarioConfig,
    pub sweep: SweepVariable,
    /// Sweep values as written; `None` means the variable's default menu.
    pub values: Option<Vec<String>>,
    pub mc: usize,
    /// Whether `mc` was set explicitly rather than left at its default.
    pub mc_explicit: bool,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub fixed_combiner: bool,
    pub workers: usize,
    pub clkl: ClklOverrides,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            sweep: SweepVariable::Snr,
            values: None,
            mc: DEFAULT_MC,
            mc_explicit: false,
            seed: DEFAULT_SEED,
            methods: vec![Method::Clkl, Method::Psomp],
            fixed_combiner: false,
            workers: default_workers(),
            clkl: ClklOverrides::default(),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse '{value}' for '{key}'"),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Parse {
            line,
            message: format!("'{key}' expects a boolean, got '{value}'"),
        }),
    }
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

impl HarnessConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut carrier_hz = cfg.scenario.array.carrier_hz();
        let mut elements = cfg.scenario.array.elements();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                message: format!("expected 'key = value', got '{content}'"),
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let sc = &mut cfg.scenario;
            let err = |e: Error| match e {
                Error::InvalidConfig(message) => Error::Parse { line, message },
                other => other,
            };
            match key.as_str() {
                "carrier_ghz" | "f_c" => carrier_hz = parse_value::<f64>(line, &key, value)? * 1e9,
                "m" | "elements" => elements = parse_value(line, &key, value)?,
                "n_rf" | "rf_chains" => sc.rf_chains = parse_value(line, &key, value)?,
                "n" | "snapshots" => sc.snapshots = parse_value(line, &key, value)?,
                "d" | "paths" => sc.paths = parse_value(line, &key, value)?,
                "snr_db" | "snr" => sc.snr_db = parse_value(line, &key, value)?,
                "angle_min_deg" => sc.angle_support_deg.0 = parse_value(line, &key, value)?,
                "angle_max_deg" => sc.angle_support_deg.1 = parse_value(line, &key, value)?,
                "range_min_frac" => sc.range_support.0 = parse_value(line, &key, value)?,
                "range_max_frac" => sc.range_support.1 = parse_value(line, &key, value)?,
                "source_model" | "pilots" => sc.source_model = value.parse().map_err(err)?,
                "truth_model" => sc.truth_model = value.parse().map_err(err)?,
                "seed" => cfg.seed = parse_value(line, &key, value)?,
                "sweep" => cfg.sweep = value.parse().map_err(err)?,
                "values" => cfg.values = Some(split_list(value)),
                "mc" | "n_mc" => {
                    cfg.mc = parse_value(line, &key, value)?;
                    cfg.mc_explicit = true;
                }
                "methods" => {
                    cfg.methods = split_list(value)
                        .iter()
                        .map(|m| m.parse())
                        .collect::<Result<_>>()
                        .map_err(err)?
                }
                "fixed_combiner" => cfg.fixed_combiner = parse_bool(line, &key, value)?,
                "workers" => cfg.workers = parse_value(line, &key, value)?,
                "clkl.q_theta" => cfg.clkl.coarse_angles = Some(parse_value(line, &key, value)?),
                "clkl.q_theta_fine" => cfg.clkl.fine_angles = Some(parse_value(line, &key, value)?),
                "clkl.q_u_fine" => cfg.clkl.fine_curvatures = Some(parse_value(line, &key, value)?),
                "clkl.lambda" => cfg.clkl.sparsity = Some(parse_value(line, &key, value)?),
                "clkl.t_max" => cfg.clkl.max_iterations = Some(parse_value(line, &key, value)?),
                "clkl.tol" => cfg.clkl.rel_tolerance = Some(parse_value(line, &key, value)?),
                "clkl.beta_delta" => cfg.clkl.ring_beta = Some(parse_value(line, &key, value)?),
                "clkl.scan_passes" => cfg.clkl.scan_passes = Some(parse_value(line, &key, value)?),
                "clkl.starts" => {
                    cfg.clkl.starts = Some(match value.to_ascii_lowercase().as_str() {
                        "all" | "3" => StartSet::All,
                        "far" | "far_only" | "1" => StartSet::FarOnly,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!("clkl.starts expects 'all' or 'far', got '{value}'"),
                            })
                        }
                    })
                }
                "clkl.noise" => {
                    cfg.clkl.noise_mode = Some(match value.to_ascii_lowercase().as_str() {
                        "frozen" => NoiseMode::Frozen,
                        v => match v.strip_prefix("reestimate") {
                            Some(rest) => NoiseMode::Reestimate {
                                every: if rest.trim_start_matches(':').is_empty() {
                                    10
                                } else {
                                    parse_value(line, &key, rest.trim_start_matches(':'))?
                                },
                            },
                            None => {
                                return Err(Error::Parse {
                                    line,
                                    message: format!(
                                        "clkl.noise expects 'frozen' or 'reestimate[:k]', got '{value}'"
                                    ),
                                })
                            }
                        },
                    })
                }
                "clkl.init" => {
                    cfg.clkl.power_init = Some(match value.to_ascii_lowercase().as_str() {
                        "zero" => PowerInit::Zero,
                        "greedy" => PowerInit::Greedy,
                        _ => {
                            return Err(Error::Parse {
                                line,
                                message: format!("clkl.init expects 'zero' or 'greedy', got '{value}'"),
                            })
                        }
                    })
                }
                "clkl.whiten" => cfg.clkl.whiten = Some(parse_bool(line, &key, value)?),
                _ => {
                    return Err(Error::Parse {
                        line,
                        message: format!("unknown key '{key}'"),
                    })
                }
            }
        }
        cfg.scenario.array = ArrayConfig::new(carrier_hz, elements)?;
        cfg.scenario.seed = cfg.seed;
        cfg.scenario.validate()?;
        if cfg.mc == 0 {
            return Err(Error::InvalidConfig("mc must be at least 1".into()));
        }
        if cfg.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if cfg.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::SourceModel;

    #[test]
    fn empty_text_gives_defaults() {
        let c = HarnessConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c.scenario.array.elements(), 64);
        assert_eq!(c.scenario.rf_chains, 8);
        assert_eq!(c.mc, DEFAULT_MC);
        assert_eq!(c.seed, 42);
        assert_eq!(c.sweep, SweepVariable::Snr);
    }

    #[test]
    fn parses_table_keys() {
        let text = "M = 128\nN_RF=12 # comment\nd = 2\nsource_model = QPSK\nvalues = 1, 2,3\n\
                    clkl.noise = reestimate\nclkl.starts = far\nsweep = n_rf\nfixed_combiner = yes";
        let c = HarnessConfig::parse(text).unwrap();
        assert_eq!(c.scenario.array.elements(), 128);
        assert_eq!(c.scenario.rf_chains, 12);
        assert_eq!(c.scenario.paths, 2);
        assert_eq!(c.scenario.source_model, SourceModel::Qpsk);
        assert_eq!(c.values.as_deref(), Some(&["1".to_string(), "2".into(), "3".into()][..]));
        assert_eq!(c.clkl.noise_mode, Some(NoiseMode::Reestimate { every: 10 }));
        assert_eq!(c.clkl.starts, Some(StartSet::FarOnly));
        assert_eq!(c.sweep, SweepVariable::NRf);
        assert!(c.fixed_combiner);
    }

    #[test]
    fn reports_line_numbers() {
        match HarnessConfig::parse("M = 64\nbogus = 1") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(HarnessConfig::parse("N = many"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(HarnessConfig::parse("just text"), Err(Error::Parse { .. })));
        assert!(HarnessConfig::parse("N_RF = 100").is_err());
    }
}
