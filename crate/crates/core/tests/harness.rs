use std::fs;

use nearfield_core::harness::config::HarnessConfig;
use nearfield_core::harness::experiments::{ablation_spec, convergence_spec, crb_report, run_convergence, runtime_spec};
use nearfield_core::harness::sweep::{
    read_records, run_guarded, run_sweep, summarize, Method, SweepSpec, SweepVariable, SCHEMA_VERSION,
};
use nearfield_core::Error;

fn small_config(text: &str) -> HarnessConfig {
    HarnessConfig::parse(&format!("mc = 3\nworkers = 1\nvalues = 0, 10\n{text}")).unwrap()
}

#[test]
fn csv_is_identical_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for workers in [1, 3, 1] {
        let mut cfg = small_config("");
        cfg.workers = workers;
        let spec = SweepSpec::from_config(&cfg).unwrap();
        let path = dir.path().join(format!("w{workers}_{}.csv", outputs.len()));
        run_sweep(&spec, Some(&path)).unwrap();
        outputs.push(fs::read(&path).unwrap());
    }
    assert!(!outputs[0].is_empty());
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn records_round_trip_and_are_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let spec = SweepSpec::from_config(&small_config("")).unwrap();
    let out = run_sweep(&spec, Some(&path)).unwrap();
    let back = read_records(&path).unwrap();
    assert_eq!(back.len(), 2 * 3 * 2);
    assert_eq!(back.len(), out.records.len());
    for (a, b) in back.iter().zip(&out.records) {
        assert_eq!(a.sweep_value, b.sweep_value);
        assert_eq!(a.trial, b.trial);
        assert_eq!(a.method, b.method);
        assert_eq!(a.schema_version, SCHEMA_VERSION);
        assert_eq!(a.nmse_db.to_bits(), b.nmse_db.to_bits());
        assert!(a.runtime_s.is_none());
    }
    let keys: Vec<(String, usize, String)> =
        back.iter().map(|r| (r.sweep_value.clone(), r.trial, r.method.clone())).collect();
    assert_eq!(keys[0], ("0".into(), 0, "clkl".into()));
    assert_eq!(keys[1], ("0".into(), 0, "psomp".into()));
    assert_eq!(keys[2], ("0".into(), 1, "clkl".into()));
    assert!(back.iter().all(|r| r.seed == 42 + r.trial as u64));
    assert!(back.iter().all(|r| r.error.is_empty()));
    // same seed ⇒ same truth ⇒ same CRB column for both methods
    assert_eq!(back[0].crb_theta_deg.to_bits(), back[1].crb_theta_deg.to_bits());
    let header = fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("schema_version,experiment,variant,sweep_variable,sweep_value,trial,seed,method"));
}

#[test]
fn summary_counts_cells() {
    let spec = SweepSpec::from_config(&small_config("")).unwrap();
    let out = run_sweep(&spec, None).unwrap();
    assert_eq!(out.summary.len(), 4);
    for row in &out.summary {
        assert_eq!(row.trials, 3);
        assert_eq!(row.errors, 0);
        assert!(row.mean_nmse_db.is_finite());
        assert!((0.0..=1.0).contains(&row.failure_rate));
        if row.method == "clkl" {
            assert_eq!(row.start_wins.iter().sum::<usize>(), 3);
            assert!(row.convergence_rate.is_finite());
        } else {
            assert!(row.convergence_rate.is_nan());
        }
    }
}

#[test]
fn estimator_errors_become_rows() {
    // d = N_RF leaves CL-KL no noise subspace; P-SOMP still runs
    let cfg = small_config("d = 8\nN_RF = 8\nvalues = 10");
    let spec = SweepSpec::from_config(&cfg).unwrap();
    let out = run_sweep(&spec, None).unwrap();
    let clkl: Vec<_> = out.records.iter().filter(|r| r.method == "clkl").collect();
    let psomp: Vec<_> = out.records.iter().filter(|r| r.method == "psomp").collect();
    assert_eq!(clkl.len(), 3);
    assert!(clkl.iter().all(|r| !r.error.is_empty() && r.nmse.is_nan()));
    assert!(psomp.iter().all(|r| r.error.is_empty() && r.nmse.is_finite()));
    let rows = summarize(&out.records);
    assert_eq!(rows.iter().find(|r| r.method == "clkl").unwrap().errors, 3);
}

#[test]
fn panics_are_contained() {
    let r: Result<(), String> = run_guarded(|| panic!("boom"));
    assert_eq!(r.unwrap_err(), "panic: boom");
    let r: Result<u8, String> = run_guarded(|| Err(Error::ZeroChannel));
    assert!(r.unwrap_err().contains("zero"));
    assert_eq!(run_guarded(|| Ok(7)).unwrap(), 7);
}

#[test]
fn fixed_combiner_is_shared_across_trials() {
    let cfg = small_config("fixed_combiner = true\nmethods = clkl\nvalues = 10");
    let spec = SweepSpec::from_config(&cfg).unwrap();
    let out = run_sweep(&spec, None).unwrap();
    assert!(out.records.iter().all(|r| r.fixed_combiner));
    let free = SweepSpec::from_config(&small_config("methods = clkl\nvalues = 10")).unwrap();
    let out_free = run_sweep(&free, None).unwrap();
    assert_ne!(
        out.records.iter().map(|r| r.nmse.to_bits()).collect::<Vec<_>>(),
        out_free.records.iter().map(|r| r.nmse.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn sweep_variables_parse_and_apply() {
    let base = HarnessConfig::default().scenario;
    for (name, var) in [
        ("snr", SweepVariable::Snr),
        ("n_rf", SweepVariable::NRf),
        ("n_snapshots", SweepVariable::Snapshots),
        ("d", SweepVariable::Paths),
        ("range_max_frac", SweepVariable::RangeMaxFrac),
        ("m_elements", SweepVariable::Elements),
        ("source_model", SweepVariable::SourceModel),
        ("truth_model", SweepVariable::TruthModel),
    ] {
        assert_eq!(name.parse::<SweepVariable>().unwrap(), var);
        for v in var.default_values() {
            var.apply(&base, &v).unwrap();
        }
    }
    assert_eq!(SweepVariable::Elements.apply(&base, "128").unwrap().array.elements(), 128);
    assert_eq!(SweepVariable::NRf.apply(&base, "16").unwrap().rf_chains, 16);
    assert!(SweepVariable::Snr.apply(&base, "loud").is_err());
    assert!("bogus".parse::<SweepVariable>().is_err());
    assert_eq!("P-SOMP".parse::<Method>().unwrap(), Method::Psomp);
    assert!("music".parse::<Method>().is_err());
}

#[test]
fn bad_config_lines_are_reported() {
    match HarnessConfig::parse("mc = 3\nbogus = 1\n") {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("unexpected {other:?}"),
    }
    assert!(HarnessConfig::parse("mc = 0").is_err());
    assert!(HarnessConfig::parse("d 3").is_err());
    assert!(HarnessConfig::parse("methods = clkl, nope").is_err());
    let c = HarnessConfig::parse("clkl.noise = reestimate:5\nclkl.init = greedy\nclkl.whiten = off").unwrap();
    let clkl = c.clkl.apply(&c.scenario);
    assert_eq!(clkl.noise_mode, nearfield_core::clkl::NoiseMode::Reestimate { every: 5 });
    assert_eq!(clkl.power_init, nearfield_core::clkl::PowerInit::Greedy);
    assert!(!clkl.whiten);
}

#[test]
fn config_file_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(&path, "# desk run\nM = 32\nmc = 2\nseed = 9\n").unwrap();
    let c = HarnessConfig::from_file(&path).unwrap();
    assert_eq!(c.scenario.array.elements(), 32);
    assert_eq!(c.seed, 9);
    assert!(HarnessConfig::from_file(&dir.path().join("missing.cfg")).is_err());
}

#[test]
fn experiment_plans_have_expected_shape() {
    let cfg = HarnessConfig::parse("mc = 2\nworkers = 1").unwrap();
    let a = ablation_spec(&cfg);
    assert_eq!(a.points.len(), 12);
    assert_eq!(a.methods, vec![Method::Clkl]);
    assert!(a.points.iter().any(|p| p.variant == "no_scan" && p.clkl.scan_passes == 0));
    let r = runtime_spec(&cfg).unwrap();
    assert_eq!(r.workers, 1);
    assert!(r.record_runtime);
    assert_eq!(
        r.points.iter().map(|p| p.scenario.array.elements()).collect::<Vec<_>>(),
        vec![32, 64, 128, 256]
    );
    let conv = run_convergence(&convergence_spec(&cfg)).unwrap();
    assert_eq!(conv.records.len(), 8);
    assert!(!conv.traces.is_empty());
    assert!(conv.traces.iter().filter(|t| t.iteration == 1).all(|t| t.delta == 0.0));
    let crb = crb_report(&cfg, 3).unwrap();
    assert_eq!(crb.iter().map(|c| c.paths).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    let default_mc = HarnessConfig::parse("workers = 1").unwrap();
    assert_eq!(ablation_spec(&default_mc).mc, 50);
}
