use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nearfield_core::harness::config::FULL_MC;
use nearfield_core::harness::experiments::{
    ablation_spec, convergence_spec, crb_report, format_convergence, format_crb, format_runtime,
    maybe_write, run_convergence, runtime_spec, runtime_table, trace_path, write_crb, write_traces,
    SHORT_MC,
};
use nearfield_core::harness::sweep::{format_summary, run_sweep, summarize, run_trials, SweepSpec, SweepVariable};
use nearfield_core::harness::HarnessConfig;
use nearfield_core::Result;

#[derive(Parser)]
#[command(name = "nearfield", version, about = "Near-field channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Per-trial CSV output
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials per point
    #[arg(long, global = true)]
    mc: Option<usize>,
    /// Publication-size run (400 trials per point)
    #[arg(long, global = true)]
    full: bool,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Draw one combiner per sweep point instead of one per trial
    #[arg(long, global = true)]
    fixed_combiner: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one scenario variable
    Sweep {
        /// Overrides the config's sweep variable
        #[arg(long)]
        variable: Option<SweepVariable>,
        /// Comma-separated values; default is the variable's menu
        #[arg(long)]
        values: Option<String>,
    },
    /// CL-KL component ablation at -5, +5, +15 dB
    Ablation,
    /// Objective traces and noise-estimate ratios at -10, 0, 10, 20 dB
    Converge,
    /// Single-worker estimator timing over M
    Runtime,
    /// Median CRB for d = 1..5 at +10 dB
    Crb,
}

fn load(common: &Common) -> Result<HarnessConfig> {
    let mut cfg = match &common.config {
        Some(p) => HarnessConfig::from_file(p)?,
        None => HarnessConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w.max(1);
    }
    if common.fixed_combiner {
        cfg.fixed_combiner = true;
    }
    if let Some(n) = common.mc {
        cfg.mc = n;
        cfg.mc_explicit = true;
    } else if common.full {
        cfg.mc = FULL_MC;
        cfg.mc_explicit = true;
    }
    Ok(cfg)
}

fn announce(spec: &SweepSpec) {
    eprintln!(
        "{}: {} points x {} trials, seed {}, {} workers",
        spec.experiment,
        spec.points.len(),
        spec.mc,
        spec.seed,
        spec.workers
    );
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load(&cli.common)?;
    let out = cli.common.out.as_deref();
    match cli.command {
        Command::Sweep { variable, values } => {
            if let Some(v) = variable {
                cfg.sweep = v;
                if values.is_none() {
                    cfg.values = None;
                }
            }
            if let Some(v) = values {
                cfg.values = Some(v.split(',').map(|s| s.trim().to_string()).collect());
            }
            let spec = SweepSpec::from_config(&cfg)?;
            announce(&spec);
            let outcome = run_sweep(&spec, out)?;
            print!("{}", format_summary(&spec.variable, &outcome.summary));
        }
        Command::Ablation => {
            let spec = ablation_spec(&cfg);
            announce(&spec);
            let records: Vec<_> = run_trials(&spec)?.into_iter().map(|o| o.record).collect();
            maybe_write(out, &records)?;
            print!("{}", format_summary("snr", &summarize(&records)));
        }
        Command::Converge => {
            let spec = convergence_spec(&cfg);
            announce(&spec);
            let outcome = run_convergence(&spec)?;
            if let Some(p) = out {
                maybe_write(Some(p), &outcome.records)?;
                write_traces(&trace_path(p), &outcome.traces)?;
            }
            print!("{}", format_convergence(&outcome));
        }
        Command::Runtime => {
            let spec = runtime_spec(&cfg)?;
            announce(&spec);
            let records: Vec<_> = run_trials(&spec)?.into_iter().map(|o| o.record).collect();
            maybe_write(out, &records)?;
            print!("{}", format_runtime(&runtime_table(&records)));
        }
        Command::Crb => {
            let trials = if cfg.mc_explicit { cfg.mc } else { SHORT_MC };
            let rows = crb_report(&cfg, trials)?;
            if let Some(p) = out {
                write_crb(p, &rows)?;
            }
            print!("{}", format_crb(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
