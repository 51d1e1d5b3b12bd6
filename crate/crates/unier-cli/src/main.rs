//! Command-line driver for the benchmark engine.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/config error, 3 runtime
//! failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use unier::data::{self, DataError};
use unier::harness::{self, fixtures, ExperimentConfig, HarnessError, ALL_FORMATS};
use unier::sim::fit_bkt;

#[derive(Parser)]
#[command(
    name = "unier",
    version,
    about = "Benchmark engine for exercise recommendation over a simulated student model"
)]
struct Cli {
    /// Cap on per-student evaluation parallelism (overrides the config).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset bundle from a config's generator section
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a dataset bundle from raw CSV files
    Ingest {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        qmatrix: PathBuf,
        #[arg(long)]
        prereqs: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a perturbation protocol to a bundle
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        /// sparsity, coldstart, or noise
        #[arg(long)]
        kind: String,
        /// Keep ratio, max history length, or flip ratio
        #[arg(long)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit knowledge-tracing parameters on a bundle's logs
    Fit {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one configured method and save the agent
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full benchmark and write reports
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random hyperparameter search for one method
    Search {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure one method's train/inference cost
    Profile {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        method: String,
    },
    /// Re-render reports from a results.json
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named end-to-end fixture and print pass/fail per check
    Repro {
        #[arg(long)]
        fixture: String,
    },
}

enum CliError {
    Data(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Io { .. }
            | HarnessError::BadFile { .. }
            | HarnessError::Config(_)
            | HarnessError::Data(_)
            | HarnessError::Core(_) => CliError::Data(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<unier::sim::SimError> for CliError {
    fn from(e: unier::sim::SimError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn write_json(path: &PathBuf, contents: String) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_config(path: &PathBuf, jobs: Option<usize>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(j) = jobs {
        cfg.jobs = j.max(1);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth { config, out } => {
            let cfg = load_config(&config, cli.jobs)?;
            let sc = cfg.dataset.synthetic.as_ref().ok_or_else(|| {
                CliError::Data("config has no [dataset.synthetic] section".into())
            })?;
            let (dataset, _) = data::synth_generate(sc)?;
            data::write_bundle(&dataset, &out)?;
            println!("wrote bundle to {}", out.display());
        }
        Command::Ingest { logs, qmatrix, prereqs, out } => {
            let dataset = data::ingest(&logs, &qmatrix, prereqs.as_deref())?;
            data::write_bundle(&dataset, &out)?;
            println!(
                "ingested {} students, {} exercises, {} concepts -> {}",
                dataset.n_students(),
                dataset.q.n_exercises(),
                dataset.q.n_concepts(),
                out.display()
            );
        }
        Command::Perturb { input, kind, level, seed, out } => {
            let dataset = data::load_bundle(&input)?;
            let perturbed = match kind.as_str() {
                "sparsity" => data::perturb_sparsity(&dataset, level, seed)?,
                "coldstart" => data::perturb_coldstart(&dataset, level as usize)?,
                "noise" => data::perturb_noise(&dataset, level, seed)?,
                other => {
                    return Err(CliError::Data(format!(
                        "unknown perturbation kind '{other}' (sparsity, coldstart, noise)"
                    )))
                }
            };
            data::write_bundle(&perturbed, &out)?;
            println!("wrote {kind} {level} variant to {}", out.display());
        }
        Command::Fit { input, out } => {
            let dataset = data::load_bundle(&input)?;
            let params = fit_bkt(&dataset.logs, &dataset.q)?;
            write_json(&out, serde_json::to_string_pretty(&params).expect("params serialize"))?;
            println!(
                "fitted parameters for {} concepts -> {}",
                dataset.q.n_concepts(),
                out.display()
            );
        }
        Command::Train { config, method, out } => {
            let cfg = load_config(&config, cli.jobs)?;
            let agent = harness::train_method(&cfg, &method)?;
            write_json(&out, serde_json::to_string_pretty(&agent).expect("agents serialize"))?;
            println!("trained {method} -> {}", out.display());
        }
        Command::Evaluate { config, out } => {
            let cfg = load_config(&config, cli.jobs)?;
            let rows = harness::run_experiment(&cfg)?;
            let files = harness::write_report(&rows, &out, &ALL_FORMATS)?;
            for f in [files.csv, files.json, files.markdown].into_iter().flatten() {
                println!("wrote {}", f.display());
            }
        }
        Command::Search { config, method, trials, out } => {
            let cfg = load_config(&config, cli.jobs)?;
            let outcome = harness::search_method(&cfg, &method, trials)?;
            println!(
                "best trial {} of {}: objective {}",
                outcome.best.index, outcome.trials_run, outcome.best.objective
            );
            write_json(&out, serde_json::to_string_pretty(&outcome).expect("outcome serializes"))?;
        }
        Command::Profile { config, method } => {
            let mut cfg = load_config(&config, cli.jobs)?;
            cfg.method(&method)?;
            cfg.methods.retain(|m| m.label() == method);
            cfg.profile = true;
            let rows = harness::run_experiment(&cfg)?;
            println!("method,variant,task,train_time_s,infer_time_s,peak_memory_bytes");
            for r in &rows {
                println!(
                    "{},{},{},{:.4},{:.4},{}",
                    r.method,
                    r.variant,
                    r.task,
                    r.train_time_s,
                    r.infer_time_s,
                    r.peak_memory_bytes
                        .map(|m| m.to_string())
                        .unwrap_or_else(|| "unavailable".into())
                );
            }
        }
        Command::Report { input, out } => {
            let rows = harness::read_results_json(&input)?;
            let files = harness::write_report(&rows, &out, &ALL_FORMATS)?;
            for f in [files.csv, files.json, files.markdown].into_iter().flatten() {
                println!("wrote {}", f.display());
            }
        }
        Command::Repro { fixture } => {
            let results = fixtures::run_fixture(&fixture)?;
            let mut all_pass = true;
            for r in &results {
                println!("[{}] {} — {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
                all_pass &= r.pass;
            }
            if !all_pass {
                return Err(CliError::Runtime(format!("fixture '{fixture}' has failing checks")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
