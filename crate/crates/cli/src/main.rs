mod builtins;
mod config;
mod experiments;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::{ConfigError, ExperimentConfig};
use experiments::Outcome;

#[derive(Parser)]
#[command(name = "logderiv", version, about = "Run log-derivative and path-integral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Override a config value by dotted key, e.g. `parameters.n_steps=32`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (defaults to the config's output_path, then `.`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the built-in Lagrangians, families and libraries.
    ListBuiltins {
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListBuiltins { json } => {
            let all = builtins::builtins();
            if json {
                println!("{}", serde_json::to_string_pretty(&all).expect("serializable"));
            } else {
                print!("{}", builtins::render_text(&all));
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            set,
            seed,
            workers,
            out,
        } => run(&config, &set, seed, workers, out),
    }
}

fn load(
    path: &Path,
    set: &[String],
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<(ExperimentConfig, experiments::Plan), ConfigError> {
    let mut cfg = ExperimentConfig::load(path, set)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        if w == 0 {
            return Err(ConfigError::Invalid("workers must be >= 1".into()));
        }
        cfg.workers = w;
    }
    let plan = experiments::prepare(&cfg)?;
    Ok((cfg, plan))
}

fn run(
    path: &Path,
    set: &[String],
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> ExitCode {
    let (cfg, plan) = match load(path, set, seed, workers) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let name = cfg.experiment.name();
    let start = Instant::now();
    let outcome = match plan() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{name} failed: {e}");
            return ExitCode::from(1);
        }
    };
    let wall_time = start.elapsed().as_secs_f64();
    let dir = out
        .or_else(|| cfg.output_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    if let Err(e) = write_outputs(&dir, &cfg, &outcome, wall_time) {
        eprintln!("cannot write results to {}: {e}", dir.display());
        return ExitCode::from(1);
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    println!("{name}: {} rows, {wall_time:.2} s", outcome.table.len());
    for a in &outcome.assertions {
        println!(
            "{} {}: {} {} {}",
            if a.passed { "PASS" } else { "FAIL" },
            a.name,
            table::format_float(a.value),
            a.relation,
            table::format_float(a.tolerance)
        );
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn write_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    outcome: &Outcome,
    wall_time: f64,
) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(dir)?;
    let name = cfg.experiment.name();
    outcome.table.write_csv(&dir.join(format!("{name}.csv")))?;
    let record = json!({
        "schema": config::SCHEMA_VERSION,
        "experiment": name,
        "config": cfg,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "passed": outcome.passed(),
        "assertions": outcome.assertions,
        "warnings": outcome.warnings,
        "columns": outcome.table.columns(),
        "rows": outcome.table.to_json(),
        "versions": {
            "logderiv": logderiv::VERSION,
            "logderiv-cli": env!("CARGO_PKG_VERSION"),
        },
        "wall_time_seconds": wall_time,
    });
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&record)? + "\n",
    )?;
    Ok(())
}
