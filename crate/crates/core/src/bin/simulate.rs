//! Experiment runner.
//!
//!   simulate <config> [--set k=v]... [--out dir] [--format csv|json|both] [--sweep param=v1,v2,...]
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.
//! The output directory defaults to `$WSN_MLC_OUT_DIR`, then `results`.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::warn;

use wsn_mlc::config::parse_config;
use wsn_mlc::experiment::{
    emit_csv, emit_json, emit_summary_csv, run_experiment, sweep, ExperimentTable, Statistic, SweepSpec,
};

const OUT_DIR_ENV: &str = "WSN_MLC_OUT_DIR";
const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Both,
}

#[derive(Debug, Parser)]
#[command(name = "simulate", about = "Multi-level clustering WSN lifetime experiments")]
struct Args {
    /// Configuration file of `key = value` lines.
    config: PathBuf,
    /// Override a configuration key; may repeat.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides $WSN_MLC_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Sweep one parameter: phi, cache_capacity, n or protocol.
    #[arg(long, value_name = "PARAM=V1,V2,...")]
    sweep: Option<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

fn print_summary(table: &ExperimentTable) {
    println!(
        "{:>10} {:>5} {:>9} {:>9} {:>9} {:>9}",
        table.parameter, "runs", "fnd", "hnd", "overhead", "hops"
    );
    for s in table.summary.iter().filter(|s| s.statistic == Statistic::Mean) {
        println!(
            "{:>10} {:>5} {:>9} {:>9} {:>9} {:>9}",
            s.param,
            s.runs,
            fmt_opt(s.fnd),
            fmt_opt(s.hnd),
            fmt_opt(s.overhead_ratio),
            fmt_opt(s.avg_hops)
        );
        if s.censored > 0 {
            println!("{:>10} {} run(s) hit the round cap", "", s.censored);
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();

    let text = match fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let parsed = match parse_config(&text) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for w in &parsed.warnings {
        warn!("{w}");
    }
    let mut config = parsed.config;
    for assignment in &args.set {
        if let Err(e) = config.apply_override(assignment) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let spec = match args.sweep.as_deref().map(str::parse::<SweepSpec>).transpose() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = &spec {
        if let Err(e) = s.validate(&config) {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }

    let result = match &spec {
        Some(s) => sweep(&config, s),
        None => run_experiment(&config),
    };
    let table = match result {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };

    let out = args
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let written = fs::create_dir_all(&out)
        .map_err(|e| format!("{}: {e}", out.display()))
        .and_then(|()| {
            let mut r = emit_summary_csv(&table, &out.join("summary.csv"));
            if matches!(args.format, Format::Csv | Format::Both) {
                r = r.and_then(|()| emit_csv(&table, &out.join("results.csv")));
            }
            if matches!(args.format, Format::Json | Format::Both) {
                r = r.and_then(|()| emit_json(&table, &out.join("results.json")));
            }
            r.map_err(|e| e.to_string())
        });
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_RUNTIME);
    }
    print_summary(&table);
    ExitCode::SUCCESS
}
