use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use rdms_core::experiment::{
    build_model, compare_reports, run_experiment, run_sweep, ErrorRow, ExperimentConfig, ExperimentReport, Setup,
};
use rdms_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rdms", version, about = "Competing-species reaction-diffusion experiments")]
struct Cli {
    /// More log output (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Build the multiscale basis only and serialize it.
    Basis {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiscale errors against the fine solution for several basis counts.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,6,8")]
        basis: Vec<usize>,
    },
    /// Compare two report.json files.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config } => run(&config),
        Command::Basis { config, out } => basis(&config, &out),
        Command::Sweep { config, basis } => sweep(&config, &basis),
        Command::Compare { a, b } => compare(&a, &b),
    }
}

fn percent(errors: &[f64]) -> String {
    errors.iter().map(|e| format!("{:.4}%", 100.0 * e)).collect::<Vec<_>>().join(" ")
}

fn run(path: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(path)?;
    info!("running {} with {}", cfg.label(), cfg.scheme);
    let report = run_experiment(&cfg)?;
    println!("{} {} dof={} tau={} steps={}", report.label, report.scheme, report.dof, report.tau, report.n_steps);
    if let Some(last) = report.final_averages() {
        for (k, (m, c)) in last.background.iter().zip(&last.inclusion).enumerate() {
            let show = |v: &Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"));
            println!("u{}: mean_m={} mean_c={}", k + 1, show(m), show(c));
        }
    }
    if let Some(errors) = &report.errors {
        println!("errors: {}", percent(errors));
    }
    println!(
        "newton={} linear={} offline={:.3}s online={:.3}s",
        report.newton_iterations, report.linear_iterations, report.offline_time, report.online_time
    );
    if let Some(dir) = &cfg.output_dir {
        println!("outputs in {}", dir.display());
    }
    Ok(())
}

fn basis(path: &Path, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::from_file(path)?;
    let setup = Setup::new(&cfg)?;
    let count = cfg.resolved_basis_count();
    let (model, elapsed) = build_model(&setup, count)?;
    model.save(out)?;
    println!("M={} dof={} offline={:.3}s -> {}", count, model.dof(), elapsed, out.display());
    Ok(())
}

fn sweep(path: &Path, counts: &[usize]) -> Result<()> {
    let cfg = ExperimentConfig::from_file(path)?;
    let report = run_sweep(&cfg, counts)?;
    println!("{:<6} {:>3} {:>10} {:>10} {:>8} {:>10} {:>10}", "scheme", "M", "e_1", "e_2", "DOF", "offline", "online");
    for row in &report.rows {
        print_row(row);
    }
    Ok(())
}

fn print_row(row: &ErrorRow) {
    let m = row.basis_count.map_or_else(String::new, |m| m.to_string());
    let e = |k: usize| {
        row.errors.as_ref().and_then(|e| e.get(k)).map_or_else(String::new, |x| format!("{:.4}%", 100.0 * x))
    };
    println!(
        "{:<6} {:>3} {:>10} {:>10} {:>8} {:>9.3}s {:>9.3}s",
        row.scheme.label(),
        m,
        e(0),
        e(1),
        row.dof,
        row.offline_time,
        row.online_time
    );
}

fn read_report(path: &Path) -> Result<ExperimentReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn compare(a: &Path, b: &Path) -> Result<()> {
    let (ra, rb) = (read_report(a)?, read_report(b)?);
    let cmp = compare_reports(&ra, &rb)?;
    println!("{} ({}) vs {} ({})", ra.label, ra.scheme, rb.label, rb.scheme);
    println!("errors: {}", percent(&cmp.errors));
    println!("max average difference: {:.3e}", cmp.max_average_difference);
    Ok(())
}
