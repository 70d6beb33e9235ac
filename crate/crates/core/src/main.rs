use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use linbandit::dataset::load_dataset;
use linbandit::environments::dataset_self_consistency;
use linbandit::harness::aggregate::terminal_rows;
use linbandit::harness::run::apply_overrides;
use linbandit::harness::{run_and_emit, verify_dir, ExperimentConfig, RunOverrides};
use linbandit::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_RUN: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "linbandit", version, about = "Linear bandit experiments with data-driven regret bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces, aggregate and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long = "geometry-every")]
        geometry_every: Option<usize>,
    },
    /// Recompute the regret bound for every run in an output directory.
    Verify {
        #[arg(long)]
        traces: PathBuf,
    },
    /// Validate a classification CSV and report bandit self-consistency.
    DatasetCheck {
        #[arg(long)]
        csv: PathBuf,
    },
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => EXIT_IO,
        Error::Config(_) | Error::InvalidArgument(_) | Error::Parse { .. } | Error::InvalidDataset(_) => EXIT_CONFIG,
        _ => EXIT_RUN,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_for(&e))
}

fn cmd_run(config: PathBuf, out: PathBuf, overrides: RunOverrides) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Err(e) = apply_overrides(&mut cfg, &overrides) {
        return fail(e);
    }
    let (result, manifest) = match run_and_emit(&cfg, overrides.threads, &out) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    println!(
        "{} runs ({} policies x {} replicates, T = {}) in {:.2}s -> {}",
        result.traces.len(),
        result.labels.len(),
        result.replicates,
        manifest.horizon,
        manifest.elapsed_seconds,
        out.display()
    );
    for row in terminal_rows(&result.aggregate) {
        println!(
            "  {:<16} R(T) = {:>12.3} ± {:<10.3} OFUL fraction = {:.3}",
            row.policy,
            row.mean_cum_regret,
            2.0 * row.se_cum_regret,
            row.oful_fraction
        );
    }
    let failed = result.failed_runs();
    if failed > 0 {
        for tr in result.traces.iter().filter(|t| t.summary.failed.is_some()) {
            eprintln!("run {} ({}) failed: {}", tr.summary.run_id, tr.summary.policy, tr.summary.failed.as_deref().unwrap_or(""));
        }
        return ExitCode::from(EXIT_RUN);
    }
    ExitCode::SUCCESS
}

fn cmd_verify(dir: PathBuf) -> ExitCode {
    let report = match verify_dir(&dir) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    for (policy, pass, total) in report.by_policy() {
        println!("{policy:<16} {pass}/{total} runs within bound");
    }
    println!(
        "overall pass fraction {:.4} over {} runs ({} without a bound, {} failed runs skipped, {} prefix-sum mismatches)",
        report.pass_fraction(),
        report.checked(),
        report.runs.len() - report.checked(),
        report.skipped_failed,
        report.prefix_failures()
    );
    if report.prefix_failures() > 0 {
        return ExitCode::from(EXIT_RUN);
    }
    ExitCode::SUCCESS
}

fn cmd_dataset_check(csv: PathBuf) -> ExitCode {
    let ds = match load_dataset(&csv) {
        Ok(d) => d,
        Err(e) => return fail(e),
    };
    println!("rows {}  features {}  classes {}", ds.rows(), ds.num_features(), ds.classes);
    println!("class counts {:?}", ds.class_counts());
    match dataset_self_consistency(&ds) {
        Ok(sc) => {
            println!("classifier training accuracy {:.4}", sc.classifier_accuracy);
            println!("bandit best-action agreement {:.4}", sc.bandit_agreement);
            if sc.passes() {
                println!("self-consistency: PASS");
                ExitCode::SUCCESS
            } else {
                println!("self-consistency: FAIL");
                ExitCode::from(EXIT_RUN)
            }
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, runs, seed, threads, geometry_every } => {
            cmd_run(config, out, RunOverrides { replicates: runs, seed, threads, geometry_every })
        }
        Command::Verify { traces } => cmd_verify(traces),
        Command::DatasetCheck { csv } => cmd_dataset_check(csv),
    }
}
