use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fused::app::{self, exit_code, EXIT_CONFIG, EXIT_VERIFY_FAILED};
use fused::config::ExperimentConfig;
use fused::metrics::RunReport;
use fused::Result;

/// Federated unlearning with selective sparse adapters.
#[derive(Parser)]
#[command(name = "fused", version)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-client training. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain and rank layers by parameter drift.
    Identify,
    /// Run the full unlearning pipeline.
    Unlearn,
    /// Train the retraining oracle only.
    Retrain,
    /// Check that removing the adapters restores the original logits.
    Restore,
    /// Monte-Carlo check of the masked-update degradation formula.
    TheoryCheck,
    /// Server storage of adapter-based vs history-replay unlearning.
    StorageReport,
}

fn print_reports(reports: &[RunReport]) {
    println!("{}", RunReport::csv_header());
    for r in reports {
        println!("{}", r.to_csv_row());
    }
}

fn run(cli: &Cli, cfg: &ExperimentConfig) -> Result<bool> {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    match cli.command {
        Command::Identify => {
            print!("{}", app::cmd_identify(cfg, &out)?.to_csv());
        }
        Command::Unlearn => print_reports(&app::cmd_unlearn(cfg, &out)?),
        Command::Retrain => print_reports(&[app::cmd_retrain(cfg, &out)?]),
        Command::Restore => {
            let r = app::cmd_restore(&out)?;
            let verdict = if r.passed { "PASS" } else { "FAIL" };
            println!("{verdict} restore: {} probe samples, max_abs_diff={:?}", r.samples, r.max_abs_diff);
            return Ok(r.passed);
        }
        Command::TheoryCheck => {
            println!("{:>8} {:>6} {:>14} {:>14} {:>8}", "phi", "p", "predicted", "empirical", "z");
            for r in app::cmd_theory_check(cfg, &out)? {
                let c = r.check;
                println!(
                    "{:>8.4} {:>6.2} {:>14.6e} {:>14.6e} {:>8.3}",
                    r.phi, r.keep_rate, c.predicted, c.empirical_mean, c.z_score
                );
            }
        }
        Command::StorageReport => {
            println!("method,clients,rounds,storage_units");
            for r in app::cmd_storage_report(cfg, &out)? {
                println!("{},{},{},{}", r.method.name(), r.clients, r.rounds, r.units);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path),
        None => Ok(ExperimentConfig::default()),
    };
    let cfg = cfg.and_then(|mut c| {
        if let Some(seed) = cli.seed {
            c.seed = seed;
            c.validate()?;
        }
        Ok(c)
    });
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(n) = cli.workers {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("error: invalid configuration: cannot start {n} workers");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }
    match run(&cli, &cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY_FAILED as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
