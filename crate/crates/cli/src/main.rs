use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use siggame_core::harness::{self, gradcheck, RunConfig, RunSummary, SweepSummary};
use siggame_core::metrics::Equilibrium;

#[derive(Parser)]
#[command(
    name = "siggame",
    version,
    about = "Adversarial signaling game experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one seed of one experiment and write its output files.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Suppress per-iteration progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Run the finite-difference gradient suite; exits nonzero on failure.
    Gradcheck {
        #[arg(long, default_value_t = gradcheck::SEEDS)]
        seeds: u64,
        #[arg(long, default_value_t = gradcheck::EPSILON)]
        eps: f64,
        #[arg(long, default_value_t = gradcheck::TOLERANCE)]
        tol: f64,
    },
    /// Print the summary and equilibrium label of finished runs.
    Report {
        /// A run directory, or a directory whose subdirectories are runs.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run seeds `first-seed .. first-seed + seeds` of one experiment.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 1)]
        first_seed: u64,
        /// Concurrent runs; defaults to the number of available cores.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment id, 1-7.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    experiment: u8,
    /// Training iterations T (overrides the config file).
    #[arg(long)]
    iterations: Option<usize>,
    /// Rounds per iteration N (overrides the config file).
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// TOML file overriding game and training settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(harness::ExperimentSpec, RunConfig)> {
        let spec = harness::experiment(self.experiment)?;
        let mut cfg = RunConfig::for_experiment(&spec);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(t) = self.iterations {
            cfg.game.iterations = t;
        }
        if let Some(n) = self.batch {
            cfg.game.batch_size = n;
        }
        cfg.validate()?;
        Ok((spec, cfg))
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run {
            common,
            seed,
            quiet,
        } => {
            let (spec, cfg) = common.resolve()?;
            let total = cfg.game.iterations;
            let step = (total / 20).max(1);
            let summary = harness::run_observed(&spec, &cfg, seed, &common.out, |row| {
                let t = row.iteration as usize;
                if !quiet && (t.is_multiple_of(step) || t + 1 == total) {
                    eprintln!(
                        "iter {t:>6}  acc {:.3}  r_I {:.3}  H_blue {:.2}  H_red {:.2}  MI {:.3}",
                        row.accuracy,
                        row.reward_interrogator,
                        row.entropy_blue,
                        row.entropy_red,
                        row.mutual_information
                    );
                }
            })
            .with_context(|| format!("experiment {} seed {seed}", spec.id))?;
            print_run(&summary);
            println!("wrote {}", common.out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seeds, eps, tol } => {
            let reports = harness::gradcheck_suite(seeds, eps)?;
            let mut ok = true;
            for r in &reports {
                let pass = r.passes(tol);
                ok &= pass;
                println!(
                    "{:<4} {:<24} max rel error {:.3e} (worst seed {}, {} entries)",
                    if pass { "ok" } else { "FAIL" },
                    r.name,
                    r.max_rel_error,
                    r.worst_seed,
                    r.checked
                );
            }
            println!(
                "gradcheck {} (eps {eps:e}, tol {tol:e}, {seeds} seeds)",
                if ok { "passed" } else { "FAILED" }
            );
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Command::Report { input } => {
            report(&input)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            common,
            seeds,
            first_seed,
            jobs,
        } => {
            let (spec, cfg) = common.resolve()?;
            let seed_list: Vec<u64> = (first_seed..first_seed + seeds).collect();
            let jobs =
                jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let (sweep, runs) = harness::sweep(&spec, &cfg, &seed_list, &common.out, jobs)?;
            for r in &runs {
                print_run(r);
            }
            print_sweep(&sweep);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn print_run(s: &RunSummary) {
    let w = &s.window_stats;
    println!(
        "experiment {} ({}) seed {}: {} at accuracy {:.3} over the last {} iterations \
         [expected {}{}]  H_blue {:.2}  H_red {:.2}  MI {:.3}",
        s.experiment.id,
        s.experiment.name,
        s.seed,
        s.label.kind,
        s.label.accuracy,
        s.window_iterations,
        s.experiment.expected,
        if s.matches_expected { "" } else { ", MISMATCH" },
        w.entropy_blue,
        w.entropy_red,
        w.mutual_information,
    );
}

fn print_sweep(s: &SweepSummary) {
    let count = |k: Equilibrium| s.runs.iter().filter(|r| r.label.kind == k).count();
    println!(
        "experiment {} ({}): majority {} ({} pooling, {} separating, {} undetermined) [expected {}{}]",
        s.experiment.id,
        s.experiment.name,
        s.verdict,
        count(Equilibrium::Pooling),
        count(Equilibrium::Separating),
        count(Equilibrium::Undetermined),
        s.experiment.expected,
        if s.matches_expected { "" } else { ", MISMATCH" },
    );
}

fn report(dir: &Path) -> Result<()> {
    let runs = harness::collect_summaries(dir)?;
    for r in &runs {
        print_run(r);
    }
    let mut ids: Vec<u8> = runs.iter().map(|r| r.experiment.id).collect();
    ids.dedup();
    for id in ids {
        let group: Vec<RunSummary> = runs
            .iter()
            .filter(|r| r.experiment.id == id)
            .cloned()
            .collect();
        if group.len() > 1 {
            print_sweep(&SweepSummary::from_runs(
                group[0].experiment.clone(),
                &group,
            ));
        }
    }
    Ok(())
}
