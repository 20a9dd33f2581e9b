use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use gradtd_harness::sweep::{self, SweepConfig};
use gradtd_harness::{plot, run, verify, ExperimentConfig, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "gradtd", version, about = "Run, sweep, plot and verify gradient TD experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct OutputArgs {
    /// Root directory for results; a config's own `output_dir` takes precedence.
    #[arg(long, env = "GRADTD_OUT", default_value = "results")]
    out: PathBuf,
    /// Replace existing result files instead of refusing to start.
    #[arg(long)]
    overwrite: bool,
    /// Seeds run concurrently; 1 runs them in order.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment config for each of its seeds.
    Run {
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Two-stage hyperparameter sweep over a grid file.
    Sweep {
        grid: PathBuf,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Write mean ± standard-error SVG curves for every metric under a results directory.
    Plot { dir: PathBuf },
    /// Run an invariant group: gradients, equivalence, oracle, baird, losses or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
    },
}

fn options(output: OutputArgs, seeds: Option<Vec<u64>>) -> RunOptions {
    RunOptions {
        out_root: output.out,
        overwrite: output.overwrite,
        workers: output.workers.max(1),
        seeds,
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

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, seeds, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let summary = run(&cfg, &options(output, seeds))?;
            for m in &summary.manifests {
                println!("seed {}: {:.0} steps/s, {:.2} s", m.seed, m.sps, m.wall_clock_s);
            }
            println!("wrote {}", summary.dir.display());
        }
        Command::Sweep { grid, output } => {
            let text = std::fs::read_to_string(&grid).with_context(|| format!("reading {}", grid.display()))?;
            let cfg = SweepConfig::from_json(&text)?;
            let report = sweep::sweep(&cfg, &options(output, None))?;
            let point: Vec<String> = report.points[report.winner].iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("winner: point {} {}", report.winner, point.join(" "));
            for s in &report.stage2 {
                println!(
                    "{}: mean auc {} ± {}, final {}",
                    s.env,
                    shown(s.mean_auc),
                    shown(s.stderr_auc),
                    shown(s.final_value)
                );
            }
            println!("wrote {}", report.output_dir.join("report.json").display());
        }
        Command::Plot { dir } => {
            for path in plot::plot(&dir)? {
                println!("wrote {}", path.display());
            }
        }
        Command::Verify { suite } => {
            let groups = verify::select(&suite)?;
            let (checks, text) = verify::run_groups(&groups)?;
            print!("{text}");
            let failed = checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {failed} failed", checks.len());
            if failed > 0 {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Missing values come from runs that logged nothing finite.
fn shown(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}
