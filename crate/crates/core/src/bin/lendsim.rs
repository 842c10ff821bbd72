use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lendsim::harness::{self, ScenarioConfig, Status, DEFAULT_BOUND_GRID};
use lendsim::metrics::{ScalingFit, BASIS_LABELS};
use lendsim::Error;

#[derive(Parser)]
#[command(name = "lendsim", version, about = "Lending-market revenue and regret simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML, schema version 1).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the file's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its artifacts.
    Run {
        #[command(flatten)]
        common: Common,
        /// Add exact rational results (pooled fixed-interest examples).
        #[arg(long)]
        exact: bool,
    },
    /// Run the scenario across a horizon grid and fit the regret scaling.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated horizons.
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<u64>>,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Compare the closed-form examples with simulation.
    Reproduce {
        /// Example id: 1, 2 or 3.
        example: u8,
        #[arg(long, default_value_t = 100)]
        horizon: u64,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the scenario against the modelling assumptions.
    Validate {
        #[command(flatten)]
        common: Common,
    },
    /// Classical regret bounds from the scenario's loss curvature.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<u64>>,
    },
    /// Fit the regret scaling of a two-column CSV (horizon, regret).
    Fit {
        input: PathBuf,
    },
}

fn load(common: &Common) -> lendsim::Result<(ScenarioConfig, PathBuf)> {
    let mut cfg = ScenarioConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let out = common.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    Ok((cfg, out))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> lendsim::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    serde_json::to_writer_pretty(BufWriter::new(File::create(path)?), value)?;
    Ok(())
}

fn print_fit(fit: &ScalingFit) {
    println!("{:<12} {:>14}", "term", "coefficient");
    for (label, c) in BASIS_LABELS.iter().zip(&fit.coefficients) {
        println!("{label:<12} {c:>14.6e}");
    }
    println!("dominant: {}  residual: {:.3e}", fit.dominant, fit.residual_norm);
}

fn execute(cli: Cli) -> lendsim::Result<bool> {
    match cli.command {
        Command::Run { common, exact } => {
            let (cfg, out) = load(&common)?;
            let outcome = harness::run_to_dir(&cfg, &out, exact)?;
            println!(
                "revenue {:.9}  benchmark {:.9}  regret {:.9}",
                outcome.revenue(),
                outcome.benchmark(),
                outcome.regret()
            );
            if let harness::RunOutcome::Single { report, .. } = &outcome {
                if let Some(e) = &report.exact {
                    println!("exact: revenue {}  benchmark {}  regret {}", e.r_alg, e.r_star, e.regret);
                }
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
            }
            println!("artifacts in {}", out.display());
            Ok(true)
        }
        Command::Sweep { common, t_grid, reps } => {
            let (cfg, out) = load(&common)?;
            let grid = t_grid.or_else(|| cfg.metrics.t_grid.clone()).ok_or_else(|| Error::Config {
                path: "metrics.t_grid".into(),
                message: "no horizon grid given".into(),
            })?;
            let report = harness::sweep(&cfg, &grid, reps.unwrap_or(cfg.metrics.reps))?;
            std::fs::create_dir_all(&out)?;
            report.write_cells(BufWriter::new(File::create(out.join("sweep_cells.csv"))?))?;
            report.write_medians(BufWriter::new(File::create(out.join("sweep.csv"))?))?;
            write_json(&out.join("sweep.json"), &report)?;
            println!("{:>10} {:>16}", "T", "median regret");
            for (t, m) in report.grid.iter().zip(&report.medians) {
                println!("{t:>10} {m:>16.6}");
            }
            print_fit(&report.fit);
            Ok(true)
        }
        Command::Reproduce { example, horizon, delta, exact, out } => {
            let table = harness::reproduce(example, horizon, delta, exact)?;
            println!("{table}");
            if let Some(dir) = out {
                write_json(&dir.join(format!("reproduce_{example}.json")), &table)?;
            }
            Ok(table.pass)
        }
        Command::Validate { common } => {
            let (cfg, out) = load(&common)?;
            let checks = harness::validate_scenario(&cfg)?;
            for c in &checks {
                let s = match c.status {
                    Status::Pass => "pass",
                    Status::Fail => "FAIL",
                    Status::NotApplicable => "n/a",
                };
                println!("{:>2} {:<18} {:<5} {}", c.id, c.assumption, s, c.detail);
            }
            write_json(&out.join(&cfg.output.assumptions), &checks)?;
            Ok(true)
        }
        Command::Bounds { common, t_grid } => {
            let (cfg, out) = load(&common)?;
            let grid = t_grid.unwrap_or_else(|| DEFAULT_BOUND_GRID.to_vec());
            let b = harness::bounds(&cfg, &grid)?;
            println!("{}: mu {:.6e}  G {:.6e}  diameter {:.6}", b.loss, b.mu, b.g, b.diameter);
            println!("{:>10} {:>14} {:>14} {:>14}", "T", "log-regret", "sqrt-regret", "dynamic");
            for r in &b.rows {
                let d = r.besbes.map_or("-".into(), |v| format!("{v:.6e}"));
                println!("{:>10} {:>14.6e} {:>14.6e} {:>14}", r.t, r.hazan, r.zinkevich, d);
            }
            write_json(&out.join("bounds.json"), &b)?;
            Ok(true)
        }
        Command::Fit { input } => {
            let fit = harness::fit_table(File::open(&input)?)?;
            print_fit(&fit);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e @ Error::Config { .. }) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
