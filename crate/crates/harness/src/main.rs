use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use purl_core::{Error, Result};
use purl_harness::chart::{emit_chart, ChartInput};
use purl_harness::config::ExperimentConfig;
use purl_harness::experiment::run_experiment;
use purl_harness::gap::{domain_gap_study, Family, GAP_METHODS};
use purl_harness::metrics::{AggregateRow, AGGREGATE_COLUMNS};
use purl_harness::pubench::run_suite;
use purl_harness::sweep::{sweep, SweepParam, SweepSpec};

#[derive(Parser)]
#[command(name = "purl", about = "Positive-unlabeled reward learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment over all seeds.
    Run(Common),
    /// Run the experiment at every value of a class-prior or slack grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept parameter: eta or beta.
        #[arg(long, default_value = "eta")]
        param: SweepParam,
        /// Comma-separated grid.
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.3, 0.5, 0.7, 0.9])]
        values: Vec<f64>,
    },
    /// Compare GAIL, NNPUGAIL, PNRL and NNPURL with and without the domain gap.
    Gap(Common),
    /// Statistical checks of the PU risk estimators.
    Pubench {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for pubench.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Line chart of CSV columns with confidence bands where available.
    Plot {
        /// Aggregate or metrics CSVs, one series group each.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "step")]
        x: String,
        /// Comma-separated y columns.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        /// Output SVG file.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Flat JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds.
    #[arg(long)]
    seeds: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Environment (or discriminator) step budget.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        match (self.seed, self.seeds) {
            (Some(s), Some(n)) => config.seeds = (s..s + n).collect(),
            (Some(s), None) => config.seeds = vec![s],
            (None, Some(n)) => config.seeds = (0..n).collect(),
            (None, None) => {}
        }
        if let Some(steps) = self.steps {
            config.purl.steps = steps;
        }
        config.validate()?;
        Ok(config)
    }
}

fn print_final(row: Option<&AggregateRow>) {
    if let Some(last) = row {
        for c in AGGREGATE_COLUMNS {
            if let Some(s) = last.get(c) {
                println!("{c:>24} {:>10.4}  [{:.4}, {:.4}]", s.mean, s.lo, s.hi);
            }
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let config = args.resolve()?;
            let result = run_experiment(&config, Some(&args.out))?;
            print_final(result.final_row());
        }
        Command::Sweep { common, param, values } => {
            let spec = SweepSpec { param, values, base: common.resolve()? };
            for point in sweep(&spec, Some(&common.out))? {
                println!("{param} = {}", point.value);
                print_final(point.result.final_row());
            }
        }
        Command::Gap(args) => {
            let base = args.resolve()?;
            let study = domain_gap_study(&base, &GAP_METHODS, Some(&args.out))?;
            println!("{:>12} {:>10} {:>10} {:>10} {:>10}", "method", "no gap", "gap", "drop", "retention");
            for arm in &study.arms {
                let (off, on) = arm.returns();
                println!("{:>12} {off:>10.4} {on:>10.4} {:>10.4} {:>10.4}", arm.method.to_string(), arm.drop(), arm.retention());
            }
            for f in [Family::Pn, Family::NnPu] {
                println!("{:>12} drop {:.4}", format!("{}-family", f.name()), study.family_drop(f));
            }
        }
        Command::Pubench { seed, out } => {
            let lines = run_suite(seed)?;
            for l in &lines {
                println!("{} {:<14} {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                let mut w = csv::Writer::from_path(dir.join("pubench.csv"))?;
                w.write_record(["check", "passed", "detail"])?;
                for l in &lines {
                    w.write_record([l.name, if l.passed { "true" } else { "false" }, &l.detail])?;
                }
                w.flush()?;
            }
        }
        Command::Plot { inputs, x, y, out } => {
            let inputs: Vec<ChartInput> = inputs.iter().map(|p| ChartInput::from_path(p)).collect();
            let ys: Vec<&str> = y.iter().map(String::as_str).collect();
            emit_chart(&inputs, &x, &ys, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Usage(_) | Error::Parse(_) => 2,
                Error::Training { .. } => 3,
                Error::Io(_) => 1,
            })
        }
    }
}
