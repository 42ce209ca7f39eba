use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pairwise_cl::data::{fetch_datasets, DatasetKind};
use pairwise_cl::harness::{density_sweep, reaggregate, run_experiment, ExperimentConfig, Report};

#[derive(Parser)]
#[command(name = "pairwise-cl", about = "Continual-learning benchmark engine", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the number of seeded runs.
        #[arg(long)]
        runs: Option<usize>,
        /// Override the master seed.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the dataset directory.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Re-run an experiment across k-WTA density values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated density percentages, e.g. 5,10,20,40,70.
        #[arg(long, value_delimiter = ',')]
        densities: Vec<f64>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Download a dataset into the data directory.
    FetchData {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value = "data")]
        dir: PathBuf,
        /// Alternate mirror base URL.
        #[arg(long)]
        mirror: Option<String>,
    },
    /// Recompute the aggregate block of an existing report directory.
    Report {
        #[arg(long = "in")]
        in_dir: PathBuf,
    },
}

fn print_summary(report: &Report) {
    println!(
        "runs: {}  mean final accuracy: {:.4}  std error: {:.4}  params: {}",
        report.aggregate.runs,
        report.aggregate.mean_final_accuracy,
        report.aggregate.std_error,
        report.param_count
    );
    for (t, acc) in report.aggregate.per_task_mean.iter().enumerate() {
        println!("  task {t}: {acc:.4}");
    }
    if let Some(err) = &report.error {
        println!("  incomplete: {err}");
    }
}

fn load_config(
    path: &PathBuf,
    runs: Option<usize>,
    master_seed: Option<u64>,
    out: Option<PathBuf>,
    data_dir: Option<PathBuf>,
) -> pairwise_cl::error::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(r) = runs {
        cfg.runs = r;
    }
    if let Some(s) = master_seed {
        cfg.master_seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if let Some(d) = data_dir {
        cfg.data_dir = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_dataset(name: &str) -> pairwise_cl::error::Result<DatasetKind> {
    match name {
        "mnist" => Ok(DatasetKind::Mnist),
        "fashion_mnist" => Ok(DatasetKind::FashionMnist),
        other => Err(pairwise_cl::error::Error::Usage(format!(
            "unknown dataset '{other}' (expected mnist or fashion_mnist)"
        ))),
    }
}

fn run(cli: Cli) -> pairwise_cl::error::Result<()> {
    match cli.command {
        Command::Run { config, runs, master_seed, out, data_dir } => {
            let cfg = load_config(&config, runs, master_seed, out, data_dir)?;
            let report = run_experiment(&cfg)?;
            print_summary(&report);
            println!("report written to {}", cfg.out_dir.join("report.json").display());
        }
        Command::Sweep { config, densities, runs, out, data_dir } => {
            let cfg = load_config(&config, runs, None, out, data_dir)?;
            let points = density_sweep(&cfg, &densities)?;
            for (d, acc) in &points {
                println!("density {d}%: mean final accuracy {acc:.4}");
            }
            println!("sweep written to {}", cfg.out_dir.join("sweep.csv").display());
        }
        Command::FetchData { dataset, dir, mirror } => {
            let kind = parse_dataset(&dataset)?;
            fetch_datasets(&dir, kind, mirror.as_deref())?;
            println!("{dataset} ready under {}", dir.join(kind.dir_name()).display());
        }
        Command::Report { in_dir } => {
            let report = reaggregate(&in_dir)?;
            print_summary(&report);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
