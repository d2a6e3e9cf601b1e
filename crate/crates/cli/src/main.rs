use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use srpo_cli::commands::{self, AblationMode, BenchMethod, BenchSource, EmbeddingSource};
use srpo_cli::{CliError, RunConfig};
use srpo_core::bench::{SyntheticSpec, DEFAULT_JSD_BINS};

#[derive(Parser)]
#[command(name = "srpo", version, about = "Self-referential policy optimization experiments")]
struct Cli {
    /// Flat TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set alpha=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Comma-separated seeds, shorthand for `--set seeds=[...]`.
    #[arg(long, value_delimiter = ',', global = true)]
    seed_list: Vec<u64>,
    /// Sub-runs executed in parallel.
    #[arg(long, default_value_t = 1, global = true)]
    jobs: usize,
    /// Output directory (or file, for commands writing one file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 5)]
    tasks: usize,
    #[arg(long, default_value_t = 20)]
    successes: usize,
    #[arg(long, default_value_t = 10)]
    failures: usize,
    #[arg(long, default_value_t = 10)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

impl SyntheticArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            tasks: self.tasks,
            successes_per_task: self.successes,
            failures_per_task: self.failures,
            grid: self.grid,
            seed: self.data_seed,
            ..SyntheticSpec::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train with the configured algorithm, one run per seed.
    Train,
    /// Run every configured algorithm on every seed and compare.
    Compare,
    /// Sweep the progress-reward weight alpha.
    SweepAlpha,
    /// Paired runs that differ in one reference-set choice.
    Ablate {
        #[arg(long, value_enum)]
        mode: AblationMode,
    },
    /// Score progress-estimation methods on a curve dataset.
    BenchReward {
        /// Directory of `.curve` files; omit to generate a synthetic dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "latent,pixel")]
        methods: Vec<BenchMethod>,
        /// Embedding file for the `imported` method.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_JSD_BINS)]
        jsd_bins: usize,
        #[command(flatten)]
        synthetic: SyntheticArgs,
    },
    /// Write trajectory embeddings under the configured encoder.
    ExportEmbeddings {
        /// Trajectory store to encode; omit to encode the synthetic dataset.
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(flatten)]
        synthetic: SyntheticArgs,
    },
    /// Write a trajectory store of scripted successes and failures.
    CollectDemos {
        #[arg(long, default_value_t = 8)]
        successes: usize,
        #[arg(long, default_value_t = 8)]
        failures: usize,
        #[arg(long, default_value_t = 0)]
        data_seed: u64,
    },
    /// Regenerate plots from the tables stored under a directory.
    Report {
        dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut overrides = cli.set.clone();
    if !cli.seed_list.is_empty() {
        let list: Vec<String> = cli.seed_list.iter().map(u64::to_string).collect();
        overrides.push(format!("seeds=[{}]", list.join(",")));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), &overrides)?;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out));
    match cli.command {
        Command::Train => {
            for d in commands::cmd_train(&cfg, &out, cli.jobs)? {
                println!("{}", d.display());
            }
        }
        Command::Compare => {
            let r = commands::cmd_compare(&cfg, &out, cli.jobs)?;
            print!("{}", r.summary_table());
        }
        Command::SweepAlpha => {
            commands::cmd_sweep_alpha(&cfg, &out, cli.jobs)?;
            print!("{}", std::fs::read_to_string(out.join("sweep.csv"))?);
        }
        Command::Ablate { mode } => {
            let r = commands::cmd_ablate(&cfg, mode, &out, cli.jobs)?;
            print!("{}", r.summary_table());
        }
        Command::BenchReward { dataset, methods, embeddings, jsd_bins, synthetic } => {
            let source = match dataset {
                Some(d) => BenchSource::Curves(d),
                None => BenchSource::Synthetic(synthetic.spec()),
            };
            let rows = commands::cmd_bench_reward(&cfg, &source, &methods, embeddings.as_deref(), jsd_bins, &out)?;
            print!("{}", commands::bench_table(&rows));
        }
        Command::ExportEmbeddings { store, synthetic } => {
            let source = match store {
                Some(s) => EmbeddingSource::Store(s),
                None => EmbeddingSource::Synthetic(synthetic.spec()),
            };
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("embeddings.txt"));
            let n = commands::cmd_export_embeddings(&cfg, &source, &path)?;
            println!("{n} embeddings written to {}", path.display());
        }
        Command::CollectDemos { successes, failures, data_seed } => {
            let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("demos.traj"));
            let n = commands::cmd_collect_demos(&cfg, successes, failures, data_seed, &path)?;
            println!("{n} trajectories written to {}", path.display());
        }
        Command::Report { dir } => {
            for p in commands::cmd_report(&dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
