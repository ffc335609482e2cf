use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evplan::energy::{default_velocity_grid, write_profile_csv, EnergyModel};
use evplan::fit::{build_dataset, read_dataset_csv, training_depths, write_dataset_csv};
use evplan::harness::{
    ablation_matrix, read_grid, run_repeated, success_rate_grid, write_ablation_csv,
    write_episode_csv, write_grid_csv, EpisodeConfig, Models, DEFAULT_GATE_SPEED,
};
use evplan::pgnn::{train_pgnn, write_loss_curve_csv, MlpParams, PhysicsAt, TrainConfig};
use evplan::{Error, Result};

#[derive(Parser)]
#[command(
    name = "evplan",
    version,
    about = "Moving-gate interception: energy model, velocity network, planner and benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PhysicsArg {
    Dataset,
    Prediction,
}

#[derive(clap::Args)]
struct ModelArgs {
    /// PgNN parameters (JSON); trained from scratch when omitted.
    #[arg(long)]
    pgnn: Option<PathBuf>,
    /// Vanilla network parameters (JSON); trained from scratch when omitted.
    #[arg(long)]
    vanilla: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Energy-velocity profile for one depth.
    ProfileEnergy {
        #[arg(long, allow_negative_numbers = true)]
        depth: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Training dataset over the 21 default depths.
    Dataset {
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the velocity network.
    TrainPgnn {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Loss curve CSV.
        #[arg(long)]
        loss_curve: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PhysicsArg::Dataset)]
        physics_at: PhysicsArg,
    },
    /// Repeated episodes from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Per-run results CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Success-rate grid for both perception modes.
    Benchmark {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Perception and planner ablation on the 25-flight suite.
    Ablation {
        #[arg(long)]
        out: PathBuf,
        /// Base episode config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        models: ModelArgs,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn load_models(args: &ModelArgs) -> Result<Models> {
    let energy = EnergyModel::calibrated_default()?;
    let read = |p: &Path| -> Result<MlpParams> { MlpParams::from_json(&fs::read_to_string(p)?) };
    let (pgnn, vanilla) = match (&args.pgnn, &args.vanilla) {
        (Some(a), Some(b)) => (read(a)?, read(b)?),
        (a, b) => {
            eprintln!("training networks from the default dataset");
            let trained = Models::train_default(0)?;
            (
                a.as_deref().map(read).transpose()?.unwrap_or(trained.pgnn),
                b.as_deref()
                    .map(read)
                    .transpose()?
                    .unwrap_or(trained.vanilla),
            )
        }
    };
    Ok(Models {
        energy,
        pgnn,
        vanilla,
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::ProfileEnergy { depth, out } => {
            let model = EnergyModel::calibrated_default()?;
            let profile = model.profile(depth, &default_velocity_grid())?;
            let mut w = create(&out)?;
            write_profile_csv(&mut w, depth, &profile)?;
            w.flush()?;
            print!("{}", model.report());
        }
        Command::Dataset { out } => {
            let model = EnergyModel::calibrated_default()?;
            let samples = build_dataset(&model, &training_depths())?;
            write_dataset_csv(create(&out)?, &samples)?;
            for s in samples.iter().filter(|s| !s.interior) {
                eprintln!("depth {}: optimum on the domain edge", s.depth);
            }
        }
        Command::TrainPgnn {
            dataset,
            lambda,
            epochs,
            seed,
            out,
            loss_curve,
            physics_at,
        } => {
            let samples = read_dataset_csv(File::open(&dataset)?)?;
            let config = TrainConfig {
                lambda,
                epochs,
                seed,
                physics_at: match physics_at {
                    PhysicsArg::Dataset => PhysicsAt::DatasetOptimum,
                    PhysicsArg::Prediction => PhysicsAt::Prediction,
                },
                ..TrainConfig::default()
            };
            let trained = train_pgnn(&samples, &config)?;
            fs::write(&out, trained.params.to_json()?)?;
            if let Some(path) = loss_curve {
                let mut w = create(&path)?;
                write_loss_curve_csv(&mut w, &trained.loss_curve)?;
                w.flush()?;
            }
            if let Some(last) = trained.loss_curve.last() {
                println!(
                    "final mse {:.6e} physics {:.6e} total {:.6e}",
                    last.mse, last.physics_term, last.total
                );
            }
        }
        Command::Run {
            config,
            out,
            models,
        } => {
            let cfg = EpisodeConfig::from_toml(&fs::read_to_string(&config)?)?;
            let models = load_models(&models)?;
            let results = run_repeated(&cfg, &models)?;
            let n = results.len() as f64;
            let rate = results.iter().filter(|r| r.success).count() as f64 / n;
            let energy = results.iter().map(|r| r.energy).sum::<f64>() / n;
            println!(
                "{} + {}: success rate {rate:.2}, mean energy {energy:.2} J over {} runs",
                cfg.perception.name(),
                cfg.planner.name(),
                results.len()
            );
            if let Some(path) = out {
                write_episode_csv(create(&path)?, &results)?;
            }
        }
        Command::Benchmark { grid, out, models } => {
            let spec = read_grid(File::open(&grid)?)?;
            let models = load_models(&models)?;
            let rows = success_rate_grid(&spec, &models)?;
            write_grid_csv(create(&out)?, &rows)?;
        }
        Command::Ablation {
            out,
            config,
            models,
        } => {
            let base = match config {
                Some(p) => EpisodeConfig::from_toml(&fs::read_to_string(&p)?)?,
                None => EpisodeConfig::default(),
            };
            let models = load_models(&models)?;
            let ablation = ablation_matrix(&base, DEFAULT_GATE_SPEED, &models)?;
            write_ablation_csv(create(&out)?, &ablation)?;
            println!("corner energy ratio {:.3}", ablation.corner_ratio);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = match e {
                Error::Io(_) => "io error",
                Error::Parse(_) | Error::Csv(_) => "parse error",
                _ => "error",
            };
            eprintln!("evplan: {kind}: {e}");
            ExitCode::FAILURE
        }
    }
}
