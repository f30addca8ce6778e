use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lcr_core::agent::{NetworkSpec, QNetwork};
use lcr_core::envs;
use lcr_core::harness::{self, checkpoint, RunConfig};
use lcr_core::rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "lcr", version, about = "DQN with a locally constrained representation loss")]
struct Cli {
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every run of a config and write metrics.csv plus checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Repeat an experiment once per value of one LCR setting.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of gradient_steps, K, lcr_learning_rate, lcr_batch_size.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode the states of random-policy trajectories with a saved model.
    DumpRepr {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        trajectories: usize,
        /// Output CSV; defaults to `<model stem>_repr.csv` beside the model.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> lcr_core::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> lcr_core::Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let cfg = load(&config, cli.seed, out)?;
            let path = harness::run_experiment(&cfg)?;
            println!("{}", path.display());
        }
        Command::Sweep {
            config,
            param,
            values,
            out,
        } => {
            let cfg = load(&config, cli.seed, out)?;
            for p in harness::run_sweep(&cfg, &param, &values)? {
                println!("{}", p.display());
            }
        }
        Command::DumpRepr {
            config,
            model,
            trajectories,
            out,
        } => {
            let cfg = load(&config, cli.seed, None)?;
            let env = envs::make(&cfg.env)?;
            let spec = cfg
                .agent
                .network
                .clone()
                .unwrap_or_else(|| NetworkSpec::default_for(env.observation_kind()));
            let net = QNetwork::build(&spec, &env.observation_shape(), env.num_actions(), &mut rng::seeded(0))?;
            checkpoint::load_into(&net, &model)?;
            let out = out.unwrap_or_else(|| {
                let stem = model
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                model.with_file_name(format!("{stem}_repr.csv"))
            });
            let rows = harness::dump_representations(&net, &cfg.env, trajectories, cfg.seed, &out)?;
            println!("{} ({rows} rows)", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
