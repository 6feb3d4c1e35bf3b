use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fedmd_core::scenario::{
    cmd_compare, cmd_generate, cmd_report, cmd_run, cmd_sweep_lr, render_comparison_table, render_run_report,
    render_sweep_table, ScenarioConfig,
};

#[derive(Parser)]
#[command(name = "fedmd", version, about = "Federated unsupervised misbehavior detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic clients as CSV files.
    Generate(Common),
    /// Train and evaluate every client group.
    Run(Common),
    /// VAE and AE over the learning-rate grid.
    SweepLr(Common),
    /// Federated and distributed training of both model kinds over the learning-rate grid.
    Compare(Common),
    /// Render saved report, sweep or compare JSON files (or directories holding them).
    Report {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON). Defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sequential client order for bit-exact reruns.
    #[arg(long)]
    deterministic: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ScenarioConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = Some(out.clone());
        }
        Ok(cfg)
    }
}

fn init_threads() -> Result<()> {
    let Ok(value) = std::env::var("FEDMD_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .with_context(|| format!("FEDMD_THREADS={value:?} is not a thread count"))?;
    if n == 0 {
        bail!("FEDMD_THREADS must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    log::debug!("using {n} worker threads");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    init_threads()?;
    match cli.command {
        Command::Generate(common) => {
            let cfg = common.load()?;
            let out = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("data"));
            for path in cmd_generate(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Run(common) => {
            let report = cmd_run(&common.load()?)?;
            print!("{}", render_run_report(&report));
        }
        Command::SweepLr(common) => {
            let report = cmd_sweep_lr(&common.load()?)?;
            print!("{}", render_sweep_table(&report));
        }
        Command::Compare(common) => {
            let report = cmd_compare(&common.load()?)?;
            print!("{}", render_comparison_table(&report));
        }
        Command::Report { paths } => print!("{}", cmd_report(&paths)?),
    }
    Ok(())
}
