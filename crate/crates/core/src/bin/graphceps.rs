use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use graphceps::features::FeatureKind;
use graphceps::pipeline::{self, RunConfig};
use graphceps::Result;

#[derive(Parser)]
#[command(name = "graphceps", version, about = "Graph cepstrum features for partially synchronized microphones")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Feature kind: GC, SC or CEP.
    #[arg(long, global = true)]
    kind: Option<FeatureKind>,
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Global seed; beats both the config and GRAPHCEPS_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render the scene specs to a WAV dataset.
    Synth,
    /// Write one feature file per clip.
    Extract,
    /// Fit the spatial-cepstrum (PCA) basis on the training split.
    FitBasis,
    /// Emit IGFT grids, the SC matrix and the basis similarity table.
    BasisReport,
    /// Train per-scene GMMs on extracted training features.
    Train,
    /// Classify one WAV file.
    Classify { wav: PathBuf },
    /// Accuracy and confusion matrix on the test split.
    Evaluate,
    /// Accuracy against inter-group desync strength.
    Sweep,
}

fn config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => {
            let mut d = RunConfig::default();
            d.apply_env()?;
            d
        }
    };
    let cwd = Path::new(".");
    let here = |p: &PathBuf| if p.is_relative() { cwd.join(p) } else { p.clone() };
    if let Some(p) = &c.dataset {
        cfg.dataset = here(p);
    }
    if let Some(p) = &c.output {
        cfg.output = here(p);
    }
    if let Some(p) = &c.graph {
        cfg.graph = Some(here(p));
    }
    if let Some(k) = c.kind {
        cfg.feature.kind = k;
    }
    if let Some(o) = c.order {
        cfg.feature.order = o;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    match &cli.command {
        Cmd::Synth => print_json(&pipeline::cmd_synth(&cfg)?),
        Cmd::Extract => {
            let files = pipeline::cmd_extract(&cfg)?;
            println!("wrote {} {} feature files", files.len(), cfg.feature.kind);
        }
        Cmd::FitBasis => println!("{}", pipeline::cmd_fit_basis(&cfg)?.display()),
        Cmd::BasisReport => print!("{}", pipeline::cmd_basis_report(&cfg)?.to_csv()),
        Cmd::Train => println!("{}", pipeline::cmd_train(&cfg)?.display()),
        Cmd::Classify { wav } => print_json(&pipeline::cmd_classify(&cfg, wav)?),
        Cmd::Evaluate => {
            let e = pipeline::cmd_evaluate(&cfg)?;
            println!("{} accuracy {:.4} ({}/{})", cfg.feature.kind, e.accuracy, e.correct, e.total);
        }
        Cmd::Sweep => {
            let rows = pipeline::cmd_sweep(&cfg)?;
            print!(
                "{}",
                pipeline::sweep_summary_csv(&rows, &cfg.sweep.kinds, &cfg.sweep.sigmas_ms)
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
