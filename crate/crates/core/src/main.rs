use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use strokescreen::detect::{confusion, model_path, score_corpus, train_from_corpus, ModelSet, Recipe, Trained};
use strokescreen::metrics::{compute_metrics, format_table, ReportRow};
use strokescreen::service::{self, Engine, Scenario, SimulateConfig};
use strokescreen::synth::{write_corpus, CorpusSpec, Kind};
use strokescreen::vitals::ThresholdPolicy;

#[derive(Parser)]
#[command(name = "strokescreen", version, about = "Tiered multimodal stroke screening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// A single modality, or every one of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Target {
    Vocal,
    Retina,
    Face,
    Vascular,
    Fusion,
    All,
}

impl Target {
    fn kinds(self) -> Vec<Kind> {
        match self {
            Target::Vocal => vec![Kind::Vocal],
            Target::Retina => vec![Kind::Retina],
            Target::Face => vec![Kind::Face],
            Target::Vascular => vec![Kind::Vascular],
            Target::Fusion => vec![Kind::Fusion],
            Target::All => vec![Kind::Vocal, Kind::Retina, Kind::Face, Kind::Vascular, Kind::Fusion],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Val,
}

#[derive(Subcommand)]
enum Command {
    /// Write a labeled synthetic corpus to OUT/<modality>/.
    Gen {
        #[arg(long, value_enum)]
        modality: Target,
        /// Items per class (default: half the split size for the modality).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0.3)]
        difficulty: f64,
        /// Seed (default: 1 for train, 2 for val).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model. With `--modality all`, OUT is a directory receiving
    /// `<modality>.ssmd` for each modality.
    Train {
        #[arg(long, value_enum)]
        modality: Target,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print precision, sensitivity, F-beta and accuracy on a labeled corpus.
    Eval {
        #[arg(long, value_enum)]
        modality: Target,
        #[arg(long)]
        data: PathBuf,
        /// Model file, or a models directory with `--modality all`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        store: PathBuf,
    },
    /// Drive a scripted session against a running server and print the outcome as JSON.
    Simulate {
        #[arg(long, value_enum)]
        scenario: Scenario,
        /// Vitals samples per second.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[arg(long)]
        target: String,
        /// Corpus root written by `gen`; captures are uploaded from it after an alert.
        #[arg(long)]
        captures: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        capture_index: usize,
        #[arg(long, default_value_t = 60)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn gen(
    target: Target,
    n: Option<usize>,
    difficulty: f64,
    seed: Option<u64>,
    split: Split,
    out: &Path,
) -> AnyResult<()> {
    for kind in target.kinds() {
        let (train, val) = kind.default_split();
        let n = n.unwrap_or(match split {
            Split::Train => train / 2,
            Split::Val => val / 2,
        });
        let seed = seed.unwrap_or(match split {
            Split::Train => 1,
            Split::Val => 2,
        });
        let spec = CorpusSpec::new(kind, n, difficulty, seed)?;
        let manifest = write_corpus(out, &spec)?;
        println!(
            "{kind}: {} items in {}",
            manifest.items.len(),
            out.join(kind.name()).display()
        );
    }
    Ok(())
}

fn train(target: Target, data: &Path, out: &Path) -> AnyResult<()> {
    let all = target == Target::All;
    if all {
        std::fs::create_dir_all(out)?;
    }
    for kind in target.kinds() {
        let start = Instant::now();
        let model = train_from_corpus(kind, data, &Recipe::for_kind(kind))?;
        let path = if all { model_path(out, kind) } else { out.to_path_buf() };
        model.save(kind, &path)?;
        println!(
            "{kind}: trained in {:.1}s -> {}",
            start.elapsed().as_secs_f64(),
            path.display()
        );
    }
    Ok(())
}

fn eval(target: Target, data: &Path, model: &Path) -> AnyResult<()> {
    let mut rows = Vec::new();
    for kind in target.kinds() {
        let path = if target == Target::All {
            model_path(model, kind)
        } else {
            model.to_path_buf()
        };
        let trained = Trained::load(kind, &path)?;
        let cm = confusion(&score_corpus(kind, &trained, data)?)?;
        rows.push(ReportRow::new(kind.name(), &compute_metrics(&cm)?));
    }
    print!("{}", format_table(&rows));
    Ok(())
}

fn serve(host: std::net::IpAddr, port: u16, models: &Path, store: &Path) -> AnyResult<()> {
    let models = ModelSet::load(models)?;
    let engine = Arc::new(Engine::open(models, store, ThresholdPolicy::default())?);
    let addr = SocketAddr::new(host, port);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, service::http::router(engine)).await
    })?;
    Ok(())
}

fn simulate(cfg: SimulateConfig) -> AnyResult<()> {
    let rt = tokio::runtime::Runtime::new()?;
    let outcome = rt.block_on(service::simulate(&cfg))?;
    println!("{}", serde_json::to_string_pretty(&outcome)?);
    Ok(())
}

fn run(cli: Cli) -> AnyResult<()> {
    match cli.command {
        Command::Gen {
            modality,
            n,
            difficulty,
            seed,
            split,
            out,
        } => gen(modality, n, difficulty, seed, split, &out),
        Command::Train { modality, data, out } => train(modality, &data, &out),
        Command::Eval { modality, data, model } => eval(modality, &data, &model),
        Command::Serve {
            port,
            host,
            models,
            store,
        } => serve(host, port, &models, &store),
        Command::Simulate {
            scenario,
            rate,
            target,
            captures,
            capture_index,
            samples,
            seed,
        } => simulate(SimulateConfig {
            scenario,
            rate_hz: rate,
            target,
            captures,
            capture_index,
            samples,
            seed,
        }),
    }
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
