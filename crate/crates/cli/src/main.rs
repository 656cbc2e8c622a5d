use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use madbal_core::round::{
    cluster_superpixels, evaluate_predictions, prepare_superpixels, run_round, seed_pool, select_round, OracleKind,
    RoundOptions,
};
use madbal_core::synthetic::write_toy_session;
use madbal_core::{load_session, SelectionMode, Session, SessionManifest};

#[derive(Parser)]
#[command(name = "madbal", version, about = "Active-learning pixel selection for semantic segmentation")]
struct Cli {
    /// Session directory.
    #[arg(long, global = true, default_value = ".")]
    session: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create a session from images. A match that is a directory is copied whole
    /// (image.png plus any tensors); a PNG file becomes the image of a new entry.
    Init {
        #[arg(long)]
        images: String,
        #[arg(long)]
        classes: usize,
        /// Queries per image and round.
        #[arg(long)]
        budget: usize,
        /// Comma-separated class names.
        #[arg(long, value_delimiter = ',')]
        class_names: Option<Vec<String>>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SelectionMode>,
        #[arg(long)]
        clusters: Option<usize>,
    },
    /// Create a session of synthetic shape scenes with head outputs and ground truth.
    Synth {
        #[arg(long, default_value_t = 4)]
        images: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 5)]
        classes: usize,
        #[arg(long, default_value_t = 10)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Label random pixels of every image from ground truth.
    Seed {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Segment every image and cluster the superpixels for the next round.
    Superpixels {
        #[arg(long)]
        compactness: Option<f64>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Select the next round's queries without labeling them.
    Select {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SelectionMode>,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a full round: select, label and report.
    Round {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SelectionMode>,
        #[arg(long, value_parser = parse_oracle, default_value = "sim")]
        oracle: OracleKind,
        #[arg(long)]
        clusters: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the mIoU of `<id>.mdbt` predictions against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Directory of `<id>.mdbt` ground truth; defaults to the session's.
        #[arg(long)]
        gt: Option<PathBuf>,
    },
    /// Serve the annotation API.
    Serve {
        #[arg(long, default_value_t = madbal_service::DEFAULT_PORT)]
        port: u16,
    },
}

fn parse_mode(s: &str) -> Result<SelectionMode, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = SelectionMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_oracle(s: &str) -> Result<OracleKind, String> {
    s.parse().map_err(|_| "expected sim or human".to_string())
}

fn round_options(session: &Session, mode: Option<SelectionMode>, clusters: Option<usize>, seed: u64) -> RoundOptions {
    let mut opts = RoundOptions::from_session(session, seed);
    if let Some(mode) = mode {
        opts.mode = mode;
    }
    if let Some(k) = clusters {
        opts.clusters = k;
    }
    opts
}

fn copy_dir(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to)?;
    for entry in fs::read_dir(from)? {
        let entry = entry?;
        if entry.file_type()?.is_file() {
            fs::copy(entry.path(), to.join(entry.file_name()))?;
        }
    }
    Ok(())
}

fn init(dir: &Path, pattern: &str, manifest_of: impl FnOnce(Vec<String>) -> SessionManifest) -> Result<()> {
    let mut sources: Vec<(String, PathBuf)> = Vec::new();
    for path in glob::glob(pattern).context("invalid --images pattern")? {
        let path = path?;
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .with_context(|| format!("cannot derive an image id from {}", path.display()))?
            .to_string();
        sources.push((id, path));
    }
    if sources.is_empty() {
        bail!("no images match {pattern:?}");
    }
    sources.sort();
    let manifest = manifest_of(sources.iter().map(|(id, _)| id.clone()).collect());
    if dir.join(madbal_core::session::MANIFEST_FILE).exists() {
        bail!("{} already holds a session", dir.display());
    }
    Session::create(dir, manifest)?;
    for (id, src) in &sources {
        let dest = dir.join("images").join(id);
        if src.is_dir() {
            copy_dir(src, &dest)?;
        } else {
            fs::copy(src, dest.join("image.png")).with_context(|| format!("copying {}", src.display()))?;
        }
    }
    let session = load_session(dir)?;
    println!("created session with {} images in {}", session.num_images(), dir.display());
    Ok(())
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let dir = cli.session.as_path();
    match cli.command {
        Command::Init { images, classes, budget, class_names, mode, clusters } => init(dir, &images, |ids| {
            let mut m = SessionManifest::new(ids, classes, budget);
            m.class_names = class_names;
            if let Some(mode) = mode {
                m.mode = mode;
            }
            if let Some(k) = clusters {
                m.config.clusters = k;
            }
            m
        }),
        Command::Synth { images, height, width, classes, budget, seed } => {
            if dir.join(madbal_core::session::MANIFEST_FILE).exists() {
                bail!("{} already holds a session", dir.display());
            }
            let session = write_toy_session(dir, images, (height, width), classes, budget, seed)?;
            println!("created synthetic session with {} images in {}", session.num_images(), dir.display());
            Ok(())
        }
        Command::Seed { n, seed } => {
            let mut session = load_session(dir)?;
            let records = seed_pool(&mut session, n, seed)?;
            println!("seeded {} labels", records.len());
            Ok(())
        }
        Command::Superpixels { compactness, clusters, seed } => {
            let session = load_session(dir)?;
            let compactness = compactness.unwrap_or(session.manifest.config.compactness);
            let maps = prepare_superpixels(&session, compactness, seed)?;
            let k = clusters.unwrap_or(session.manifest.config.clusters);
            let file = cluster_superpixels(&session, &maps, k, seed)?;
            for (id, map) in session.image_ids().iter().zip(&maps) {
                println!("{id}: {} superpixels", map.count());
            }
            println!("{} clusters after {} iterations, round {}", file.k, file.iterations, session.next_round());
            Ok(())
        }
        Command::Select { mode, clusters, seed } => {
            let session = load_session(dir)?;
            let opts = round_options(&session, mode, clusters, seed);
            let selection = select_round(&session, &opts)?;
            let qs = &selection.queries;
            println!("round {}: {} queries ({})", qs.round, qs.queries.len(), qs.mode);
            Ok(())
        }
        Command::Round { mode, oracle, clusters, seed } => {
            let mut session = load_session(dir)?;
            let opts = round_options(&session, mode, clusters, seed);
            let report = run_round(&mut session, &opts, oracle)?;
            print_json(&report)
        }
        Command::Eval { pred, gt } => {
            let session = load_session(dir)?;
            let miou = evaluate_predictions(&session, &pred, gt.as_deref())?;
            println!("{miou:.6}");
            Ok(())
        }
        Command::Serve { port } => {
            let session = load_session(dir)?;
            madbal_service::serve_blocking(session, port)?;
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
