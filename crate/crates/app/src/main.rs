use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use hashtag_privacy::advisor::PrivacyMetric;
use hashtag_privacy::corpus::{Adversary, SynthConfig};
use hashtag_privacy::service::Bundle;
use hashtag_privacy_app::commands;
use hashtag_privacy_app::config::RunConfig;
use hashtag_privacy_app::manifest::Manifest;
use hashtag_privacy_app::server;

#[derive(Parser)]
#[command(version, about = "Location inference from hashtags and privacy-preserving hashtag advice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted location signatures.
    Synth {
        /// SynthConfig JSON; defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the forest and embeddings and write a bundle directory.
    Train(RunArgs),
    /// Score the inference attack for both adversaries over all split repetitions.
    AttackEval(RunArgs),
    /// Run the obfuscation advisor over test posts at each bound.
    DefendEval(RunArgs),
    /// Answer one recommendation request read from stdin.
    Advise {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the run manifest; stderr when absent.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Serve prediction and recommendation over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// RunConfig JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    posts: Option<PathBuf>,
    #[arg(long)]
    locations: Option<PathBuf>,
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_filter: bool,
    #[arg(long)]
    min_user_checkins: Option<usize>,
    #[arg(long)]
    min_hashtag_count: Option<usize>,
    #[arg(long)]
    min_location_checkins: Option<usize>,
    #[arg(long, value_parser = parse_adversary)]
    adversary: Option<Adversary>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    min_leaf: Option<usize>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    metric: Option<PrivacyMetric>,
    #[arg(long)]
    max_posts: Option<usize>,
    #[arg(long)]
    no_curves: bool,
}

fn parse_adversary(s: &str) -> Result<Adversary, String> {
    match s.to_ascii_lowercase().as_str() {
        "a1" => Ok(Adversary::A1),
        "a2" => Ok(Adversary::A2),
        _ => Err(format!("unknown adversary {s:?}; expected a1 or a2")),
    }
}

impl RunArgs {
    fn resolve(self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag {
                    cfg.$($field)+ = v;
                }
            };
        }
        if self.posts.is_some() {
            cfg.posts = self.posts;
        }
        if self.locations.is_some() {
            cfg.locations = self.locations;
        }
        if self.taxonomy.is_some() {
            cfg.taxonomy = self.taxonomy;
        }
        if self.out.is_some() {
            cfg.output = self.out;
        }
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if self.no_filter {
            cfg.apply_filter = false;
        }
        if self.no_curves {
            cfg.curve_csv = false;
        }
        if self.max_depth.is_some() {
            cfg.forest.max_depth = self.max_depth;
        }
        if self.max_posts.is_some() {
            cfg.max_posts = self.max_posts;
        }
        set!(self.min_user_checkins => filter.min_user_checkins);
        set!(self.min_hashtag_count => filter.min_hashtag_count);
        set!(self.min_location_checkins => filter.min_location_checkins);
        set!(self.adversary => split.adversary);
        set!(self.train_fraction => split.train_fraction);
        set!(self.repetitions => split.repetitions);
        set!(self.n_trees => forest.n_trees);
        set!(self.min_leaf => forest.min_leaf);
        set!(self.embedding_dim => embedding.dim);
        set!(self.epochs => embedding.epochs);
        set!(self.alpha => advisor.alpha);
        set!(self.metric => advisor.metric);
        cfg.resolve_seeds();
        cfg.advisor.validate()?;
        Ok(cfg)
    }
}

fn emit_manifest(manifest: &Manifest, path: Option<&Path>) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, manifest.to_json() + "\n").with_context(|| format!("writing {}", p.display()))?,
        None => eprintln!("{}", serde_json::to_string(manifest)?),
    }
    Ok(())
}

fn load_bundle(dir: &Path) -> anyhow::Result<Bundle> {
    Bundle::load(dir).with_context(|| format!("loading bundle from {}", dir.display()))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Synth { config, out, seed } => {
            let mut cfg = match config {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<SynthConfig>(&text).with_context(|| format!("parsing {}", path.display()))?
                }
                None => SynthConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            commands::synth(&cfg, &out)?;
        }
        Command::Train(args) => {
            commands::train(&args.resolve()?)?;
        }
        Command::AttackEval(args) => {
            commands::attack_eval_cmd(&args.resolve()?)?;
        }
        Command::DefendEval(args) => {
            commands::defend_eval_cmd(&args.resolve()?)?;
        }
        Command::Advise { bundle, seed, manifest } => {
            let m = commands::bundle_manifest("advise", &bundle, seed)?;
            let b = load_bundle(&bundle)?;
            commands::advise(&b, std::io::stdin().lock(), std::io::stdout().lock())?;
            emit_manifest(&m, manifest.as_deref())?;
        }
        Command::Serve { bundle, bind, seed, manifest } => {
            let m = commands::bundle_manifest("serve", &bundle, seed)?;
            emit_manifest(&m, manifest.as_deref())?;
            let b = load_bundle(&bundle)?;
            let state = server::AppState::new(bundle, b);
            tokio::runtime::Runtime::new()?.block_on(server::serve(state, &bind))?;
        }
    }
    Ok(())
}
