use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use anyhow::Context;
use hashtag_privacy::corpus::{
    filter_corpus, generate_synthetic, load_corpus, split, write_locations, write_posts, Adversary, Corpus,
    SynthConfig,
};
use hashtag_privacy::eval::{attack_eval, AttackEvalConfig, AttackEvalReport, DefenseEvalConfig, DefenseSetup};
use hashtag_privacy::metrics::write_curve_csv;
use hashtag_privacy::obfuscate::{load_taxonomy, write_taxonomy, TaxonomyRecord};
use hashtag_privacy::service::{Bundle, MODEL_FILE};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::Manifest;
use crate::server::recommend_json;

pub const POSTS_FILE: &str = "posts.jsonl";
pub const LOCATIONS_FILE: &str = "locations.jsonl";
pub const TAXONOMY_FILE: &str = "taxonomy.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const ATTACK_REPORT_FILE: &str = "attack_report.json";
pub const DEFENSE_REPORT_FILE: &str = "defense_report.json";

fn create_output(cfg: &RunConfig) -> anyhow::Result<&Path> {
    let out = cfg
        .output
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("missing output directory (set it in the config or with --out)"))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8], manifest: &mut Manifest) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    manifest.output(name);
    Ok(())
}

pub fn synth(cfg: &SynthConfig, out: &Path) -> anyhow::Result<Manifest> {
    let data = generate_synthetic(cfg)?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut manifest = Manifest::new("synth", cfg)?;
    manifest.seed("synth", cfg.seed);
    let mut posts = Vec::new();
    write_posts(&data.corpus, &mut posts)?;
    write_file(out, POSTS_FILE, &posts, &mut manifest)?;
    let mut locations = Vec::new();
    write_locations(data.corpus.locations(), &mut locations)?;
    write_file(out, LOCATIONS_FILE, &locations, &mut manifest)?;
    write_file(out, TAXONOMY_FILE, write_taxonomy(&data.taxonomy).as_bytes(), &mut manifest)?;
    manifest.write(out)?;
    Ok(manifest)
}

fn load_inputs(cfg: &RunConfig, manifest: &mut Manifest) -> anyhow::Result<(Corpus, Vec<TaxonomyRecord>)> {
    let posts = cfg.require(&cfg.posts, "posts")?;
    let locations = cfg.require(&cfg.locations, "locations")?;
    manifest.input(posts)?.input(locations)?;
    let mut corpus = load_corpus(posts, locations)?;
    if cfg.apply_filter {
        corpus = filter_corpus(&corpus, cfg.filter);
    }
    anyhow::ensure!(!corpus.is_empty(), "corpus is empty after filtering");
    let taxonomy = match &cfg.taxonomy {
        Some(path) => {
            manifest.input(path)?;
            load_taxonomy(path)?
        }
        None => Vec::new(),
    };
    Ok((corpus, taxonomy))
}

fn seeded_manifest(command: &str, cfg: &RunConfig) -> anyhow::Result<Manifest> {
    let mut manifest = Manifest::new(command, cfg)?;
    if let Some(seed) = cfg.seed {
        manifest.seed("base", seed);
    }
    manifest
        .seed("split", cfg.split.seed)
        .seed("forest", cfg.forest.seed)
        .seed("embedding", cfg.embedding.seed);
    Ok(manifest)
}

/// User sets of repetition 0 of the configured split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub adversary: Adversary,
    pub seed: u64,
    pub train_fraction: f64,
    pub repetition: usize,
    pub train_posts: usize,
    pub test_posts: usize,
    pub train_users: Vec<String>,
    pub test_users: Vec<String>,
}

/// Trains the deployable bundle on the whole filtered corpus and records the
/// evaluation split alongside it.
pub fn train(cfg: &RunConfig) -> anyhow::Result<Manifest> {
    let mut manifest = seeded_manifest("train", cfg)?;
    let (corpus, taxonomy) = load_inputs(cfg, &mut manifest)?;
    let out = create_output(cfg)?;
    let (bundle, report) = Bundle::train(&corpus, taxonomy, &cfg.forest, &cfg.embedding)?;
    if !report.isolated.is_empty() {
        eprintln!("{} hashtags never co-occur and keep their initial vectors", report.isolated.len());
    }
    bundle.save(out)?;
    for name in [
        MODEL_FILE,
        hashtag_privacy::service::VOCAB_FILE,
        hashtag_privacy::service::EMBEDDINGS_FILE,
        hashtag_privacy::service::LOCATIONS_FILE,
        hashtag_privacy::service::TAXONOMY_FILE,
    ] {
        manifest.output(name);
    }
    let s = split(&corpus, &cfg.split, 0)?;
    let names = |ids: Vec<u32>| ids.into_iter().map(|u| corpus.users()[u as usize].clone()).collect();
    let split_manifest = SplitManifest {
        adversary: cfg.split.adversary,
        seed: cfg.split.seed,
        train_fraction: cfg.split.train_fraction,
        repetition: 0,
        train_posts: s.train.len(),
        test_posts: s.test.len(),
        train_users: names(s.train_users()),
        test_users: names(s.test_users()),
    };
    let text = serde_json::to_string_pretty(&split_manifest)? + "\n";
    write_file(out, SPLIT_FILE, text.as_bytes(), &mut manifest)?;
    manifest.write(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub a1: AttackEvalReport,
    pub a2: AttackEvalReport,
}

/// Runs every repetition for both adversaries. The configured adversary is
/// ignored; the rest of the split spec applies to both.
pub fn attack_eval_cmd(cfg: &RunConfig) -> anyhow::Result<Manifest> {
    let mut manifest = seeded_manifest("attack-eval", cfg)?;
    let (corpus, _) = load_inputs(cfg, &mut manifest)?;
    let out = create_output(cfg)?;
    let run = |adversary| {
        attack_eval(
            &corpus,
            &AttackEvalConfig {
                split: hashtag_privacy::corpus::SplitSpec {
                    adversary,
                    ..cfg.split
                },
                forest: cfg.forest,
            },
        )
    };
    let summary = AttackSummary {
        a1: run(Adversary::A1)?,
        a2: run(Adversary::A2)?,
    };
    let text = serde_json::to_string_pretty(&summary)? + "\n";
    write_file(out, ATTACK_REPORT_FILE, text.as_bytes(), &mut manifest)?;
    if cfg.curve_csv {
        let curves = [
            ("curve_a1.csv", &summary.a1.mean.attack),
            ("curve_a2.csv", &summary.a2.mean.attack),
            ("curve_baseline_a1.csv", &summary.a1.mean.baseline),
            ("curve_baseline_a2.csv", &summary.a2.mean.baseline),
        ];
        for (name, report) in curves {
            let mut buf = Vec::new();
            write_curve_csv(report, &mut buf)?;
            write_file(out, name, &buf, &mut manifest)?;
        }
    }
    manifest.write(out)?;
    Ok(manifest)
}

pub fn defend_eval_cmd(cfg: &RunConfig) -> anyhow::Result<Manifest> {
    let mut manifest = seeded_manifest("defend-eval", cfg)?;
    let (corpus, taxonomy) = load_inputs(cfg, &mut manifest)?;
    let out = create_output(cfg)?;
    let dcfg = DefenseEvalConfig {
        split: cfg.split,
        forest: cfg.forest,
        embedding: cfg.embedding,
        advisor: cfg.advisor.clone(),
        bounds: cfg.bounds.clone(),
        max_posts: cfg.max_posts,
    };
    let setup = DefenseSetup::build(&corpus, &taxonomy, &dcfg)?;
    let report = setup.run(&dcfg)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    write_file(out, DEFENSE_REPORT_FILE, text.as_bytes(), &mut manifest)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Reads one `/recommend` request from `input` and writes the response.
pub fn advise(bundle: &Bundle, mut input: impl Read, mut output: impl Write) -> anyhow::Result<()> {
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    let resp = recommend_json(bundle, &body)?;
    output.write_all(resp.as_bytes())?;
    output.write_all(b"\n")?;
    Ok(())
}

/// Manifest for commands without an output directory.
pub fn bundle_manifest(command: &str, bundle_dir: &Path, seed: Option<u64>) -> anyhow::Result<Manifest> {
    let mut config = BTreeMap::new();
    config.insert("bundle", bundle_dir.display().to_string());
    let mut manifest = Manifest::new(command, &config)?;
    if let Some(seed) = seed {
        manifest.seed("base", seed);
    }
    manifest.input(bundle_dir)?;
    Ok(manifest)
}
