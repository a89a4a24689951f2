use std::path::{Path, PathBuf};

use anyhow::Context;
use hashtag_privacy::advisor::AdvisorConfig;
use hashtag_privacy::corpus::{FilterThresholds, SplitSpec};
use hashtag_privacy::embedding::EmbeddingParams;
use hashtag_privacy::eval::derive_seed;
use hashtag_privacy::forest::ForestParams;
use serde::{Deserialize, Serialize};

/// Everything a pipeline command reads. Loaded from JSON; command-line flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub posts: Option<PathBuf>,
    pub locations: Option<PathBuf>,
    pub taxonomy: Option<PathBuf>,
    /// Directory holding a trained bundle.
    pub bundle: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Base seed. When set, the split, forest and embedding seeds are derived
    /// from it and the component seeds below are ignored.
    pub seed: Option<u64>,
    pub apply_filter: bool,
    pub filter: FilterThresholds,
    pub split: SplitSpec,
    pub forest: ForestParams,
    pub embedding: EmbeddingParams,
    pub advisor: AdvisorConfig,
    pub bounds: Vec<Option<usize>>,
    pub max_posts: Option<usize>,
    /// Write per-hashtag-count CSV curves next to the JSON report.
    pub curve_csv: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            posts: None,
            locations: None,
            taxonomy: None,
            bundle: None,
            output: None,
            seed: None,
            apply_filter: true,
            filter: FilterThresholds::default(),
            split: SplitSpec::default(),
            forest: ForestParams::default(),
            embedding: EmbeddingParams::default(),
            advisor: AdvisorConfig::default(),
            bounds: vec![Some(1), Some(2), Some(3), None],
            max_posts: None,
            curve_csv: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Pushes the base seed, if any, into the component seeds.
    pub fn resolve_seeds(&mut self) {
        if let Some(seed) = self.seed {
            self.split.seed = seed;
            self.forest.seed = derive_seed(seed, 1);
            self.embedding.seed = derive_seed(seed, 2);
        }
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> anyhow::Result<&'a Path> {
        let path = field
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("missing {name} path (set it in the config or with --{name})"))?;
        anyhow::ensure!(path.exists(), "{name} path {} does not exist", path.display());
        Ok(path)
    }
}
