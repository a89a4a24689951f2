//! A trained bundle on disk (forest, vocabulary, locations, embeddings,
//! taxonomy) and the JSON request/response types served over HTTP and by the
//! `advise` command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{AdvisorConfig, AdvisorError, Advisor, PrivacyMetric, Recommendation, Strategy};
use crate::corpus::{
    load_locations, normalize_hashtag, write_locations, Corpus, CorpusError, HashtagId, Location, Vocabulary,
};
use crate::embedding::{load_embeddings, train_embeddings, EmbeddingError, EmbeddingParams, EmbeddingReport, EmbeddingTable};
use crate::forest::{train, ForestError, ForestParams, RandomForestModel};
use crate::obfuscate::{load_taxonomy, write_taxonomy, CategoryTaxonomy, ObfuscateError, TaxonomyRecord};

pub const MODEL_FILE: &str = "model.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const LOCATIONS_FILE: &str = "locations.jsonl";
pub const TAXONOMY_FILE: &str = "taxonomy.jsonl";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{file}: {source}")]
    Forest {
        file: &'static str,
        source: ForestError,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Obfuscate(#[from] ObfuscateError),
    #[error("inconsistent bundle: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Request errors are the caller's fault; everything else is internal.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Internal(AdvisorError),
}

impl From<AdvisorError> for ServiceError {
    fn from(e: AdvisorError) -> Self {
        match e {
            AdvisorError::EmptyPost
            | AdvisorError::UnknownLocation(_)
            | AdvisorError::InvalidAlpha { .. }
            | AdvisorError::UnknownMetric(_) => ServiceError::BadRequest(e.to_string()),
            other => ServiceError::Internal(other),
        }
    }
}

/// Everything the service needs, immutable once loaded.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub model: RandomForestModel,
    /// Forest vocabulary followed by category tokens; ids index `table`.
    pub vocab: Vocabulary,
    pub locations: Vec<Location>,
    pub table: EmbeddingTable,
    pub taxonomy_records: Vec<TaxonomyRecord>,
    pub taxonomy: CategoryTaxonomy,
}

impl Bundle {
    /// Trains the forest on `corpus` and embeddings on the same posts with
    /// the category tokens appended to the vocabulary.
    pub fn train(
        corpus: &Corpus,
        taxonomy_records: Vec<TaxonomyRecord>,
        forest: &ForestParams,
        embedding: &EmbeddingParams,
    ) -> Result<(Self, EmbeddingReport), BundleError> {
        let model = train(corpus, forest).map_err(|source| BundleError::Forest {
            file: MODEL_FILE,
            source,
        })?;
        let mut full = corpus.clone();
        let taxonomy = CategoryTaxonomy::attach(&taxonomy_records, &mut full)?;
        let (table, report) = train_embeddings(&full, embedding)?;
        Ok((
            Bundle {
                model,
                vocab: full.vocab().clone(),
                locations: full.locations().to_vec(),
                table,
                taxonomy_records,
                taxonomy,
            },
            report,
        ))
    }

    pub fn save(&self, dir: &Path) -> Result<(), BundleError> {
        std::fs::create_dir_all(dir)?;
        self.model
            .save(&dir.join(MODEL_FILE))
            .map_err(|source| BundleError::Forest {
                file: MODEL_FILE,
                source,
            })?;
        let mut vocab = String::new();
        for text in self.vocab.texts() {
            vocab.push_str(text);
            vocab.push('\n');
        }
        std::fs::write(dir.join(VOCAB_FILE), vocab)?;
        self.table.save(&dir.join(EMBEDDINGS_FILE))?;
        let mut locations = Vec::new();
        write_locations(&self.locations, &mut locations)?;
        std::fs::write(dir.join(LOCATIONS_FILE), locations)?;
        std::fs::write(dir.join(TAXONOMY_FILE), write_taxonomy(&self.taxonomy_records))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, BundleError> {
        let model = RandomForestModel::load(&dir.join(MODEL_FILE)).map_err(|source| BundleError::Forest {
            file: MODEL_FILE,
            source,
        })?;
        let vocab: Vocabulary = std::fs::read_to_string(dir.join(VOCAB_FILE))?
            .lines()
            .filter(|l| !l.is_empty())
            .collect();
        let locations = load_locations(&dir.join(LOCATIONS_FILE))?;
        let table = load_embeddings(&dir.join(EMBEDDINGS_FILE), &vocab)?;
        let taxonomy_records = load_taxonomy(&dir.join(TAXONOMY_FILE))?;
        let taxonomy = CategoryTaxonomy::resolve(&taxonomy_records, &vocab)?;
        if model.vocab_dimension() > vocab.len() {
            return Err(BundleError::Inconsistent(format!(
                "model expects {} hashtags, vocabulary has {}",
                model.vocab_dimension(),
                vocab.len()
            )));
        }
        if let Some(&c) = model.classes().iter().find(|&&c| c as usize >= locations.len()) {
            return Err(BundleError::Inconsistent(format!("model class {c} has no location")));
        }
        Ok(Bundle {
            model,
            vocab,
            locations,
            table,
            taxonomy_records,
            taxonomy,
        })
    }

    pub fn advisor(&self) -> Advisor<'_> {
        Advisor {
            model: &self.model,
            table: &self.table,
            taxonomy: &self.taxonomy,
            locations: &self.locations,
        }
    }

    fn location_index(&self, key: &str) -> Option<u32> {
        self.locations.iter().position(|l| l.key == key).map(|i| i as u32)
    }

    /// Resolves hashtag strings; returns the known ids and the unknown texts.
    fn resolve(&self, hashtags: &[String]) -> Result<(Vec<HashtagId>, Vec<String>), ServiceError> {
        let mut ids = Vec::with_capacity(hashtags.len());
        let mut unknown = Vec::new();
        for raw in hashtags {
            let text = normalize_hashtag(raw)
                .ok_or_else(|| ServiceError::BadRequest(format!("invalid hashtag {raw:?}")))?;
            match self.vocab.get(&text) {
                Some(id) => ids.push(id),
                None => unknown.push(text),
            }
        }
        ids.sort_unstable();
        ids.dedup();
        Ok((ids, unknown))
    }

    pub fn predict(&self, req: &PredictRequest) -> Result<PredictResponse, ServiceError> {
        let (ids, ignored) = self.resolve(&req.hashtags)?;
        let posterior = self.model.posterior_for(&ids);
        let topk = posterior
            .top_k(req.k.unwrap_or(5))
            .into_iter()
            .map(|(loc, prob)| {
                let l = &self.locations[loc as usize];
                TopLocation {
                    location: l.key.clone(),
                    name: l.name.clone(),
                    prob,
                }
            })
            .collect();
        Ok(PredictResponse {
            topk,
            posterior_entropy: posterior.entropy(),
            ignored_hashtags: ignored,
        })
    }

    fn view(&self, r: &Recommendation) -> RecommendationView {
        RecommendationView {
            mechanism: r.mechanism,
            hashtags: r
                .hashtags
                .iter()
                .map(|&h| self.vocab.text(h).expect("id from this vocabulary").to_string())
                .collect(),
            privacy_level: r.privacy_level,
            utility_loss: r.utility_loss,
            edits: r.edits,
            satisfiable: r.satisfiable,
        }
    }

    pub fn recommend(&self, req: &RecommendRequest) -> Result<RecommendResponse, ServiceError> {
        let (ids, unknown) = self.resolve(&req.hashtags)?;
        if !unknown.is_empty() {
            return Err(ServiceError::BadRequest(format!("unknown hashtags: {}", unknown.join(", "))));
        }
        let true_loc = self
            .location_index(&req.true_location)
            .ok_or_else(|| ServiceError::BadRequest(format!("unknown location {:?}", req.true_location)))?;
        let cfg = AdvisorConfig {
            alpha: req.alpha,
            metric: req.metric,
            max_obfuscated: req.max_obfuscated,
            ..AdvisorConfig::default()
        };
        let advice = self.advisor().recommend(&ids, true_loc, &cfg)?;
        Ok(RecommendResponse {
            original: self.view(&advice.original),
            recommendations: advice.per_mechanism.iter().map(|r| self.view(r)).collect(),
            best: self.view(&advice.best),
        })
    }

    pub fn info(&self) -> ModelInfo {
        ModelInfo {
            n_trees: self.model.n_trees(),
            vocab_size: self.model.vocab_dimension(),
            embedding_vocab_size: self.vocab.len(),
            embedding_dim: self.table.dim(),
            classes: self.model.classes().len(),
            generalizable_hashtags: self.taxonomy.len(),
            locations: self
                .locations
                .iter()
                .map(|l| LocationInfo {
                    location: l.key.clone(),
                    name: l.name.clone(),
                    lat: l.lat,
                    lon: l.lon,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub hashtags: Vec<String>,
    /// Number of locations returned; 5 when absent.
    #[serde(default)]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLocation {
    pub location: String,
    pub name: String,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub topk: Vec<TopLocation>,
    /// Nats.
    pub posterior_entropy: f64,
    /// Hashtags the model has never seen; they do not affect the prediction.
    pub ignored_hashtags: Vec<String>,
}

fn default_alpha() -> f64 {
    1.0
}

fn default_metric() -> PrivacyMetric {
    PrivacyMetric::Inaccuracy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendRequest {
    pub hashtags: Vec<String>,
    pub true_location: String,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_metric")]
    pub metric: PrivacyMetric,
    #[serde(default)]
    pub max_obfuscated: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub mechanism: Strategy,
    pub hashtags: Vec<String>,
    pub privacy_level: f64,
    pub utility_loss: f64,
    pub edits: usize,
    pub satisfiable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub original: RecommendationView,
    pub recommendations: Vec<RecommendationView>,
    pub best: RecommendationView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationInfo {
    pub location: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub n_trees: usize,
    /// Hashtags known to the forest.
    pub vocab_size: usize,
    /// Forest vocabulary plus category tokens.
    pub embedding_vocab_size: usize,
    pub embedding_dim: usize,
    pub classes: usize,
    pub generalizable_hashtags: usize,
    pub locations: Vec<LocationInfo>,
}
