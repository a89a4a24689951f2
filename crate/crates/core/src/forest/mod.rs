//! Random forest over sparse binary hashtag-presence features, producing
//! vote-averaged posteriors over locations, and the location-frequency
//! baseline.

mod model_file;
mod tree;

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, HashtagId, LocationId, Post};

pub use model_file::MODEL_VERSION;
pub use tree::Tree;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training post {0} has no location")]
    UnlabeledPost(usize),
    #[error("training post {0} has no in-vocabulary hashtag")]
    NoFeatures(usize),
    #[error("feature dimension {got} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Indices `i` where hashtag `i` is present, over a fixed vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    present: Vec<HashtagId>,
    dimension: usize,
}

impl FeatureVector {
    /// Out-of-vocabulary ids (`>= dimension`) are dropped.
    pub fn new(ids: impl IntoIterator<Item = HashtagId>, dimension: usize) -> Self {
        let mut present: Vec<HashtagId> = ids
            .into_iter()
            .filter(|&h| (h as usize) < dimension)
            .collect();
        present.sort_unstable();
        present.dedup();
        FeatureVector { present, dimension }
    }

    pub fn present(&self) -> &[HashtagId] {
        &self.present
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn contains(&self, feature: HashtagId) -> bool {
        self.present.binary_search(&feature).is_ok()
    }
}

pub fn featurize(post: &Post, vocab_dimension: usize) -> FeatureVector {
    FeatureVector::new(post.hashtags.iter().copied(), vocab_dimension)
}

/// Probability per class, aligned with `classes` (ascending location ids).
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    classes: Vec<LocationId>,
    probs: Vec<f64>,
}

impl Posterior {
    /// `probs` must be non-negative and aligned with ascending `classes`.
    pub fn new(classes: Vec<LocationId>, probs: Vec<f64>) -> Self {
        debug_assert_eq!(classes.len(), probs.len());
        debug_assert!(classes.windows(2).all(|w| w[0] < w[1]));
        Posterior { classes, probs }
    }

    pub fn one_hot(location: LocationId) -> Self {
        Posterior::new(vec![location], vec![1.0])
    }

    pub fn classes(&self) -> &[LocationId] {
        &self.classes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability of `location`; zero for locations outside the class set.
    pub fn prob(&self, location: LocationId) -> f64 {
        self.classes
            .binary_search(&location)
            .map_or(0.0, |i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (LocationId, f64)> + '_ {
        self.classes.iter().copied().zip(self.probs.iter().copied())
    }

    /// Most likely location; ties go to the lowest location id.
    pub fn argmax(&self) -> LocationId {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        self.classes[best]
    }

    /// The `k` most likely locations, by descending probability then id.
    pub fn top_k(&self, k: usize) -> Vec<(LocationId, f64)> {
        let mut entries: Vec<(LocationId, f64)> = self.iter().collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        entries.truncate(k);
        entries
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Minimum number of bootstrap samples in a leaf.
    pub min_leaf: usize,
    /// Unlimited when `None`.
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_leaf: 1,
            max_depth: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForestModel {
    trees: Vec<Tree>,
    vocab_dimension: usize,
    classes: Vec<LocationId>,
    params: ForestParams,
    degenerate: bool,
}

impl RandomForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn vocab_dimension(&self) -> usize {
        self.vocab_dimension
    }

    pub fn classes(&self) -> &[LocationId] {
        &self.classes
    }

    pub fn seed(&self) -> u64 {
        self.params.seed
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Set when the training data held a single class.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Fraction of trees voting for each class.
    pub fn predict_posterior(&self, features: &FeatureVector) -> Result<Posterior, ForestError> {
        if features.dimension() != self.vocab_dimension {
            return Err(ForestError::DimensionMismatch {
                expected: self.vocab_dimension,
                got: features.dimension(),
            });
        }
        let mut votes = vec![0u32; self.classes.len()];
        for tree in &self.trees {
            votes[tree.vote(features)] += 1;
        }
        let n = self.trees.len() as f64;
        Ok(Posterior::new(
            self.classes.clone(),
            votes.into_iter().map(|v| f64::from(v) / n).collect(),
        ))
    }

    pub fn predict_top(&self, features: &FeatureVector) -> Result<LocationId, ForestError> {
        Ok(self.predict_posterior(features)?.argmax())
    }

    /// Posterior for a bare hashtag set, dropping out-of-vocabulary ids.
    pub fn posterior_for(&self, hashtags: &[HashtagId]) -> Posterior {
        let features = FeatureVector::new(hashtags.iter().copied(), self.vocab_dimension);
        self.predict_posterior(&features)
            .expect("dimension matches by construction")
    }

    pub fn to_json(&self) -> Result<String, ForestError> {
        model_file::to_json(self)
    }

    pub fn from_json(text: &str) -> Result<Self, ForestError> {
        model_file::from_json(text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ForestError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ForestError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Trains a forest on every post of `train`. Features are the corpus
/// vocabulary; classes are the locations present in the data.
pub fn train(train: &Corpus, params: &ForestParams) -> Result<RandomForestModel, ForestError> {
    if train.is_empty() {
        return Err(ForestError::EmptyTrainingSet);
    }
    if params.n_trees == 0 {
        return Err(ForestError::InvalidModel("n_trees must be positive".into()));
    }
    let dimension = train.vocab().len();
    let mut classes: Vec<LocationId> = Vec::new();
    for (i, post) in train.posts().iter().enumerate() {
        let loc = post.location.ok_or(ForestError::UnlabeledPost(i))?;
        if post.hashtags.iter().all(|&h| h as usize >= dimension) {
            return Err(ForestError::NoFeatures(i));
        }
        classes.push(loc);
    }
    classes.sort_unstable();
    classes.dedup();
    let samples: Vec<(FeatureVector, usize)> = train
        .posts()
        .iter()
        .map(|p| {
            let class = classes
                .binary_search(&p.location.expect("checked above"))
                .expect("class collected above");
            (featurize(p, dimension), class)
        })
        .collect();

    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            Tree::grow(
                &samples,
                dimension,
                classes.len(),
                params,
                params.seed.wrapping_add(t as u64),
            )
        })
        .collect();

    Ok(RandomForestModel {
        trees,
        vocab_dimension: dimension,
        degenerate: classes.len() == 1,
        classes,
        params: *params,
    })
}

/// Predicts the location with the most training check-ins for every post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub class_frequency: BTreeMap<LocationId, usize>,
    pub top_class: LocationId,
}

impl BaselineModel {
    pub fn posterior(&self) -> Posterior {
        Posterior::one_hot(self.top_class)
    }
}

pub fn train_baseline(train: &Corpus) -> Result<BaselineModel, ForestError> {
    let mut class_frequency: BTreeMap<LocationId, usize> = BTreeMap::new();
    for (i, post) in train.posts().iter().enumerate() {
        let loc = post.location.ok_or(ForestError::UnlabeledPost(i))?;
        *class_frequency.entry(loc).or_insert(0) += 1;
    }
    let mut top: Option<(LocationId, usize)> = None;
    for (&loc, &count) in &class_frequency {
        if top.is_none_or(|(_, c)| count > c) {
            top = Some((loc, count));
        }
    }
    let (top_class, _) = top.ok_or(ForestError::EmptyTrainingSet)?;
    Ok(BaselineModel {
        class_frequency,
        top_class,
    })
}
