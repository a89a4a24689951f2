//! Experiment drivers: repeated-split attack evaluation and the defense
//! harness that runs the advisor over a test split at several edit bounds.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{AdvisorConfig, AdvisorError, Advisor, Strategy};
use crate::corpus::{split, Adversary, Corpus, CorpusError, Post, Split, SplitSpec};
use crate::embedding::{train_embeddings, EmbeddingError, EmbeddingParams, EmbeddingReport, EmbeddingTable};
use crate::forest::{train, train_baseline, BaselineModel, ForestError, ForestParams, RandomForestModel};
use crate::metrics::{evaluate, EvaluationReport, GroupMetrics, MetricsError, PerformanceReport};
use crate::obfuscate::{CategoryTaxonomy, ObfuscateError, TaxonomyRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Obfuscate(#[from] ObfuscateError),
    #[error(transparent)]
    Advisor(#[from] AdvisorError),
}

/// Seed for repetition `rep` derived from `base` (splitmix64 finalizer).
pub fn derive_seed(base: u64, rep: usize) -> u64 {
    let mut z = base.wrapping_add((rep as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvalConfig {
    pub split: SplitSpec,
    pub forest: ForestParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackEvalReport {
    pub adversary: Adversary,
    /// Means over repetitions.
    pub mean: EvaluationReport,
    /// Mean over repetitions of 1 / (number of locations in the test split).
    pub test_class_prior: f64,
    pub repetitions: Vec<EvaluationReport>,
}

fn mean_performance(reports: &[&PerformanceReport]) -> PerformanceReport {
    let n = reports.len() as f64;
    let mut groups: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for r in reports {
        for (&k, g) in &r.per_hashtag_count {
            let e = groups.entry(k).or_default();
            e.0 += g.n;
            e.1 += g.accuracy * g.n as f64;
            e.2 += g.correctness * g.n as f64;
        }
    }
    PerformanceReport {
        correctness: reports.iter().map(|r| r.correctness).sum::<f64>() / n,
        expected_distance_km: reports.iter().map(|r| r.expected_distance_km).sum::<f64>() / n,
        accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        n_test: reports.iter().map(|r| r.n_test).sum::<usize>() / reports.len(),
        // Group means are pooled over repetitions; `n` is the pooled count.
        per_hashtag_count: groups
            .into_iter()
            .map(|(k, (count, acc, corr))| {
                (
                    k,
                    GroupMetrics {
                        n: count,
                        accuracy: acc / count as f64,
                        correctness: corr / count as f64,
                    },
                )
            })
            .collect(),
    }
}

/// Trains and scores one attack per split repetition and averages the
/// reports.
pub fn attack_eval(corpus: &Corpus, cfg: &AttackEvalConfig) -> Result<AttackEvalReport, EvalError> {
    let mut reports = Vec::with_capacity(cfg.split.repetitions);
    let mut prior = 0.0;
    for rep in 0..cfg.split.repetitions {
        let s = split(corpus, &cfg.split, rep)?;
        let params = ForestParams {
            seed: derive_seed(cfg.forest.seed, rep),
            ..cfg.forest
        };
        let model = train(&s.train, &params)?;
        let baseline = train_baseline(&s.train)?;
        reports.push(evaluate(&model, &baseline, &s.test)?);
        let mut seen: Vec<u32> = s.test.posts().iter().filter_map(|p| p.location).collect();
        seen.sort_unstable();
        seen.dedup();
        prior += 1.0 / seen.len() as f64;
    }
    let mean = EvaluationReport {
        attack: mean_performance(&reports.iter().map(|r| &r.attack).collect::<Vec<_>>()),
        baseline: mean_performance(&reports.iter().map(|r| &r.baseline).collect::<Vec<_>>()),
    };
    Ok(AttackEvalReport {
        adversary: cfg.split.adversary,
        mean,
        test_class_prior: prior / reports.len() as f64,
        repetitions: reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseEvalConfig {
    /// Only repetition 0 of this split is used.
    pub split: SplitSpec,
    pub forest: ForestParams,
    pub embedding: EmbeddingParams,
    pub advisor: AdvisorConfig,
    /// `None` is the unbounded search.
    pub bounds: Vec<Option<usize>>,
    /// Evaluate at most this many test posts, evenly spaced over the split.
    pub max_posts: Option<usize>,
}

impl DefenseEvalConfig {
    pub fn new(split: SplitSpec) -> Self {
        DefenseEvalConfig {
            split,
            forest: ForestParams::default(),
            embedding: EmbeddingParams::default(),
            advisor: AdvisorConfig::default(),
            bounds: vec![Some(1), Some(2), Some(3), None],
            max_posts: None,
        }
    }
}

/// Model, embeddings and taxonomy for one defense experiment. The attack is
/// trained on the train side; embeddings see both sides plus the category
/// tokens. `corpus` holds every post in the shared vocabulary.
pub struct DefenseSetup {
    pub split: Split,
    pub corpus: Corpus,
    pub model: RandomForestModel,
    pub baseline: BaselineModel,
    pub table: EmbeddingTable,
    pub taxonomy: CategoryTaxonomy,
    pub embedding_report: EmbeddingReport,
}

impl DefenseSetup {
    pub fn build(
        corpus: &Corpus,
        taxonomy: &[TaxonomyRecord],
        cfg: &DefenseEvalConfig,
    ) -> Result<Self, EvalError> {
        let s = split(corpus, &cfg.split, 0)?;
        let model = train(&s.train, &cfg.forest)?;
        let baseline = train_baseline(&s.train)?;
        // Interning the test posts after the train posts reproduces the test
        // side's ids.
        let mut full = s.train.merged_with(&s.test);
        let taxonomy = CategoryTaxonomy::attach(taxonomy, &mut full)?;
        let (table, embedding_report) = train_embeddings(&full, &cfg.embedding)?;
        Ok(DefenseSetup {
            split: s,
            corpus: full,
            model,
            baseline,
            table,
            taxonomy,
            embedding_report,
        })
    }

    pub fn advisor(&self) -> Advisor<'_> {
        Advisor {
            model: &self.model,
            table: &self.table,
            taxonomy: &self.taxonomy,
            locations: self.corpus.locations(),
        }
    }
}

/// Outcome for one test post at one bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostOutcome {
    pub n_hashtags: usize,
    pub already_private: bool,
    pub protected: bool,
    pub best: Strategy,
    /// Attack is right on the published set.
    pub attack_correct: bool,
    pub utility_loss: f64,
    /// Satisfying optimum per mechanism.
    pub mechanism_losses: BTreeMap<String, f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound: Option<usize>,
    /// Attack accuracy on the published sets.
    pub accuracy: f64,
    pub accuracy_by_count: BTreeMap<usize, f64>,
    pub already_private: usize,
    pub protected: usize,
    pub unprotectable: usize,
    /// Share of protected posts whose optimum came from each mechanism.
    pub mechanism_share: BTreeMap<String, f64>,
    /// Losses of protected posts per mechanism, and of the overall optimum
    /// under "optimal".
    pub utility_losses: BTreeMap<String, Vec<f64>>,
    pub mean_utility_by_count: BTreeMap<usize, f64>,
    pub mean_seconds: f64,
    pub mean_seconds_by_count: BTreeMap<usize, f64>,
    pub posts: Vec<PostOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseReport {
    pub n_posts: usize,
    pub baseline_accuracy: f64,
    /// Attack accuracy on the unmodified test posts.
    pub attack_accuracy: f64,
    pub isolated_hashtags: usize,
    pub bounds: Vec<BoundReport>,
}

fn mean_by<K: Ord + Copy>(items: impl Iterator<Item = (K, f64)>) -> BTreeMap<K, f64> {
    let mut acc: BTreeMap<K, (f64, usize)> = BTreeMap::new();
    for (k, v) in items {
        let e = acc.entry(k).or_default();
        e.0 += v;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Original => "original",
        Strategy::Hiding => "hiding",
        Strategy::Replacement => "replacement",
        Strategy::Generalization => "generalization",
    }
}

impl DefenseSetup {
    /// Runs the advisor on one post; the timing covers enumeration and
    /// scoring only.
    pub fn defend_post(
        &self,
        hashtags: &[u32],
        true_loc: u32,
        cfg: &AdvisorConfig,
    ) -> Result<PostOutcome, EvalError> {
        let adv = self.advisor();
        let start = Instant::now();
        let advice = adv.recommend(hashtags, true_loc, cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        let published = &advice.best.hashtags;
        let attack_correct = self.model.posterior_for(published).argmax() == true_loc;
        Ok(PostOutcome {
            n_hashtags: advice.original.hashtags.len(),
            already_private: advice.original.satisfiable,
            protected: !advice.original.satisfiable && advice.best.satisfiable,
            best: advice.best.mechanism,
            attack_correct,
            utility_loss: advice.best.utility_loss,
            mechanism_losses: advice
                .per_mechanism
                .iter()
                .filter(|r| r.satisfiable)
                .map(|r| (strategy_name(r.mechanism).to_string(), r.utility_loss))
                .collect(),
            seconds,
        })
    }

    pub fn run(&self, cfg: &DefenseEvalConfig) -> Result<DefenseReport, EvalError> {
        let test = &self.split.test;
        let n = cfg.max_posts.unwrap_or(test.len()).min(test.len());
        let posts: Vec<&Post> = (0..n).map(|i| &test.posts()[i * test.len() / n]).collect();
        let attack_correct = posts
            .iter()
            .filter(|p| self.model.posterior_for(&p.hashtags).argmax() == p.location.unwrap_or(u32::MAX))
            .count();
        let baseline_correct = posts
            .iter()
            .filter(|p| p.location == Some(self.baseline.top_class))
            .count();

        let mut bounds = Vec::with_capacity(cfg.bounds.len());
        for &bound in &cfg.bounds {
            let acfg = AdvisorConfig {
                max_obfuscated: bound,
                ..cfg.advisor.clone()
            };
            let outcomes = posts
                .par_iter()
                .map(|p| {
                    let loc = p.location.ok_or(CorpusError::UnlabeledPost(0))?;
                    self.defend_post(&p.hashtags, loc, &acfg)
                })
                .collect::<Result<Vec<_>, EvalError>>()?;
            bounds.push(summarize(bound, outcomes));
        }
        Ok(DefenseReport {
            n_posts: n,
            baseline_accuracy: baseline_correct as f64 / n.max(1) as f64,
            attack_accuracy: attack_correct as f64 / n.max(1) as f64,
            isolated_hashtags: self.embedding_report.isolated.len(),
            bounds,
        })
    }
}

fn summarize(bound: Option<usize>, posts: Vec<PostOutcome>) -> BoundReport {
    let n = posts.len().max(1) as f64;
    let protected: Vec<&PostOutcome> = posts.iter().filter(|p| p.protected).collect();
    let mut share: BTreeMap<String, f64> = BTreeMap::new();
    let mut losses: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for p in &protected {
        *share.entry(strategy_name(p.best).to_string()).or_default() += 1.0 / protected.len() as f64;
        for (m, l) in &p.mechanism_losses {
            losses.entry(m.clone()).or_default().push(*l);
        }
        losses.entry("optimal".into()).or_default().push(p.utility_loss);
    }
    BoundReport {
        bound,
        accuracy: posts.iter().filter(|p| p.attack_correct).count() as f64 / n,
        accuracy_by_count: mean_by(posts.iter().map(|p| (p.n_hashtags, f64::from(u8::from(p.attack_correct))))),
        already_private: posts.iter().filter(|p| p.already_private).count(),
        protected: protected.len(),
        unprotectable: posts.iter().filter(|p| !p.already_private && !p.protected).count(),
        mechanism_share: share,
        utility_losses: losses,
        mean_utility_by_count: mean_by(protected.iter().map(|p| (p.n_hashtags, p.utility_loss))),
        mean_seconds: posts.iter().map(|p| p.seconds).sum::<f64>() / n,
        mean_seconds_by_count: mean_by(posts.iter().map(|p| (p.n_hashtags, p.seconds))),
        posts,
    }
}
