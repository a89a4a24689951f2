//! Picks, per mechanism and overall, the obfuscated hashtag set with the
//! smallest utility loss whose privacy level reaches `alpha`.

use std::cmp::Ordering;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{HashtagId, Location, LocationId};
use crate::embedding::{utility_loss, EmbeddingError, EmbeddingTable};
use crate::forest::RandomForestModel;
use crate::metrics::{accuracy_indicator, expected_distance, incorrectness, Distance, MetricsError};
use crate::obfuscate::{Candidate, CategoryTaxonomy, Mechanism, MechanismKind, ObfuscateError};

#[derive(Debug, Error)]
pub enum AdvisorError {
    #[error("post has no hashtags")]
    EmptyPost,
    #[error("true location {0} is unknown")]
    UnknownLocation(LocationId),
    #[error("alpha {alpha} is invalid for metric {metric}")]
    InvalidAlpha { alpha: f64, metric: &'static str },
    #[error("unknown privacy metric {0:?}")]
    UnknownMetric(String),
    #[error(transparent)]
    Obfuscate(#[from] ObfuscateError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyMetric {
    /// 1 when the attacker's top guess is wrong.
    Inaccuracy,
    /// Posterior mass away from the true location.
    Incorrectness,
    /// Posterior-weighted distance to the true location.
    ExpectedDistanceKm,
}

impl PrivacyMetric {
    pub fn name(self) -> &'static str {
        match self {
            PrivacyMetric::Inaccuracy => "inaccuracy",
            PrivacyMetric::Incorrectness => "incorrectness",
            PrivacyMetric::ExpectedDistanceKm => "expected_distance_km",
        }
    }
}

impl FromStr for PrivacyMetric {
    type Err = AdvisorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "inaccuracy" => Ok(PrivacyMetric::Inaccuracy),
            "incorrectness" => Ok(PrivacyMetric::Incorrectness),
            "expected_distance_km" => Ok(PrivacyMetric::ExpectedDistanceKm),
            other => Err(AdvisorError::UnknownMetric(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdvisorConfig {
    pub alpha: f64,
    pub metric: PrivacyMetric,
    pub mechanisms: Vec<Mechanism>,
    /// Cap on edited hashtags applied to every mechanism.
    pub max_obfuscated: Option<usize>,
}

impl Default for AdvisorConfig {
    fn default() -> Self {
        AdvisorConfig {
            alpha: 1.0,
            metric: PrivacyMetric::Inaccuracy,
            mechanisms: vec![
                Mechanism::hiding(),
                Mechanism::replacement(),
                Mechanism::generalization(),
            ],
            max_obfuscated: None,
        }
    }
}

impl AdvisorConfig {
    pub fn validate(&self) -> Result<(), AdvisorError> {
        let ok = match self.metric {
            PrivacyMetric::Inaccuracy | PrivacyMetric::Incorrectness => (0.0..=1.0).contains(&self.alpha),
            PrivacyMetric::ExpectedDistanceKm => self.alpha.is_finite() && self.alpha >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(AdvisorError::InvalidAlpha {
                alpha: self.alpha,
                metric: self.metric.name(),
            })
        }
    }
}

/// Where a recommended set came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Original,
    Hiding,
    Replacement,
    Generalization,
}

impl From<MechanismKind> for Strategy {
    fn from(k: MechanismKind) -> Self {
        match k {
            MechanismKind::Hiding => Strategy::Hiding,
            MechanismKind::Replacement => Strategy::Replacement,
            MechanismKind::Generalization => Strategy::Generalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub mechanism: Strategy,
    pub hashtags: Vec<HashtagId>,
    pub privacy_level: f64,
    pub utility_loss: f64,
    pub edits: usize,
    pub satisfiable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    pub original: Recommendation,
    /// One entry per enabled mechanism that produced candidates, in
    /// configuration order. Empty when the original set is already private.
    pub per_mechanism: Vec<Recommendation>,
    pub best: Recommendation,
}

/// Everything the advisor needs to score a candidate.
#[derive(Clone, Copy)]
pub struct Advisor<'a> {
    pub model: &'a RandomForestModel,
    pub table: &'a EmbeddingTable,
    pub taxonomy: &'a CategoryTaxonomy,
    pub locations: &'a [Location],
}

const CHUNK: usize = 2048;

struct Scored {
    candidate: Candidate,
    privacy: f64,
    loss: f64,
}

impl Scored {
    fn into_recommendation(self, satisfiable: bool) -> Recommendation {
        Recommendation {
            mechanism: self.candidate.mechanism.into(),
            hashtags: self.candidate.hashtags,
            privacy_level: self.privacy,
            utility_loss: self.loss,
            edits: self.candidate.edits,
            satisfiable,
        }
    }
}

/// Satisfying candidates: lower loss, then fewer edits. Earlier wins ties.
fn better_fit(a: &Recommendation, b: &Recommendation) -> bool {
    a.utility_loss
        .total_cmp(&b.utility_loss)
        .then(a.edits.cmp(&b.edits))
        == Ordering::Less
}

/// Fallback candidates: higher privacy, then lower loss, then fewer edits.
fn more_private(a: &Recommendation, b: &Recommendation) -> bool {
    b.privacy_level
        .total_cmp(&a.privacy_level)
        .then(a.utility_loss.total_cmp(&b.utility_loss))
        .then(a.edits.cmp(&b.edits))
        == Ordering::Less
}

impl Advisor<'_> {
    pub fn privacy_level(
        &self,
        hashtags: &[HashtagId],
        true_loc: LocationId,
        metric: PrivacyMetric,
    ) -> Result<f64, AdvisorError> {
        if true_loc as usize >= self.locations.len() {
            return Err(AdvisorError::UnknownLocation(true_loc));
        }
        let posterior = self.model.posterior_for(hashtags);
        Ok(match metric {
            PrivacyMetric::Inaccuracy => {
                f64::from(1 - accuracy_indicator(posterior.argmax(), true_loc))
            }
            PrivacyMetric::Incorrectness => incorrectness(&posterior, true_loc),
            PrivacyMetric::ExpectedDistanceKm => {
                expected_distance(&posterior, true_loc, self.locations, Distance::Geographic)?
            }
        })
    }

    /// Best candidate of one mechanism, or `None` when it has no candidates.
    fn optimize(
        &self,
        mechanism: &Mechanism,
        original: &[HashtagId],
        true_loc: LocationId,
        cfg: &AdvisorConfig,
    ) -> Result<Option<Recommendation>, AdvisorError> {
        let mut stream = mechanism.enumerate(original, self.table, self.taxonomy, cfg.max_obfuscated)?;
        let mut fit: Option<Recommendation> = None;
        let mut fallback: Option<Recommendation> = None;
        loop {
            let chunk: Vec<Candidate> = stream.by_ref().take(CHUNK).collect();
            if chunk.is_empty() {
                break;
            }
            let scored = chunk
                .into_par_iter()
                .map(|candidate| {
                    let privacy = self.privacy_level(&candidate.hashtags, true_loc, cfg.metric)?;
                    let loss = utility_loss(original, &candidate.hashtags, self.table)?;
                    Ok(Scored {
                        candidate,
                        privacy,
                        loss,
                    })
                })
                .collect::<Result<Vec<_>, AdvisorError>>()?;
            for s in scored {
                if s.privacy >= cfg.alpha {
                    let r = s.into_recommendation(true);
                    if fit.as_ref().is_none_or(|f| better_fit(&r, f)) {
                        fit = Some(r);
                    }
                } else if fit.is_none() {
                    let r = s.into_recommendation(false);
                    if fallback.as_ref().is_none_or(|f| more_private(&r, f)) {
                        fallback = Some(r);
                    }
                }
            }
        }
        Ok(fit.or(fallback))
    }

    /// Runs every enabled mechanism on `hashtags` unless the set is already
    /// private enough.
    pub fn recommend(
        &self,
        hashtags: &[HashtagId],
        true_loc: LocationId,
        cfg: &AdvisorConfig,
    ) -> Result<Advice, AdvisorError> {
        cfg.validate()?;
        if hashtags.is_empty() {
            return Err(AdvisorError::EmptyPost);
        }
        let mut original_set = hashtags.to_vec();
        original_set.sort_unstable();
        original_set.dedup();
        let level = self.privacy_level(&original_set, true_loc, cfg.metric)?;
        let original = Recommendation {
            mechanism: Strategy::Original,
            hashtags: original_set.clone(),
            privacy_level: level,
            utility_loss: 0.0,
            edits: 0,
            satisfiable: level >= cfg.alpha,
        };
        if original.satisfiable {
            return Ok(Advice {
                best: original.clone(),
                original,
                per_mechanism: Vec::new(),
            });
        }

        let mut per_mechanism = Vec::new();
        for m in &cfg.mechanisms {
            if let Some(r) = self.optimize(m, &original_set, true_loc, cfg)? {
                per_mechanism.push(r);
            }
        }
        let mut best: Option<&Recommendation> = None;
        for r in &per_mechanism {
            best = match best {
                None => Some(r),
                Some(b) if r.satisfiable && (!b.satisfiable || better_fit(r, b)) => Some(r),
                Some(b) if !r.satisfiable && !b.satisfiable && more_private(r, b) => Some(r),
                keep => keep,
            };
        }
        let best = best.cloned().unwrap_or_else(|| original.clone());
        Ok(Advice {
            original,
            per_mechanism,
            best,
        })
    }

    /// Best recommendation for each cap on the number of edited hashtags.
    pub fn recommend_bounded_profile(
        &self,
        hashtags: &[HashtagId],
        true_loc: LocationId,
        cfg: &AdvisorConfig,
        bounds: &[Option<usize>],
    ) -> Result<Vec<(Option<usize>, Recommendation)>, AdvisorError> {
        bounds
            .iter()
            .map(|&bound| {
                let cfg = AdvisorConfig {
                    max_obfuscated: bound,
                    ..cfg.clone()
                };
                Ok((bound, self.recommend(hashtags, true_loc, &cfg)?.best))
            })
            .collect()
    }
}
