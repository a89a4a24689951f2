use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError, UserId, Vocabulary};

/// Background knowledge of the attacker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adversary {
    /// Has seen other posts of the targeted users: post-level split.
    A1,
    /// Has seen nothing from the targeted users: user-level split.
    A2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub adversary: Adversary,
    pub train_fraction: f64,
    pub seed: u64,
    pub repetitions: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::new(Adversary::A1, 0)
    }
}

impl SplitSpec {
    pub fn new(adversary: Adversary, seed: u64) -> Self {
        SplitSpec {
            adversary,
            train_fraction: 0.8,
            seed,
            repetitions: 10,
        }
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CorpusError::InvalidSplit(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.repetitions == 0 {
            return Err(CorpusError::InvalidSplit("repetitions must be >= 1".into()));
        }
        Ok(())
    }
}

/// Train/test halves of one repetition.
///
/// `train` owns a vocabulary built from training posts only. `test` extends
/// that vocabulary, so hashtags first seen at test time get ids at or above
/// `train.vocab().len()` and are treated as unseen by a model trained on
/// `train`.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Corpus,
    pub test: Corpus,
    /// Indices into the source corpus, in the order of each half.
    pub train_index: Vec<usize>,
    pub test_index: Vec<usize>,
}

impl Split {
    pub fn train_users(&self) -> Vec<UserId> {
        users_of(&self.train)
    }

    pub fn test_users(&self) -> Vec<UserId> {
        users_of(&self.test)
    }
}

fn users_of(c: &Corpus) -> Vec<UserId> {
    let mut users: Vec<UserId> = c.posts().iter().map(|p| p.user).collect();
    users.sort_unstable();
    users.dedup();
    users
}

fn repetition_rng(seed: u64, repetition: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repetition as u64);
    rng
}

fn split_count(n: usize, fraction: f64) -> usize {
    ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
}

/// Partitions a labeled corpus for repetition `repetition` of `spec`.
pub fn split(corpus: &Corpus, spec: &SplitSpec, repetition: usize) -> Result<Split, CorpusError> {
    spec.validate()?;
    if repetition >= spec.repetitions {
        return Err(CorpusError::InvalidSplit(format!(
            "repetition {repetition} >= {}",
            spec.repetitions
        )));
    }
    if let Some(i) = corpus.posts().iter().position(|p| p.location.is_none()) {
        return Err(CorpusError::UnlabeledPost(i));
    }
    let mut rng = repetition_rng(spec.seed, repetition);
    let (mut train_index, mut test_index) = match spec.adversary {
        Adversary::A1 => {
            if corpus.len() < 2 {
                return Err(CorpusError::InvalidSplit("A1 split needs at least 2 posts".into()));
            }
            let mut order: Vec<usize> = (0..corpus.len()).collect();
            order.shuffle(&mut rng);
            let n_train = split_count(order.len(), spec.train_fraction);
            let test = order.split_off(n_train);
            (order, test)
        }
        Adversary::A2 => {
            let mut users: Vec<UserId> = corpus.posts().iter().map(|p| p.user).collect();
            users.sort_unstable();
            users.dedup();
            if users.len() < 2 {
                return Err(CorpusError::InvalidSplit("A2 split needs at least 2 users".into()));
            }
            users.shuffle(&mut rng);
            let n_train = split_count(users.len(), spec.train_fraction);
            let mut in_train = vec![false; corpus.users().len()];
            for &u in &users[..n_train] {
                in_train[u as usize] = true;
            }
            (0..corpus.len()).partition(|&i| in_train[corpus.posts()[i].user as usize])
        }
    };
    train_index.sort_unstable();
    test_index.sort_unstable();
    let train = corpus.project(&train_index, Vocabulary::new());
    let test = corpus.project(&test_index, train.vocab().clone());
    Ok(Split {
        train,
        test,
        train_index,
        test_index,
    })
}
