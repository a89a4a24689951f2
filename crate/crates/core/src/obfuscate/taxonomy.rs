use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ObfuscateError;
use crate::corpus::{normalize_hashtag, Corpus, HashtagId, Vocabulary};

/// One line of a taxonomy file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyRecord {
    pub hashtag: String,
    pub category_l2: String,
    pub category_l1: String,
}

/// Vocabulary text used for a category name.
pub fn category_token(name: &str) -> Option<String> {
    let joined = name.split_whitespace().collect::<Vec<_>>().join("_");
    normalize_hashtag(&joined)
}

pub fn parse_taxonomy(text: &str) -> Result<Vec<TaxonomyRecord>, ObfuscateError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TaxonomyRecord = serde_json::from_str(line).map_err(|e| ObfuscateError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_taxonomy(path: &Path) -> Result<Vec<TaxonomyRecord>, ObfuscateError> {
    parse_taxonomy(&std::fs::read_to_string(path)?)
}

pub fn write_taxonomy(records: &[TaxonomyRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("plain struct"));
        out.push('\n');
    }
    out
}

/// Partial map from generalizable hashtags to their two category tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CategoryTaxonomy {
    map: BTreeMap<HashtagId, (HashtagId, HashtagId)>,
    skipped: usize,
}

struct Checked {
    hashtag: String,
    l2: String,
    l1: String,
}

fn check(records: &[TaxonomyRecord]) -> Result<Vec<Checked>, ObfuscateError> {
    let mut l1_of: HashMap<String, String> = HashMap::new();
    let mut seen: HashMap<String, (String, String)> = HashMap::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let invalid = |what: &str| ObfuscateError::Parse {
            line: i + 1,
            message: format!("empty {what}"),
        };
        let hashtag = normalize_hashtag(&r.hashtag).ok_or_else(|| invalid("hashtag"))?;
        let l2 = category_token(&r.category_l2).ok_or_else(|| invalid("category_l2"))?;
        let l1 = category_token(&r.category_l1).ok_or_else(|| invalid("category_l1"))?;
        if let Some(prev) = l1_of.get(&l2) {
            if *prev != l1 {
                return Err(ObfuscateError::CategoryConflict {
                    category_l2: l2,
                    first: prev.clone(),
                    second: l1,
                });
            }
        }
        l1_of.insert(l2.clone(), l1.clone());
        if let Some(prev) = seen.get(&hashtag) {
            if *prev != (l2.clone(), l1.clone()) {
                return Err(ObfuscateError::Parse {
                    line: i + 1,
                    message: format!("hashtag {hashtag:?} listed under two categories"),
                });
            }
        }
        seen.insert(hashtag.clone(), (l2.clone(), l1.clone()));
        out.push(Checked { hashtag, l2, l1 });
    }
    Ok(out)
}

impl CategoryTaxonomy {
    /// Builds the map against `corpus`, appending category tokens that are not
    /// yet hashtags to its vocabulary. Records for hashtags outside the
    /// vocabulary are skipped.
    pub fn attach(records: &[TaxonomyRecord], corpus: &mut Corpus) -> Result<Self, ObfuscateError> {
        let checked = check(records)?;
        let tokens: Vec<&str> = checked
            .iter()
            .filter(|c| corpus.vocab().get(&c.hashtag).is_some())
            .flat_map(|c| [c.l2.as_str(), c.l1.as_str()])
            .collect();
        corpus.extend_vocab(tokens);
        Self::build(&checked, corpus.vocab())
    }

    /// Like [`attach`](Self::attach) for a vocabulary that already holds the
    /// category tokens.
    pub fn resolve(records: &[TaxonomyRecord], vocab: &Vocabulary) -> Result<Self, ObfuscateError> {
        Self::build(&check(records)?, vocab)
    }

    fn build(checked: &[Checked], vocab: &Vocabulary) -> Result<Self, ObfuscateError> {
        let mut map = BTreeMap::new();
        let mut skipped = 0;
        for c in checked {
            let Some(h) = vocab.get(&c.hashtag) else {
                skipped += 1;
                continue;
            };
            let token = |t: &str| {
                vocab
                    .get(t)
                    .ok_or_else(|| ObfuscateError::MissingToken(t.to_string()))
            };
            map.insert(h, (token(&c.l2)?, token(&c.l1)?));
        }
        Ok(CategoryTaxonomy { map, skipped })
    }

    pub fn from_map(map: BTreeMap<HashtagId, (HashtagId, HashtagId)>) -> Self {
        CategoryTaxonomy { map, skipped: 0 }
    }

    /// `(l2 token, l1 token)` for a generalizable hashtag.
    pub fn categories(&self, h: HashtagId) -> Option<(HashtagId, HashtagId)> {
        self.map.get(&h).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Records whose hashtag was not in the vocabulary.
    pub fn skipped(&self) -> usize {
        self.skipped
    }
}
