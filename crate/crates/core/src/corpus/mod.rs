//! Posts, hashtag vocabulary, location table and the derived per-location
//! hashtag index, plus ingestion, filtering, splitting and synthetic data.

mod filter;
mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{filter_corpus, FilterThresholds};
pub use io::{
    load_corpus, load_locations, parse_corpus, parse_locations, parse_posts, write_locations,
    write_posts, LocationRecord, PostRecord,
};
pub use split::{split, Adversary, Split, SplitSpec};
pub use synth::{generate_synthetic, SynthConfig, SyntheticData};

pub type HashtagId = u32;
pub type LocationId = u32;
pub type UserId = u32;

/// Upper bound on hashtags per post enforced by the platform.
pub const MAX_HASHTAGS_PER_POST: usize = 30;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("locations:{line}: duplicate location id {id:?}")]
    DuplicateLocation { line: usize, id: String },
    #[error("locations:{line}: location {id:?} has coordinates out of range ({lat}, {lon})")]
    CoordinateOutOfRange {
        line: usize,
        id: String,
        lat: f64,
        lon: f64,
    },
    #[error("posts:{line}: unknown location {id:?}")]
    UnknownLocation { line: usize, id: String },
    #[error("posts:{line}: invalid hashtag {text:?}")]
    InvalidHashtag { line: usize, text: String },
    #[error("posts:{line}: {count} hashtags exceeds the cap of {MAX_HASHTAGS_PER_POST}")]
    TooManyHashtags { line: usize, count: usize },
    #[error("category {category_l2:?} maps to both {first:?} and {second:?}")]
    CategoryConflict {
        category_l2: String,
        first: String,
        second: String,
    },
    #[error("post {post} references a missing {what} id {id}")]
    DanglingReference {
        post: usize,
        what: &'static str,
        id: u32,
    },
    #[error("post {0} has no location")]
    UnlabeledPost(usize),
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("invalid synthetic config: {0}")]
    InvalidSynthConfig(String),
    #[error("corpus is empty")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases and strips leading `#`. Returns `None` for tokens that end up
/// empty or contain whitespace.
pub fn normalize_hashtag(raw: &str) -> Option<String> {
    let text = raw
        .trim_start_matches(|c: char| c == '#' || c.is_whitespace())
        .trim_end()
        .to_lowercase();
    if text.is_empty() || text.chars().any(char::is_whitespace) {
        None
    } else {
        Some(text)
    }
}

/// Dense, insertion-ordered hashtag table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    texts: Vec<String>,
    index: HashMap<String, HashtagId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<HashtagId> {
        self.index.get(text).copied()
    }

    pub fn text(&self, id: HashtagId) -> Option<&str> {
        self.texts.get(id as usize).map(String::as_str)
    }

    /// Returns the id for `text`, appending it if new.
    pub fn intern(&mut self, text: &str) -> HashtagId {
        if let Some(id) = self.index.get(text) {
            return *id;
        }
        let id = self.texts.len() as HashtagId;
        self.texts.push(text.to_string());
        self.index.insert(text.to_string(), id);
        id
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn iter(&self) -> impl Iterator<Item = (HashtagId, &str)> {
        self.texts
            .iter()
            .enumerate()
            .map(|(i, t)| (i as HashtagId, t.as_str()))
    }
}

impl<S: AsRef<str>> FromIterator<S> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut vocab = Vocabulary::new();
        for text in iter {
            vocab.intern(text.as_ref());
        }
        vocab
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Location {
    /// External identifier as it appears in the locations file.
    pub key: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub category_l2: String,
    pub category_l1: String,
}

impl Location {
    pub fn coordinates_valid(lat: f64, lon: f64) -> bool {
        (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
    }
}

/// One share event: who, where (if disclosed), when, and which hashtags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Post {
    pub user: UserId,
    pub location: Option<LocationId>,
    pub time: i64,
    /// Sorted ascending, no duplicates.
    pub hashtags: Vec<HashtagId>,
}

impl Post {
    pub fn new(user: UserId, location: Option<LocationId>, time: i64, hashtags: Vec<HashtagId>) -> Self {
        let mut hashtags = hashtags;
        hashtags.sort_unstable();
        hashtags.dedup();
        Post {
            user,
            location,
            time,
            hashtags,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    posts: Vec<Post>,
    vocab: Vocabulary,
    locations: Vec<Location>,
    users: Vec<String>,
    by_location: Vec<BTreeMap<HashtagId, u32>>,
}

impl Default for Corpus {
    fn default() -> Self {
        Corpus {
            posts: Vec::new(),
            vocab: Vocabulary::new(),
            locations: Vec::new(),
            users: Vec::new(),
            by_location: Vec::new(),
        }
    }
}

impl Corpus {
    /// Validates references and builds the per-location hashtag index.
    pub fn new(
        posts: Vec<Post>,
        vocab: Vocabulary,
        locations: Vec<Location>,
        users: Vec<String>,
    ) -> Result<Self, CorpusError> {
        let mut l1_of: HashMap<&str, &str> = HashMap::new();
        for loc in &locations {
            match l1_of.get(loc.category_l2.as_str()) {
                Some(prev) if *prev != loc.category_l1 => {
                    return Err(CorpusError::CategoryConflict {
                        category_l2: loc.category_l2.clone(),
                        first: prev.to_string(),
                        second: loc.category_l1.clone(),
                    })
                }
                Some(_) => {}
                None => {
                    l1_of.insert(&loc.category_l2, &loc.category_l1);
                }
            }
        }
        let mut posts = posts;
        for (i, post) in posts.iter_mut().enumerate() {
            post.hashtags.sort_unstable();
            post.hashtags.dedup();
            if post.user as usize >= users.len() {
                return Err(CorpusError::DanglingReference {
                    post: i,
                    what: "user",
                    id: post.user,
                });
            }
            if let Some(loc) = post.location {
                if loc as usize >= locations.len() {
                    return Err(CorpusError::DanglingReference {
                        post: i,
                        what: "location",
                        id: loc,
                    });
                }
            }
            if let Some(&h) = post.hashtags.iter().find(|&&h| h as usize >= vocab.len()) {
                return Err(CorpusError::DanglingReference {
                    post: i,
                    what: "hashtag",
                    id: h,
                });
            }
        }
        let by_location = index_by_location(&posts, locations.len());
        Ok(Corpus {
            posts,
            vocab,
            locations,
            users,
            by_location,
        })
    }

    pub fn posts(&self) -> &[Post] {
        &self.posts
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn locations(&self) -> &[Location] {
        &self.locations
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    /// Hashtag multiset shared at `location`.
    pub fn hashtags_at(&self, location: LocationId) -> Option<&BTreeMap<HashtagId, u32>> {
        self.by_location.get(location as usize)
    }

    pub fn location_by_key(&self, key: &str) -> Option<LocationId> {
        self.locations
            .iter()
            .position(|l| l.key == key)
            .map(|i| i as LocationId)
    }

    /// Hashtag texts of a post.
    pub fn hashtag_texts(&self, post: &Post) -> Vec<&str> {
        post.hashtags
            .iter()
            .filter_map(|&h| self.vocab.text(h))
            .collect()
    }

    /// Keeps only the posts at `indices`, re-densifying the vocabulary on top
    /// of `base`: hashtags already in `base` keep their ids, others are
    /// appended in first-appearance order. Location and user tables are kept
    /// whole so ids stay comparable across projections.
    pub fn project(&self, indices: &[usize], base: Vocabulary) -> Corpus {
        let mut vocab = base;
        let posts = indices
            .iter()
            .map(|&i| {
                let post = &self.posts[i];
                let hashtags = post
                    .hashtags
                    .iter()
                    .map(|&h| vocab.intern(&self.vocab.texts[h as usize]))
                    .collect();
                Post::new(post.user, post.location, post.time, hashtags)
            })
            .collect::<Vec<_>>();
        let by_location = index_by_location(&posts, self.locations.len());
        Corpus {
            posts,
            vocab,
            locations: self.locations.clone(),
            users: self.users.clone(),
            by_location,
        }
    }

    /// Concatenates the posts of `other` (sharing this corpus' location and
    /// user tables) after this corpus' posts, interning `other`'s hashtags.
    pub fn merged_with(&self, other: &Corpus) -> Corpus {
        let mut merged = self.clone();
        for post in &other.posts {
            let hashtags = post
                .hashtags
                .iter()
                .map(|&h| merged.vocab.intern(&other.vocab.texts[h as usize]))
                .collect();
            merged
                .posts
                .push(Post::new(post.user, post.location, post.time, hashtags));
        }
        merged.by_location = index_by_location(&merged.posts, merged.locations.len());
        merged
    }

    /// Appends hashtags to the vocabulary without touching posts.
    pub fn extend_vocab<'a>(&mut self, texts: impl IntoIterator<Item = &'a str>) {
        for t in texts {
            self.vocab.intern(t);
        }
    }
}

fn index_by_location(posts: &[Post], n_locations: usize) -> Vec<BTreeMap<HashtagId, u32>> {
    let mut index = vec![BTreeMap::new(); n_locations];
    for post in posts {
        if let Some(loc) = post.location {
            let entry: &mut BTreeMap<HashtagId, u32> = &mut index[loc as usize];
            for &h in &post.hashtags {
                *entry.entry(h).or_insert(0) += 1;
            }
        }
    }
    index
}

/// Fraction of posts per hashtag count.
pub fn hashtag_count_histogram(corpus: &Corpus) -> Result<BTreeMap<usize, f64>, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for post in corpus.posts() {
        *counts.entry(post.hashtags.len()).or_insert(0) += 1;
    }
    let n = corpus.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / n))
        .collect())
}
