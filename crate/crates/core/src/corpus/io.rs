use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    normalize_hashtag, Corpus, CorpusError, Location, LocationId, Post, Vocabulary,
    MAX_HASHTAGS_PER_POST,
};

/// One line of the posts file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRecord {
    pub user: String,
    pub location: Option<String>,
    pub time: i64,
    pub hashtags: Vec<String>,
}

/// One line of the locations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub id: String,
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    pub category_l2: String,
    pub category_l1: String,
}

fn parse_lines<T: serde::de::DeserializeOwned>(
    file: &'static str,
    text: &str,
) -> Result<Vec<(usize, T)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| CorpusError::Parse {
            file,
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Parses a locations JSON Lines document into a location table.
pub fn parse_locations(text: &str) -> Result<Vec<Location>, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut locations = Vec::new();
    for (line, rec) in parse_lines::<LocationRecord>("locations", text)? {
        if seen.insert(rec.id.clone(), line).is_some() {
            return Err(CorpusError::DuplicateLocation { line, id: rec.id });
        }
        if !Location::coordinates_valid(rec.lat, rec.lon) {
            return Err(CorpusError::CoordinateOutOfRange {
                line,
                id: rec.id,
                lat: rec.lat,
                lon: rec.lon,
            });
        }
        locations.push(Location {
            key: rec.id,
            name: rec.name,
            lat: rec.lat,
            lon: rec.lon,
            category_l2: rec.category_l2,
            category_l1: rec.category_l1,
        });
    }
    Ok(locations)
}

/// Parses a posts JSON Lines document.
pub fn parse_posts(text: &str) -> Result<Vec<(usize, PostRecord)>, CorpusError> {
    parse_lines("posts", text)
}

/// Builds a corpus from posts and locations documents. Ids are assigned in
/// first-appearance order; hashtags are normalized and deduplicated per post.
pub fn parse_corpus(posts: &str, locations: &str) -> Result<Corpus, CorpusError> {
    let locations = parse_locations(locations)?;
    from_records(parse_posts(posts)?, locations)
}

pub(crate) fn from_records(
    records: Vec<(usize, PostRecord)>,
    locations: Vec<Location>,
) -> Result<Corpus, CorpusError> {
    let location_ids: HashMap<&str, LocationId> = locations
        .iter()
        .enumerate()
        .map(|(i, l)| (l.key.as_str(), i as LocationId))
        .collect();
    let mut vocab = Vocabulary::new();
    let mut users: Vec<String> = Vec::new();
    let mut user_ids: HashMap<String, u32> = HashMap::new();
    let mut posts = Vec::with_capacity(records.len());
    for (line, rec) in records {
        let location = match &rec.location {
            Some(key) => Some(*location_ids.get(key.as_str()).ok_or_else(|| {
                CorpusError::UnknownLocation {
                    line,
                    id: key.clone(),
                }
            })?),
            None => None,
        };
        let user = *user_ids.entry(rec.user.clone()).or_insert_with(|| {
            users.push(rec.user.clone());
            (users.len() - 1) as u32
        });
        let mut hashtags = Vec::with_capacity(rec.hashtags.len());
        for raw in &rec.hashtags {
            let text = normalize_hashtag(raw).ok_or_else(|| CorpusError::InvalidHashtag {
                line,
                text: raw.clone(),
            })?;
            hashtags.push(vocab.intern(&text));
        }
        let post = Post::new(user, location, rec.time, hashtags);
        if post.hashtags.len() > MAX_HASHTAGS_PER_POST {
            return Err(CorpusError::TooManyHashtags {
                line,
                count: post.hashtags.len(),
            });
        }
        posts.push(post);
    }
    Corpus::new(posts, vocab, locations, users)
}

pub fn load_locations(path: &Path) -> Result<Vec<Location>, CorpusError> {
    parse_locations(&std::fs::read_to_string(path)?)
}

/// Loads a corpus from a posts file and a locations file (both JSON Lines).
pub fn load_corpus(posts: &Path, locations: &Path) -> Result<Corpus, CorpusError> {
    let locations = load_locations(locations)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(File::open(posts)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            file: "posts",
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push((i + 1, rec));
    }
    from_records(records, locations)
}

pub fn write_posts<W: Write>(corpus: &Corpus, mut out: W) -> Result<(), CorpusError> {
    for post in corpus.posts() {
        let rec = PostRecord {
            user: corpus.users()[post.user as usize].clone(),
            location: post
                .location
                .map(|l| corpus.locations()[l as usize].key.clone()),
            time: post.time,
            hashtags: corpus
                .hashtag_texts(post)
                .into_iter()
                .map(str::to_string)
                .collect(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_locations<W: Write>(locations: &[Location], mut out: W) -> Result<(), CorpusError> {
    for loc in locations {
        let rec = LocationRecord {
            id: loc.key.clone(),
            name: loc.name.clone(),
            lat: loc.lat,
            lon: loc.lon,
            category_l2: loc.category_l2.clone(),
            category_l1: loc.category_l1.clone(),
        };
        serde_json::to_writer(&mut out, &rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
