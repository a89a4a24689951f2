//! Hashtag vectors learned from post co-occurrence (skip-gram with negative
//! sampling), set embeddings, the Euclidean utility loss, and nearest
//! neighbours.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, HashtagId, Vocabulary};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("embedding file line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding for {0:?} is not in the vocabulary")]
    UnknownHashtag(String),
    #[error("no vector for hashtag {0:?}")]
    MissingVector(String),
    #[error("hashtag id {0} has no vector")]
    MissingId(HashtagId),
    #[error("hashtag {0:?} cannot be written to an embedding file")]
    UnwritableHashtag(String),
    #[error("set embedding of an empty set")]
    EmptySet,
    #[error("asked for {k} neighbours among {available} other hashtags")]
    TooManyNeighbors { k: usize, available: usize },
    #[error("cannot train embeddings on an empty corpus")]
    EmptyCorpus,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major vectors, one per hashtag, aligned with a hashtag vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    texts: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, rows: Vec<(String, Vec<f64>)>) -> Result<Self, EmbeddingError> {
        let mut texts = Vec::with_capacity(rows.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (i, (text, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    line: i + 2,
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::Parse {
                    line: i + 2,
                    message: "non-finite value".into(),
                });
            }
            texts.push(text);
            data.extend(v);
        }
        Ok(EmbeddingTable { dim, texts, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn vector(&self, id: HashtagId) -> Result<&[f64], EmbeddingError> {
        let i = id as usize;
        if i >= self.texts.len() {
            return Err(EmbeddingError::MissingId(id));
        }
        Ok(&self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Reorders rows to match `vocab` ids. Every vocabulary entry must have a
    /// row and every row must be in the vocabulary.
    pub fn align_to(&self, vocab: &Vocabulary) -> Result<Self, EmbeddingError> {
        let mut slot = vec![None; vocab.len()];
        for (i, text) in self.texts.iter().enumerate() {
            let id = vocab
                .get(text)
                .ok_or_else(|| EmbeddingError::UnknownHashtag(text.clone()))?;
            slot[id as usize] = Some(i);
        }
        let mut data = Vec::with_capacity(vocab.len() * self.dim);
        for (id, text) in vocab.iter() {
            let row = slot[id as usize].ok_or_else(|| EmbeddingError::MissingVector(text.into()))?;
            data.extend_from_slice(&self.data[row * self.dim..(row + 1) * self.dim]);
        }
        Ok(EmbeddingTable {
            dim: self.dim,
            texts: vocab.texts().to_vec(),
            data,
        })
    }

    /// `<count> <dim>` header, then `<hashtag> v1 ... v_dim` per line.
    pub fn to_text(&self) -> Result<String, EmbeddingError> {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, text) in self.texts.iter().enumerate() {
            if text.is_empty() || text.chars().any(char::is_whitespace) {
                return Err(EmbeddingError::UnwritableHashtag(text.clone()));
            }
            out.push_str(text);
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                write!(out, " {x}").expect("writing to a String");
            }
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        std::fs::write(path, self.to_text()?)?;
        Ok(())
    }
}

/// Parses the text embedding format. Rows keep file order.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, EmbeddingError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, header)) = lines.next() else {
        return EmbeddingTable::new(0, Vec::new());
    };
    let parse_err = |line: usize, message: String| EmbeddingError::Parse { line, message };
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [count, dim] = fields[..] else {
        return Err(parse_err(1, "header must be `<count> <dim>`".into()));
    };
    let count: usize = count
        .parse()
        .map_err(|e| parse_err(1, format!("count: {e}")))?;
    let dim: usize = dim.parse().map_err(|e| parse_err(1, format!("dim: {e}")))?;

    let mut rows = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let mut parts = line.split_whitespace();
        let word = parts.next().expect("non-empty line").to_string();
        let values = parts
            .map(|p| p.parse::<f64>())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(i + 1, e.to_string()))?;
        if values.len() != dim {
            return Err(EmbeddingError::DimensionMismatch {
                line: i + 1,
                expected: dim,
                found: values.len(),
            });
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(i + 1, "non-finite value".into()));
        }
        if !seen.insert(word.clone()) {
            return Err(parse_err(i + 1, format!("duplicate hashtag {word:?}")));
        }
        rows.push((word, values));
    }
    if rows.len() != count {
        return Err(parse_err(
            1,
            format!("header announces {count} rows, found {}", rows.len()),
        ));
    }
    EmbeddingTable::new(dim, rows)
}

/// Loads an embedding file and aligns it with `vocab`.
pub fn load_embeddings(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingTable, EmbeddingError> {
    parse_embeddings(&std::fs::read_to_string(path)?)?.align_to(vocab)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingParams {
    pub dim: usize,
    pub epochs: usize,
    pub negative_samples: usize,
    /// Decays linearly towards zero over training.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            dim: 100,
            epochs: 5,
            negative_samples: 5,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// Hashtags that never share a post with another hashtag; they keep their
    /// initialization vector.
    pub isolated: Vec<HashtagId>,
    pub pairs: u64,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x.clamp(-30.0, 30.0)).exp())
}

/// Skip-gram with negative sampling where the context of a hashtag is every
/// other hashtag of the same post. Each published vector is the sum of the
/// hashtag's input and output vectors. Covers the whole corpus vocabulary.
pub fn train_embeddings(
    corpus: &Corpus,
    params: &EmbeddingParams,
) -> Result<(EmbeddingTable, EmbeddingReport), EmbeddingError> {
    if corpus.is_empty() {
        return Err(EmbeddingError::EmptyCorpus);
    }
    let n = corpus.vocab().len();
    let dim = params.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut freq = vec![0u64; n];
    let mut has_context = vec![false; n];
    let mut pairs_per_epoch = 0u64;
    for post in corpus.posts() {
        let k = post.hashtags.len() as u64;
        pairs_per_epoch += k * k.saturating_sub(1);
        for &h in &post.hashtags {
            freq[h as usize] += 1;
            if k > 1 {
                has_context[h as usize] = true;
            }
        }
    }
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &f in &freq {
        acc += (f as f64).powf(0.75);
        cumulative.push(acc);
    }
    let total_weight = acc;

    let mut input: Vec<f64> = (0..n * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0f64; n * dim];
    let mut grad = vec![0.0f64; dim];

    let total_pairs = (pairs_per_epoch * params.epochs as u64).max(1);
    let mut done = 0u64;
    for _ in 0..params.epochs {
        for post in corpus.posts() {
            for &center in &post.hashtags {
                for &context in &post.hashtags {
                    if context == center {
                        continue;
                    }
                    let lr = params.learning_rate
                        * (1.0 - done as f64 / total_pairs as f64).max(1e-4);
                    done += 1;
                    let c = center as usize * dim;
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    for s in 0..=params.negative_samples {
                        let (target, label) = if s == 0 {
                            (context as usize, 1.0)
                        } else {
                            let r = rng.random::<f64>() * total_weight;
                            let t = cumulative.partition_point(|&w| w <= r).min(n - 1);
                            if t == context as usize {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let o = target * dim;
                        let dot: f64 = (0..dim).map(|j| input[c + j] * output[o + j]).sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for j in 0..dim {
                            grad[j] += g * output[o + j];
                            output[o + j] += g * input[c + j];
                        }
                    }
                    for j in 0..dim {
                        input[c + j] += grad[j];
                    }
                }
            }
        }
    }

    let report = EmbeddingReport {
        isolated: (0..n as HashtagId)
            .filter(|&h| !has_context[h as usize])
            .collect(),
        pairs: done,
    };
    // Contexts are symmetric, so a hashtag's input vector lines up with its
    // partners' output vectors; publishing the sum puts partners together.
    for (i, o) in input.iter_mut().zip(&output) {
        *i += o;
    }
    let table = EmbeddingTable {
        dim,
        texts: corpus.vocab().texts().to_vec(),
        data: input,
    };
    Ok((table, report))
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Mean of the member vectors. The empty set has no embedding.
pub fn sme(hashtags: &[HashtagId], table: &EmbeddingTable) -> Result<Vec<f64>, EmbeddingError> {
    if hashtags.is_empty() {
        return Err(EmbeddingError::EmptySet);
    }
    let mut sum = vec![0.0; table.dim()];
    for &h in hashtags {
        for (s, x) in sum.iter_mut().zip(table.vector(h)?) {
            *s += x;
        }
    }
    let n = hashtags.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

/// Euclidean distance between set embeddings. An empty candidate is scored
/// against the zero vector.
pub fn utility_loss(
    original: &[HashtagId],
    candidate: &[HashtagId],
    table: &EmbeddingTable,
) -> Result<f64, EmbeddingError> {
    let a = sme(original, table)?;
    let b = if candidate.is_empty() {
        vec![0.0; table.dim()]
    } else {
        sme(candidate, table)?
    };
    Ok(euclidean(&a, &b))
}

/// The `k` hashtags closest to `h` (excluding `h` and anything in
/// `exclude`), nearest first, ties broken by lower id.
pub fn nearest_neighbors_excluding(
    h: HashtagId,
    k: usize,
    exclude: &[HashtagId],
    table: &EmbeddingTable,
) -> Result<Vec<HashtagId>, EmbeddingError> {
    let v = table.vector(h)?;
    let mut scored: Vec<(f64, HashtagId)> = (0..table.len() as HashtagId)
        .filter(|&other| other != h && !exclude.contains(&other))
        .map(|other| {
            let w = table.vector(other).expect("id within table");
            (euclidean(v, w), other)
        })
        .collect();
    if k > scored.len() {
        return Err(EmbeddingError::TooManyNeighbors {
            k,
            available: scored.len(),
        });
    }
    let by_distance = |a: &(f64, HashtagId), b: &(f64, HashtagId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, by_distance);
    }
    scored.truncate(k);
    scored.sort_by(by_distance);
    Ok(scored.into_iter().map(|(_, id)| id).collect())
}

pub fn nearest_neighbors(
    h: HashtagId,
    k: usize,
    table: &EmbeddingTable,
) -> Result<Vec<HashtagId>, EmbeddingError> {
    nearest_neighbors_excluding(h, k, &[], table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::corpus;
    use proptest::prelude::*;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        let dim = rows.first().map_or(0, |r| r.1.len());
        EmbeddingTable::new(
            dim,
            rows.iter().map(|(t, v)| (t.to_string(), v.to_vec())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn parses_small_file() {
        let t = parse_embeddings("3 4\na 1 2 3 4\nb 0 0 0 0\nc -1 0.5 2 1e-3\n").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.dim(), 4);
        assert_eq!(t.vector(2).unwrap(), &[-1.0, 0.5, 2.0, 0.001]);
    }

    #[test]
    fn short_row_is_rejected() {
        let err = parse_embeddings("1 4\na 1 2 3\n").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 4,
                found: 3
            }
        ));
        assert!(parse_embeddings("2 1\na 1\n").is_err());
        assert!(parse_embeddings("1 1\na NaN\n").is_err());
        assert!(parse_embeddings("x\n").is_err());
    }

    #[test]
    fn align_reports_unknown_and_missing() {
        let t = table(&[("a", &[1.0]), ("b", &[2.0])]);
        let vocab: Vocabulary = ["b", "a"].into_iter().collect();
        let aligned = t.align_to(&vocab).unwrap();
        assert_eq!(aligned.vector(0).unwrap(), &[2.0]);
        let small: Vocabulary = ["a"].into_iter().collect();
        assert!(matches!(t.align_to(&small), Err(EmbeddingError::UnknownHashtag(_))));
        let big: Vocabulary = ["a", "b", "c"].into_iter().collect();
        assert!(matches!(t.align_to(&big), Err(EmbeddingError::MissingVector(_))));
    }

    #[test]
    fn text_round_trip() {
        let t = table(&[("a", &[0.1, -2.5e-7]), ("b", &[1.0 / 3.0, 7.0])]);
        assert_eq!(parse_embeddings(&t.to_text().unwrap()).unwrap(), t);
    }

    #[test]
    fn sme_cases() {
        let t = table(&[("a", &[1.0, -2.0]), ("b", &[-1.0, 2.0]), ("c", &[3.0, 0.5])]);
        assert_eq!(sme(&[2], &t).unwrap(), vec![3.0, 0.5]);
        assert_eq!(sme(&[0, 1], &t).unwrap(), vec![0.0, 0.0]);
        assert!(matches!(sme(&[], &t), Err(EmbeddingError::EmptySet)));
        assert!(matches!(sme(&[9], &t), Err(EmbeddingError::MissingId(9))));
    }

    #[test]
    fn utility_loss_cases() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 2.0]), ("c", &[3.0, 4.0])]);
        assert_eq!(utility_loss(&[0, 1], &[0, 1], &t).unwrap(), 0.0);
        let direct = ((1.0f64 - 3.0).powi(2) + 4.0f64.powi(2)).sqrt();
        assert_eq!(utility_loss(&[0], &[2], &t).unwrap(), direct);
        assert_eq!(utility_loss(&[2], &[], &t).unwrap(), 5.0);
        assert!(utility_loss(&[], &[0], &t).is_err());
    }

    #[test]
    fn neighbors_cases() {
        let t = table(&[
            ("a", &[0.0, 0.0]),
            ("b", &[3.0, 0.0]),
            ("c", &[0.0, 0.0]),
            ("d", &[1.0, 1.0]),
        ]);
        assert_eq!(nearest_neighbors(0, 3, &t).unwrap(), vec![2, 3, 1]);
        assert_eq!(nearest_neighbors(0, 1, &t).unwrap(), vec![2]);
        assert_eq!(nearest_neighbors_excluding(0, 1, &[2], &t).unwrap(), vec![3]);
        assert!(nearest_neighbors(0, 4, &t).is_err());
        assert!(nearest_neighbors(7, 1, &t).is_err());
    }

    #[test]
    fn co_occurring_pairs_cluster() {
        let mut rows: Vec<(&str, Option<u32>, &[&str])> = Vec::new();
        for _ in 0..60 {
            rows.push(("u", Some(0), &["a1", "a2"]));
            rows.push(("u", Some(0), &["b1", "b2"]));
            rows.push(("u", Some(0), &["c1", "c2"]));
        }
        let c = corpus(1, &rows);
        let params = EmbeddingParams {
            dim: 16,
            epochs: 20,
            ..EmbeddingParams::default()
        };
        let (t, report) = train_embeddings(&c, &params).unwrap();
        assert!(report.isolated.is_empty());
        let cos = |a: HashtagId, b: HashtagId| {
            let (x, y) = (t.vector(a).unwrap(), t.vector(b).unwrap());
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            dot / (euclidean(x, &[0.0; 16]) * euclidean(y, &[0.0; 16]))
        };
        for pair in [(0, 1), (2, 3), (4, 5)] {
            let intra = cos(pair.0, pair.1);
            for other in 0..6 {
                if other != pair.0 && other != pair.1 {
                    assert!(intra > cos(pair.0, other), "{pair:?} vs {other}: {intra} {}", cos(pair.0, other));
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_sized() {
        let c = corpus(1, &[("u", Some(0), &["x", "y", "z"]), ("u", Some(0), &["lonely"])]);
        let p = EmbeddingParams::default();
        let (a, report) = train_embeddings(&c, &p).unwrap();
        let (b, _) = train_embeddings(&c, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 100);
        assert!((0..4).all(|h| a.vector(h).unwrap().len() == 100));
        assert_eq!(report.isolated, vec![3]);
        assert!(train_embeddings(&Corpus::default(), &p).is_err());
    }

    fn arb_table() -> impl Strategy<Value = EmbeddingTable> {
        prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 6).prop_map(|rows| {
            EmbeddingTable::new(
                3,
                rows.into_iter().enumerate().map(|(i, v)| (format!("h{i}"), v)).collect(),
            )
            .unwrap()
        })
    }

    fn arb_set() -> impl Strategy<Value = Vec<HashtagId>> {
        prop::collection::btree_set(0u32..6, 1..5).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn utility_is_a_pseudometric(t in arb_table(), a in arb_set(), b in arb_set(), c in arb_set()) {
            let d = |x: &[HashtagId], y: &[HashtagId]| utility_loss(x, y, &t).unwrap();
            prop_assert_eq!(d(&a, &a), 0.0);
            prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-9);
        }

        #[test]
        fn sme_matches_componentwise_sum(t in arb_table(), set in arb_set()) {
            let mean = sme(&set, &t).unwrap();
            for j in 0..3 {
                let mut total = 0.0;
                for &h in &set {
                    total += t.vector(h).unwrap()[j];
                }
                prop_assert!((mean[j] - total / set.len() as f64).abs() < 1e-12);
            }
        }

        #[test]
        fn singleton_sme_is_the_vector(t in arb_table(), h in 0u32..6) {
            prop_assert_eq!(sme(&[h], &t).unwrap(), t.vector(h).unwrap().to_vec());
        }

        #[test]
        fn neighbors_match_full_scan(t in arb_table(), h in 0u32..6, k in 0usize..6) {
            let got = nearest_neighbors(h, k, &t).unwrap();
            let mut all: Vec<(f64, u32)> = (0..6u32)
                .filter(|&o| o != h)
                .map(|o| (utility_loss(&[h], &[o], &t).unwrap(), o))
                .collect();
            all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
            let expected: Vec<u32> = all.into_iter().take(k).map(|x| x.1).collect();
            prop_assert_eq!(got, expected);
        }
    }
}
