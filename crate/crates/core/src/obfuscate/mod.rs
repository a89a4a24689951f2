//! Candidate obfuscated hashtag sets for hiding, replacement and
//! generalization.
//!
//! Every stream starts with the unmodified set (zero edits) and then walks
//! edit counts upwards; within one count, positions and then options are
//! visited in lexicographic order. Generalization of a set without any
//! generalizable hashtag yields nothing at all.

mod taxonomy;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::HashtagId;
use crate::embedding::{nearest_neighbors_excluding, EmbeddingError, EmbeddingTable};

pub use taxonomy::{
    category_token, load_taxonomy, parse_taxonomy, write_taxonomy, CategoryTaxonomy, TaxonomyRecord,
};

#[derive(Debug, Error)]
pub enum ObfuscateError {
    #[error("taxonomy line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("category {category_l2:?} is under both {first:?} and {second:?}")]
    CategoryConflict {
        category_l2: String,
        first: String,
        second: String,
    },
    #[error("category token {0:?} is not in the vocabulary")]
    MissingToken(String),
    #[error("replacement needs at least one neighbour per hashtag")]
    NoNeighbors,
    #[error("cannot obfuscate an empty hashtag set")]
    EmptyOriginal,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    Hiding,
    Replacement,
    Generalization,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::Hiding => "hiding",
            MechanismKind::Replacement => "replacement",
            MechanismKind::Generalization => "generalization",
        }
    }
}

/// A mechanism with its thresholds. `None` leaves the number of edited
/// hashtags unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    Hiding {
        max_removed: Option<usize>,
    },
    Replacement {
        neighbors: usize,
        max_replaced: Option<usize>,
    },
    Generalization {
        max_generalized: Option<usize>,
    },
}

impl Mechanism {
    pub fn hiding() -> Self {
        Mechanism::Hiding { max_removed: None }
    }

    pub fn replacement() -> Self {
        Mechanism::Replacement {
            neighbors: 2,
            max_replaced: None,
        }
    }

    pub fn generalization() -> Self {
        Mechanism::Generalization {
            max_generalized: None,
        }
    }

    pub fn kind(&self) -> MechanismKind {
        match self {
            Mechanism::Hiding { .. } => MechanismKind::Hiding,
            Mechanism::Replacement { .. } => MechanismKind::Replacement,
            Mechanism::Generalization { .. } => MechanismKind::Generalization,
        }
    }

    fn max_edits(&self) -> Option<usize> {
        match *self {
            Mechanism::Hiding { max_removed } => max_removed,
            Mechanism::Replacement { max_replaced, .. } => max_replaced,
            Mechanism::Generalization { max_generalized } => max_generalized,
        }
    }

    /// Candidate stream for `original` (sorted, deduplicated), with the
    /// mechanism's own threshold further capped by `bound`.
    pub fn enumerate(
        &self,
        original: &[HashtagId],
        table: &EmbeddingTable,
        taxonomy: &CategoryTaxonomy,
        bound: Option<usize>,
    ) -> Result<CandidateStream, ObfuscateError> {
        let cap = match (self.max_edits(), bound) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        match *self {
            Mechanism::Hiding { .. } => enumerate_hiding(original, cap),
            Mechanism::Replacement { neighbors, .. } => {
                enumerate_replacement(original, table, neighbors, cap)
            }
            Mechanism::Generalization { .. } => enumerate_generalization(original, taxonomy, cap),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Candidate {
    /// Sorted hashtag ids.
    pub hashtags: Vec<HashtagId>,
    pub mechanism: MechanismKind,
    pub edits: usize,
}

fn canonical(original: &[HashtagId]) -> Result<Vec<HashtagId>, ObfuscateError> {
    if original.is_empty() {
        return Err(ObfuscateError::EmptyOriginal);
    }
    let mut v = original.to_vec();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

/// Removes up to `max_removed` hashtags. The empty set is included.
pub fn enumerate_hiding(
    original: &[HashtagId],
    max_removed: Option<usize>,
) -> Result<CandidateStream, ObfuscateError> {
    let original = canonical(original)?;
    let options = vec![vec![None]; original.len()];
    let eligible = (0..original.len()).collect();
    Ok(CandidateStream::new(
        original,
        MechanismKind::Hiding,
        eligible,
        options,
        max_removed,
        false,
    ))
}

/// Swaps up to `max_replaced` hashtags for one of their `neighbors` nearest
/// hashtags outside the original set. No two positions may pick the same
/// replacement.
pub fn enumerate_replacement(
    original: &[HashtagId],
    table: &EmbeddingTable,
    neighbors: usize,
    max_replaced: Option<usize>,
) -> Result<CandidateStream, ObfuscateError> {
    if neighbors == 0 {
        return Err(ObfuscateError::NoNeighbors);
    }
    let original = canonical(original)?;
    let available = table.len().saturating_sub(original.len());
    let mut options = Vec::with_capacity(original.len());
    for &h in &original {
        let near = nearest_neighbors_excluding(h, neighbors.min(available), &original, table)?;
        options.push(near.into_iter().map(Some).collect::<Vec<_>>());
    }
    let eligible = (0..original.len()).filter(|&i| !options[i].is_empty()).collect();
    Ok(CandidateStream::new(
        original,
        MechanismKind::Replacement,
        eligible,
        options,
        max_replaced,
        true,
    ))
}

/// Lifts up to `max_generalized` hashtags to their l2 or l1 category token.
pub fn enumerate_generalization(
    original: &[HashtagId],
    taxonomy: &CategoryTaxonomy,
    max_generalized: Option<usize>,
) -> Result<CandidateStream, ObfuscateError> {
    let original = canonical(original)?;
    let mut options = vec![Vec::new(); original.len()];
    let mut eligible = Vec::new();
    for (i, &h) in original.iter().enumerate() {
        if let Some((l2, l1)) = taxonomy.categories(h) {
            options[i] = [l2, l1].into_iter().filter(|&t| t != h).map(Some).collect();
            if !options[i].is_empty() {
                eligible.push(i);
            }
        }
    }
    let mut stream = CandidateStream::new(
        original,
        MechanismKind::Generalization,
        eligible,
        options,
        max_generalized,
        true,
    );
    if stream.eligible.is_empty() {
        stream.state = State::Done;
    }
    Ok(stream)
}

#[derive(Debug, Clone)]
enum State {
    Identity,
    Running { combo: Vec<usize>, odo: Vec<usize> },
    Done,
}

/// Lazy candidate stream; see the module docs for the order.
#[derive(Debug, Clone)]
pub struct CandidateStream {
    original: Vec<HashtagId>,
    kind: MechanismKind,
    /// Positions of `original` that have at least one option.
    eligible: Vec<usize>,
    /// Options per position; `None` removes the hashtag.
    options: Vec<Vec<Option<HashtagId>>>,
    max_edits: usize,
    state: State,
    seen: Option<HashSet<Vec<HashtagId>>>,
}

impl CandidateStream {
    fn new(
        original: Vec<HashtagId>,
        kind: MechanismKind,
        eligible: Vec<usize>,
        options: Vec<Vec<Option<HashtagId>>>,
        max_edits: Option<usize>,
        dedup: bool,
    ) -> Self {
        let max_edits = max_edits.unwrap_or(usize::MAX).min(eligible.len());
        CandidateStream {
            original,
            kind,
            eligible,
            options,
            max_edits,
            state: State::Identity,
            seen: dedup.then(HashSet::new),
        }
    }

    pub fn original(&self) -> &[HashtagId] {
        &self.original
    }

    fn start(&self, k: usize) -> State {
        if k == 0 || k > self.max_edits {
            State::Done
        } else {
            State::Running {
                combo: (0..k).collect(),
                odo: vec![0; k],
            }
        }
    }

    /// Advances `odo`, then `combo`; returns the next state.
    fn advance(&self, mut combo: Vec<usize>, mut odo: Vec<usize>) -> State {
        for i in (0..odo.len()).rev() {
            let n_opts = self.options[self.eligible[combo[i]]].len();
            if odo[i] + 1 < n_opts {
                odo[i] += 1;
                return State::Running { combo, odo };
            }
            odo[i] = 0;
        }
        let k = combo.len();
        let n = self.eligible.len();
        for i in (0..k).rev() {
            if combo[i] < n - k + i {
                combo[i] += 1;
                for j in i + 1..k {
                    combo[j] = combo[j - 1] + 1;
                }
                return State::Running { combo, odo };
            }
        }
        self.start(k + 1)
    }

    fn build(&self, combo: &[usize], odo: &[usize]) -> Option<Vec<HashtagId>> {
        let mut out = Vec::with_capacity(self.original.len());
        let mut edited = combo.iter().map(|&c| self.eligible[c]).peekable();
        let mut replacements = 0;
        for (pos, &h) in self.original.iter().enumerate() {
            if edited.peek() == Some(&pos) {
                edited.next();
                let slot = combo.iter().position(|&c| self.eligible[c] == pos).expect("edited");
                if let Some(r) = self.options[pos][odo[slot]] {
                    out.push(r);
                    replacements += 1;
                }
            } else {
                out.push(h);
            }
        }
        out.sort_unstable();
        let before = out.len();
        out.dedup();
        if self.kind == MechanismKind::Replacement && out.len() != before {
            // Two positions picked the same neighbour.
            return None;
        }
        debug_assert!(replacements <= combo.len());
        Some(out)
    }
}

impl Iterator for CandidateStream {
    type Item = Candidate;

    fn next(&mut self) -> Option<Candidate> {
        loop {
            match std::mem::replace(&mut self.state, State::Done) {
                State::Done => return None,
                State::Identity => {
                    self.state = self.start(1);
                    if let Some(seen) = &mut self.seen {
                        seen.insert(self.original.clone());
                    }
                    return Some(Candidate {
                        hashtags: self.original.clone(),
                        mechanism: self.kind,
                        edits: 0,
                    });
                }
                State::Running { combo, odo } => {
                    let built = self.build(&combo, &odo);
                    let edits = combo.len();
                    self.state = self.advance(combo, odo);
                    let Some(hashtags) = built else { continue };
                    if let Some(seen) = &mut self.seen {
                        if !seen.insert(hashtags.clone()) {
                            continue;
                        }
                    }
                    return Some(Candidate {
                        hashtags,
                        mechanism: self.kind,
                        edits,
                    });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn line_table(n: usize) -> EmbeddingTable {
        EmbeddingTable::new(
            1,
            (0..n).map(|i| (format!("h{i}"), vec![i as f64])).collect(),
        )
        .unwrap()
    }

    fn modified(stream: CandidateStream) -> Vec<Candidate> {
        stream.filter(|c| c.edits > 0).collect()
    }

    fn removed_count(original: &[HashtagId], c: &Candidate) -> usize {
        original.iter().filter(|h| !c.hashtags.contains(h)).count()
    }

    #[test]
    fn hiding_three_gives_seven() {
        let got = modified(enumerate_hiding(&[4, 1, 9], None).unwrap());
        assert_eq!(got.len(), 7);
        assert!(got.iter().any(|c| c.hashtags.is_empty()));
        for c in &got {
            assert!(c.hashtags.iter().all(|h| [1, 4, 9].contains(h)));
            assert_eq!(c.edits, removed_count(&[1, 4, 9], c));
        }
    }

    #[test]
    fn hiding_order_is_by_edit_count_then_position() {
        let all: Vec<Vec<HashtagId>> = enumerate_hiding(&[1, 2, 3], None)
            .unwrap()
            .map(|c| c.hashtags)
            .collect();
        assert_eq!(
            all,
            vec![
                vec![1, 2, 3],
                vec![2, 3],
                vec![1, 3],
                vec![1, 2],
                vec![3],
                vec![2],
                vec![1],
                vec![],
            ]
        );
    }

    #[test]
    fn hiding_bound_one() {
        assert_eq!(modified(enumerate_hiding(&[0, 1, 2, 3], Some(1)).unwrap()).len(), 4);
        assert!(enumerate_hiding(&[], None).is_err());
    }

    #[test]
    fn replacement_pairs() {
        let t = line_table(10);
        let got = modified(enumerate_replacement(&[4, 5], &t, 2, None).unwrap());
        // 4 -> [3, 2], 5 -> [6, 3]; replacing both with 3 is not allowed.
        let sets: Vec<Vec<HashtagId>> = got.iter().map(|c| c.hashtags.clone()).collect();
        assert_eq!(
            sets,
            vec![vec![3, 5], vec![2, 5], vec![4, 6], vec![3, 4], vec![3, 6], vec![2, 6], vec![2, 3]]
        );
        assert!(got.len() <= 8);
        for c in &got {
            assert!(!c.hashtags.iter().any(|h| [4, 5].contains(h) && c.edits == 2));
            assert_eq!(c.hashtags.len(), 2);
            assert_eq!(c.edits, removed_count(&[4, 5], c));
        }
    }

    #[test]
    fn replacement_bound_zero_is_identity_only() {
        let t = line_table(10);
        let all: Vec<Candidate> = enumerate_replacement(&[2, 7], &t, 2, Some(0)).unwrap().collect();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].edits, 0);
    }

    #[test]
    fn replacement_needs_vectors() {
        let t = line_table(3);
        assert!(enumerate_replacement(&[5], &t, 2, None).is_err());
        assert!(enumerate_replacement(&[1], &t, 0, None).is_err());
    }

    fn tax(entries: &[(HashtagId, HashtagId, HashtagId)]) -> CategoryTaxonomy {
        CategoryTaxonomy::from_map(entries.iter().map(|&(h, a, b)| (h, (a, b))).collect::<BTreeMap<_, _>>())
    }

    #[test]
    fn generalization_counts() {
        let t = tax(&[(0, 10, 20), (1, 11, 21)]);
        let got = modified(enumerate_generalization(&[0, 1, 5], &t, None).unwrap());
        assert_eq!(got.len(), 8);
        assert!(got.iter().all(|c| c.hashtags.contains(&5)));
        assert_eq!(modified(enumerate_generalization(&[0, 1, 5], &t, Some(1)).unwrap()).len(), 4);
        assert_eq!(enumerate_generalization(&[5, 6], &t, None).unwrap().count(), 0);
    }

    #[test]
    fn harrods_generalizes_to_store_or_shop() {
        let (harrods, london, store, shop) = (0, 1, 2, 3);
        let t = tax(&[(harrods, store, shop)]);
        let got: Vec<Vec<HashtagId>> = modified(enumerate_generalization(&[harrods, london], &t, None).unwrap())
            .into_iter()
            .map(|c| c.hashtags)
            .collect();
        assert_eq!(got, vec![vec![london, store], vec![london, shop]]);
    }

    #[test]
    fn mechanism_bound_takes_minimum() {
        let t = line_table(1);
        let m = Mechanism::Hiding {
            max_removed: Some(3),
        };
        let stream = m.enumerate(&[0, 1, 2, 3], &t, &CategoryTaxonomy::default(), Some(1)).unwrap();
        assert_eq!(modified(stream).len(), 4);
        let json = serde_json::to_string(&Mechanism::replacement()).unwrap();
        assert_eq!(json, r#"{"kind":"replacement","neighbors":2,"max_replaced":null}"#);
    }

    fn binomial(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    fn arb_original() -> impl Strategy<Value = Vec<HashtagId>> {
        prop::collection::btree_set(0u32..12, 1..6).prop_map(|s| s.into_iter().collect())
    }

    fn arb_taxonomy() -> impl Strategy<Value = CategoryTaxonomy> {
        prop::collection::btree_map(0u32..12, (100u32..103, 200u32..202), 0..8)
            .prop_map(CategoryTaxonomy::from_map)
    }

    fn arb_table() -> impl Strategy<Value = EmbeddingTable> {
        prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 16).prop_map(|rows| {
            EmbeddingTable::new(2, rows.into_iter().enumerate().map(|(i, v)| (format!("h{i}"), v)).collect())
                .unwrap()
        })
    }

    fn check_stream(original: &[HashtagId], all: &[Candidate], bound: Option<usize>) -> Result<(), TestCaseError> {
        let first = &all[0];
        prop_assert_eq!(&first.hashtags, &original.to_vec());
        prop_assert_eq!(first.edits, 0);
        let mut seen = HashSet::new();
        for w in all.windows(2) {
            prop_assert!(w[0].edits <= w[1].edits);
        }
        for c in all {
            prop_assert!(seen.insert(c.hashtags.clone()), "duplicate {:?}", c.hashtags);
            prop_assert!(c.hashtags.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(c.edits, removed_count(original, c));
            prop_assert!(c.edits <= bound.unwrap_or(usize::MAX));
        }
        Ok(())
    }

    proptest! {
        #[test]
        fn hiding_stream_invariants(original in arb_original(), bound in prop::option::of(0usize..6)) {
            let all: Vec<Candidate> = enumerate_hiding(&original, bound).unwrap().collect();
            check_stream(&original, &all, bound)?;
            let t = bound.unwrap_or(original.len()).min(original.len());
            let expected: usize = (1..=t).map(|k| binomial(original.len(), k)).sum();
            prop_assert_eq!(all.len() - 1, expected);
        }

        #[test]
        fn replacement_stream_invariants(
            table in arb_table(),
            original in arb_original(),
            neighbors in 1usize..4,
            bound in prop::option::of(0usize..4),
        ) {
            let all: Vec<Candidate> = enumerate_replacement(&original, &table, neighbors, bound).unwrap().collect();
            check_stream(&original, &all, bound)?;
            for c in &all {
                prop_assert_eq!(c.hashtags.len(), original.len());
            }
        }

        #[test]
        fn generalization_stream_invariants(
            taxonomy in arb_taxonomy(),
            original in arb_original(),
            bound in prop::option::of(0usize..4),
        ) {
            let all: Vec<Candidate> = enumerate_generalization(&original, &taxonomy, bound).unwrap().collect();
            if original.iter().all(|&h| taxonomy.categories(h).is_none()) {
                prop_assert!(all.is_empty());
            } else {
                check_stream(&original, &all, bound)?;
                for c in &all {
                    for h in &c.hashtags {
                        prop_assert!(original.contains(h) || *h >= 100);
                    }
                }
            }
        }
    }
}
