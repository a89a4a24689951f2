use std::collections::{BTreeMap, BTreeSet};

use hashtag_privacy::corpus::{
    filter_corpus, generate_synthetic, parse_corpus, split, write_locations, write_posts, Adversary, Corpus,
    FilterThresholds, PostRecord, SplitSpec, SynthConfig,
};
use hashtag_privacy::forest::{train, train_baseline, ForestParams};
use hashtag_privacy::metrics::evaluate;
use proptest::prelude::*;

const LOCATIONS: &str = r#"{"id":"L0","name":"zero","lat":0.0,"lon":0.0,"category_l2":"cafe","category_l1":"food"}
{"id":"L1","name":"one","lat":1.0,"lon":1.0,"category_l2":"cafe","category_l1":"food"}
{"id":"L2","name":"two","lat":2.0,"lon":2.0,"category_l2":"park","category_l1":"outdoors"}
{"id":"L3","name":"three","lat":3.0,"lon":3.0,"category_l2":"park","category_l1":"outdoors"}
"#;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Raw {
    user: String,
    location: Option<String>,
    tags: BTreeSet<String>,
}

fn arb_records() -> impl Strategy<Value = Vec<Raw>> {
    let post = (
        0..6u8,
        prop::option::weighted(0.9, 0..4u8),
        prop::collection::btree_set(0..10u8, 0..4),
    )
        .prop_map(|(u, l, tags)| Raw {
            user: format!("u{u}"),
            location: l.map(|l| format!("L{l}")),
            tags: tags.into_iter().map(|t| format!("t{t}")).collect(),
        });
    prop::collection::vec(post, 0..60)
}

fn to_jsonl(records: &[Raw]) -> String {
    records
        .iter()
        .map(|r| {
            serde_json::to_string(&PostRecord {
                user: r.user.clone(),
                location: r.location.clone(),
                time: 0,
                hashtags: r.tags.iter().cloned().collect(),
            })
            .unwrap()
                + "\n"
        })
        .collect()
}

fn to_raw(c: &Corpus) -> Vec<Raw> {
    c.posts()
        .iter()
        .map(|p| Raw {
            user: c.users()[p.user as usize].clone(),
            location: p.location.map(|l| c.locations()[l as usize].key.clone()),
            tags: c.hashtag_texts(p).into_iter().map(String::from).collect(),
        })
        .collect()
}

fn count<'a>(keys: impl Iterator<Item = &'a String>) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for k in keys {
        *m.entry(k.clone()).or_insert(0) += 1;
    }
    m
}

/// Applies one rule at a time and restarts after any change.
fn filter_oracle(mut posts: Vec<Raw>, t: FilterThresholds) -> Vec<Raw> {
    loop {
        let checkins = count(posts.iter().filter(|p| p.location.is_some()).map(|p| &p.user));
        let keep: Vec<bool> = posts
            .iter()
            .map(|p| checkins.get(&p.user).copied().unwrap_or(0) >= t.min_user_checkins)
            .collect();
        if keep.contains(&false) {
            posts = posts.into_iter().zip(keep).filter(|x| x.1).map(|x| x.0).collect();
            continue;
        }

        let uses = count(posts.iter().flat_map(|p| p.tags.iter()));
        let dead: BTreeSet<String> = uses
            .iter()
            .filter(|(_, &n)| n < t.min_hashtag_count)
            .map(|(k, _)| k.clone())
            .collect();
        if !dead.is_empty() || posts.iter().any(|p| p.tags.is_empty()) {
            for p in &mut posts {
                p.tags.retain(|x| !dead.contains(x));
            }
            posts.retain(|p| !p.tags.is_empty());
            continue;
        }

        let visits = count(posts.iter().filter_map(|p| p.location.as_ref()));
        let before = posts.len();
        posts.retain(|p| p.location.as_ref().is_none_or(|l| visits[l] >= t.min_location_checkins));
        if posts.len() != before {
            continue;
        }
        return posts;
    }
}

proptest! {
    #[test]
    fn filter_matches_one_rule_at_a_time_oracle(
        records in arb_records(),
        u in 0usize..5,
        h in 0usize..5,
        l in 0usize..5,
    ) {
        let thresholds = FilterThresholds {
            min_user_checkins: u,
            min_hashtag_count: h,
            min_location_checkins: l,
        };
        let corpus = parse_corpus(&to_jsonl(&records), LOCATIONS).unwrap();
        let out = filter_corpus(&corpus, thresholds);
        prop_assert_eq!(to_raw(&out), filter_oracle(records, thresholds));
        // Fixed point.
        prop_assert_eq!(to_raw(&filter_corpus(&out, thresholds)), to_raw(&out));
    }

    #[test]
    fn files_round_trip(records in arb_records()) {
        let records: Vec<Raw> = records.into_iter().filter(|r| !r.tags.is_empty()).collect();
        let corpus = parse_corpus(&to_jsonl(&records), LOCATIONS).unwrap();
        let mut posts = Vec::new();
        write_posts(&corpus, &mut posts).unwrap();
        let mut locations = Vec::new();
        write_locations(corpus.locations(), &mut locations).unwrap();
        let back = parse_corpus(
            std::str::from_utf8(&posts).unwrap(),
            std::str::from_utf8(&locations).unwrap(),
        )
        .unwrap();
        prop_assert_eq!(back, corpus);
    }
}

fn varied_config(signature_rate: f64) -> SynthConfig {
    SynthConfig {
        n_locations: 10,
        posts_per_location: 80,
        n_noise_hashtags: 40,
        n_users: 20,
        signature_rate,
        hashtag_count_weights: vec![4.0, 3.0, 2.0, 2.0, 1.0, 1.0, 1.0],
        ..SynthConfig::default()
    }
}

#[test]
fn hashtag_count_groups_partition_the_test_set() {
    let corpus = generate_synthetic(&varied_config(0.9)).unwrap().corpus;
    let s = split(&corpus, &SplitSpec::new(Adversary::A2, 3), 0).unwrap();
    let forest = ForestParams {
        n_trees: 15,
        ..ForestParams::default()
    };
    let model = train(&s.train, &forest).unwrap();
    let report = evaluate(&model, &train_baseline(&s.train).unwrap(), &s.test).unwrap();
    for perf in [&report.attack, &report.baseline] {
        let sizes: usize = perf.per_hashtag_count.values().map(|g| g.n).sum();
        assert_eq!(sizes, perf.n_test);
        assert_eq!(perf.n_test, s.test.len());
        assert!(perf.per_hashtag_count.len() > 3);
    }
}

#[test]
fn no_signal_means_no_advantage_over_baseline() {
    let corpus = generate_synthetic(&varied_config(0.0)).unwrap().corpus;
    let mut gaps = Vec::new();
    for rep in 0..3 {
        let s = split(&corpus, &SplitSpec::new(Adversary::A1, 8), rep).unwrap();
        let model = train(
            &s.train,
            &ForestParams {
                n_trees: 50,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let r = evaluate(&model, &train_baseline(&s.train).unwrap(), &s.test).unwrap();
        gaps.push(r.attack.accuracy - r.baseline.accuracy);
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(mean.abs() <= 0.05, "{gaps:?}");
}

#[test]
fn synthetic_generation_is_byte_identical() {
    let a = generate_synthetic(&varied_config(0.5)).unwrap();
    let b = generate_synthetic(&varied_config(0.5)).unwrap();
    let (mut pa, mut pb) = (Vec::new(), Vec::new());
    write_posts(&a.corpus, &mut pa).unwrap();
    write_posts(&b.corpus, &mut pb).unwrap();
    assert_eq!(pa, pb);
    assert_eq!(a.taxonomy, b.taxonomy);
}
