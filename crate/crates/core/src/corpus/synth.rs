use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{from_records, PostRecord};
use super::{Corpus, CorpusError, Location, MAX_HASHTAGS_PER_POST};
use crate::metrics::EARTH_RADIUS_KM;
use crate::obfuscate::TaxonomyRecord;

const KM_PER_DEGREE: f64 = EARTH_RADIUS_KM * PI / 180.0;
const START_TIME: i64 = 1_435_708_800;

/// Planted hashtag/location corpus parameters.
///
/// Each location owns a disjoint pool of signature hashtags. Every hashtag
/// slot of a post is filled from the post's location signatures with
/// probability `signature_rate`, otherwise from a shared noise pool. The
/// optional knobs add per-user habits (`user_*`), category tokens that make
/// the generalization mechanism meaningful, and per-category topic hashtags
/// that give signatures of similar venues similar contexts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_locations: usize,
    pub signature_hashtags_per_location: usize,
    pub n_noise_hashtags: usize,
    pub posts_per_location: usize,
    pub hashtags_per_post: usize,
    pub signature_rate: f64,
    pub n_users: usize,
    pub seed: u64,
    /// Locations each user posts from; 0 spreads users uniformly.
    #[serde(default)]
    pub user_home_locations: usize,
    /// Personal hashtags per user.
    #[serde(default)]
    pub user_hashtags: usize,
    /// Per-slot probability of drawing one of the author's personal hashtags.
    #[serde(default)]
    pub user_hashtag_rate: f64,
    /// Per-slot probability of drawing the location's category token.
    #[serde(default)]
    pub category_token_rate: f64,
    /// Topic hashtags shared by every location of the same l2 category.
    #[serde(default)]
    pub topic_hashtags_per_category: usize,
    /// Per-slot probability of drawing from the location's topic pool.
    #[serde(default)]
    pub topic_rate: f64,
    #[serde(default = "default_l1")]
    pub n_categories_l1: usize,
    #[serde(default = "default_l2")]
    pub n_categories_l2: usize,
    /// Signature hashtags per location listed in the taxonomy; all when unset.
    #[serde(default)]
    pub generalizable_per_location: Option<usize>,
    /// Hard cap on the generated vocabulary.
    #[serde(default)]
    pub max_vocab: Option<usize>,
    /// Relative weights of posts carrying 1, 2, ... hashtags. When empty every
    /// post carries `hashtags_per_post`.
    #[serde(default)]
    pub hashtag_count_weights: Vec<f64>,
}

fn default_l1() -> usize {
    4
}

fn default_l2() -> usize {
    12
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_locations: 50,
            signature_hashtags_per_location: 5,
            n_noise_hashtags: 200,
            posts_per_location: 200,
            hashtags_per_post: 5,
            signature_rate: 0.9,
            n_users: 100,
            seed: 7,
            user_home_locations: 0,
            user_hashtags: 0,
            user_hashtag_rate: 0.0,
            category_token_rate: 0.0,
            topic_hashtags_per_category: 0,
            topic_rate: 0.0,
            n_categories_l1: default_l1(),
            n_categories_l2: default_l2(),
            generalizable_per_location: None,
            max_vocab: None,
            hashtag_count_weights: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub taxonomy: Vec<TaxonomyRecord>,
}

impl SynthConfig {
    fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::InvalidSynthConfig(m));
        if self.n_locations == 0 || self.posts_per_location == 0 || self.n_users == 0 {
            return bad("n_locations, posts_per_location and n_users must be positive".into());
        }
        if self.hashtags_per_post == 0 || self.hashtags_per_post > MAX_HASHTAGS_PER_POST {
            return bad(format!(
                "hashtags_per_post must be in 1..={MAX_HASHTAGS_PER_POST}"
            ));
        }
        for (name, rate) in [
            ("signature_rate", self.signature_rate),
            ("user_hashtag_rate", self.user_hashtag_rate),
            ("category_token_rate", self.category_token_rate),
            ("topic_rate", self.topic_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return bad(format!("{name} {rate} outside [0, 1]"));
            }
        }
        if self.signature_rate > 0.0 && self.signature_hashtags_per_location == 0 {
            return bad("signature_rate > 0 needs signature hashtags".into());
        }
        if self.user_hashtag_rate > 0.0 && self.user_hashtags == 0 {
            return bad("user_hashtag_rate > 0 needs user_hashtags".into());
        }
        if self.topic_rate > 0.0 && self.topic_hashtags_per_category == 0 {
            return bad("topic_rate > 0 needs topic_hashtags_per_category".into());
        }
        if self.n_categories_l1 == 0 || self.n_categories_l2 == 0 {
            return bad("category counts must be positive".into());
        }
        let available = self.signature_hashtags_per_location + self.n_noise_hashtags;
        let w = &self.hashtag_count_weights;
        if !w.is_empty() {
            if w.len() > MAX_HASHTAGS_PER_POST || w.len() > available {
                return bad(format!(
                    "hashtag_count_weights allows {} hashtags per post; at most {} possible",
                    w.len(),
                    available.min(MAX_HASHTAGS_PER_POST)
                ));
            }
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return bad("hashtag_count_weights must be non-negative with a positive sum".into());
            }
        }
        if self.hashtags_per_post > available {
            return bad(format!(
                "hashtags_per_post {} exceeds the {available} signature + noise hashtags available to a post",
                self.hashtags_per_post
            ));
        }
        let vocab = self.n_locations * self.signature_hashtags_per_location
            + self.n_noise_hashtags
            + self.n_users * self.user_hashtags
            + self.n_categories_l2 * self.topic_hashtags_per_category
            + self.n_categories_l1
            + self.n_categories_l2;
        if let Some(max) = self.max_vocab {
            if vocab > max {
                return bad(format!(
                    "signature and noise pools need {vocab} hashtags, above max_vocab {max}"
                ));
            }
        }
        Ok(())
    }

    fn l2_of(&self, location: usize) -> usize {
        location % self.n_categories_l2
    }

    fn l1_of(&self, location: usize) -> usize {
        self.l2_of(location) % self.n_categories_l1
    }
}

fn l2_name(c: usize) -> String {
    format!("sub{c:02}")
}

fn l1_name(c: usize) -> String {
    format!("cat{c}")
}

fn signature_name(location: usize, j: usize) -> String {
    format!("l{location:03}s{j}")
}

fn grid_point(i: usize, side: usize) -> (f64, f64) {
    let (row, col) = (i / side, i % side);
    let lat = row as f64 / KM_PER_DEGREE;
    let lon = col as f64 / (KM_PER_DEGREE * lat.to_radians().cos());
    (lat, lon)
}

/// Draws an element of `pool` not already in `chosen`.
fn draw_unique(rng: &mut ChaCha8Rng, pool: &[String], chosen: &[String]) -> Option<String> {
    for _ in 0..16 {
        let candidate = &pool[rng.random_range(0..pool.len())];
        if !chosen.contains(candidate) {
            return Some(candidate.clone());
        }
    }
    let rest: Vec<&String> = pool.iter().filter(|t| !chosen.contains(t)).collect();
    if rest.is_empty() {
        None
    } else {
        Some(rest[rng.random_range(0..rest.len())].clone())
    }
}

/// Generates a planted corpus plus the taxonomy of its signature hashtags.
/// Output is a pure function of `cfg`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticData, CorpusError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let side = (cfg.n_locations as f64).sqrt().ceil() as usize;
    let locations: Vec<Location> = (0..cfg.n_locations)
        .map(|i| {
            let (lat, lon) = grid_point(i, side);
            Location {
                key: format!("L{i:03}"),
                name: format!("Location {i}"),
                lat,
                lon,
                category_l2: l2_name(cfg.l2_of(i)),
                category_l1: l1_name(cfg.l1_of(i)),
            }
        })
        .collect();

    let signatures: Vec<Vec<String>> = (0..cfg.n_locations)
        .map(|l| {
            (0..cfg.signature_hashtags_per_location)
                .map(|j| signature_name(l, j))
                .collect()
        })
        .collect();
    let noise: Vec<String> = (0..cfg.n_noise_hashtags).map(|j| format!("n{j:04}")).collect();
    let topics: Vec<Vec<String>> = (0..cfg.n_categories_l2)
        .map(|c| {
            (0..cfg.topic_hashtags_per_category)
                .map(|j| format!("t{c:02}x{j}"))
                .collect()
        })
        .collect();
    let personal: Vec<Vec<String>> = (0..cfg.n_users)
        .map(|u| (0..cfg.user_hashtags).map(|j| format!("u{u:03}t{j}")).collect())
        .collect();

    let mut residents: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_locations];
    for u in 0..cfg.n_users {
        for j in 0..cfg.user_home_locations {
            let home = (u * cfg.user_home_locations + j) % cfg.n_locations;
            if !residents[home].contains(&u) {
                residents[home].push(u);
            }
        }
    }

    let count_dist = if cfg.hashtag_count_weights.is_empty() {
        None
    } else {
        Some(WeightedIndex::new(&cfg.hashtag_count_weights).expect("validated weights"))
    };

    let mut records = Vec::with_capacity(cfg.n_locations * cfg.posts_per_location);
    for l in 0..cfg.n_locations {
        let tokens = [l2_name(cfg.l2_of(l)), l1_name(cfg.l1_of(l))];
        for _ in 0..cfg.posts_per_location {
            let user = if residents[l].is_empty() {
                rng.random_range(0..cfg.n_users)
            } else {
                residents[l][rng.random_range(0..residents[l].len())]
            };
            let n_hashtags = match &count_dist {
                Some(d) => d.sample(&mut rng) + 1,
                None => cfg.hashtags_per_post,
            };
            let mut chosen: Vec<String> = Vec::with_capacity(n_hashtags);
            while chosen.len() < n_hashtags {
                let primary: &[String] = if cfg.user_hashtag_rate > 0.0
                    && rng.random_bool(cfg.user_hashtag_rate)
                {
                    &personal[user]
                } else if cfg.category_token_rate > 0.0 && rng.random_bool(cfg.category_token_rate) {
                    &tokens
                } else if cfg.topic_rate > 0.0 && rng.random_bool(cfg.topic_rate) {
                    &topics[cfg.l2_of(l)]
                } else if rng.random_bool(cfg.signature_rate) {
                    &signatures[l]
                } else {
                    &noise
                };
                let tag = [primary, &noise, &signatures[l]]
                    .into_iter()
                    .filter(|pool| !pool.is_empty())
                    .find_map(|pool| draw_unique(&mut rng, pool, &chosen))
                    .expect("validated pools cover hashtags_per_post");
                chosen.push(tag);
            }
            let index = records.len();
            records.push((
                index + 1,
                PostRecord {
                    user: format!("user{user:03}"),
                    location: Some(locations[l].key.clone()),
                    time: START_TIME + 60 * index as i64,
                    hashtags: chosen,
                },
            ));
        }
    }

    let per_location = cfg
        .generalizable_per_location
        .unwrap_or(cfg.signature_hashtags_per_location)
        .min(cfg.signature_hashtags_per_location);
    let taxonomy = (0..cfg.n_locations)
        .flat_map(|l| {
            let (l2, l1) = (l2_name(cfg.l2_of(l)), l1_name(cfg.l1_of(l)));
            (0..per_location).map(move |j| TaxonomyRecord {
                hashtag: signature_name(l, j),
                category_l2: l2.clone(),
                category_l1: l1.clone(),
            })
        })
        .collect();

    let corpus = from_records(records, locations)?;
    Ok(SyntheticData { corpus, taxonomy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{hashtag_count_histogram, write_posts};
    use crate::metrics::{haversine_km, GeoPoint};
    use std::collections::BTreeMap;

    fn small() -> SynthConfig {
        SynthConfig {
            n_locations: 6,
            posts_per_location: 20,
            n_users: 10,
            n_noise_hashtags: 30,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn counts_posts() {
        let data = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(data.corpus.len(), 10_000);
        assert_eq!(data.corpus.locations().len(), 50);
    }

    #[test]
    fn fixed_hashtag_count_histogram() {
        let cfg = SynthConfig {
            hashtags_per_post: 3,
            ..small()
        };
        let data = generate_synthetic(&cfg).unwrap();
        assert_eq!(
            hashtag_count_histogram(&data.corpus).unwrap(),
            BTreeMap::from([(3, 1.0)])
        );
    }

    #[test]
    fn full_signature_rate_identifies_location() {
        let cfg = SynthConfig {
            signature_rate: 1.0,
            hashtags_per_post: 1,
            ..small()
        };
        let c = generate_synthetic(&cfg).unwrap().corpus;
        let mut owner: BTreeMap<u32, u32> = BTreeMap::new();
        for p in c.posts() {
            let prev = owner.insert(p.hashtags[0], p.location.unwrap());
            assert!(prev.is_none() || prev == p.location);
        }
    }

    #[test]
    fn zero_signature_rate_uses_only_noise() {
        let cfg = SynthConfig {
            signature_rate: 0.0,
            ..small()
        };
        let c = generate_synthetic(&cfg).unwrap().corpus;
        assert!(c.vocab().texts().iter().all(|t| t.starts_with('n')));
    }

    #[test]
    fn grid_spacing_is_one_km() {
        let c = generate_synthetic(&small()).unwrap().corpus;
        let p = |i: usize| GeoPoint::new(c.locations()[i].lat, c.locations()[i].lon);
        assert!((haversine_km(p(0), p(1)) - 1.0).abs() < 1e-9);
        // side = 3 for 6 locations: location 3 sits one row up.
        assert!((haversine_km(p(0), p(3)) - 1.0).abs() < 1e-9);
        assert!((haversine_km(p(3), p(4)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let render = |cfg: &SynthConfig| {
            let mut buf = Vec::new();
            write_posts(&generate_synthetic(cfg).unwrap().corpus, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(&small()), render(&small()));
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(render(&small()), render(&other));
    }

    #[test]
    fn rejects_impossible_configs() {
        let too_many = SynthConfig {
            hashtags_per_post: 40,
            ..small()
        };
        assert!(generate_synthetic(&too_many).is_err());
        let no_pool = SynthConfig {
            signature_hashtags_per_location: 2,
            n_noise_hashtags: 1,
            hashtags_per_post: 4,
            ..small()
        };
        assert!(generate_synthetic(&no_pool).is_err());
        let capped = SynthConfig {
            max_vocab: Some(10),
            ..small()
        };
        assert!(generate_synthetic(&capped).is_err());
        let negative = SynthConfig {
            hashtag_count_weights: vec![1.0, -1.0],
            ..small()
        };
        assert!(generate_synthetic(&negative).is_err());
    }

    #[test]
    fn count_weights_shape_the_histogram() {
        let cfg = SynthConfig {
            hashtag_count_weights: vec![0.0, 3.0, 0.0, 1.0],
            ..small()
        };
        let hist = hashtag_count_histogram(&generate_synthetic(&cfg).unwrap().corpus).unwrap();
        assert_eq!(hist.keys().copied().collect::<Vec<_>>(), vec![2, 4]);
        assert!((hist[&2] - 0.75).abs() < 0.1, "{hist:?}");
    }

    #[test]
    fn taxonomy_covers_signatures() {
        let data = generate_synthetic(&small()).unwrap();
        assert_eq!(data.taxonomy.len(), 6 * 5);
        let t = &data.taxonomy[7];
        assert_eq!(t.hashtag, "l001s2");
        assert_eq!(t.category_l2, data.corpus.locations()[1].category_l2);
    }
}
