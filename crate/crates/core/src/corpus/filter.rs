use serde::{Deserialize, Serialize};

use super::{Corpus, HashtagId, LocationId, Post, UserId, Vocabulary};

/// Minimum support thresholds. Defaults follow the usual sparsity filters:
/// 20 check-ins per user, 20 uses per hashtag, 50 check-ins per location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    pub min_user_checkins: usize,
    pub min_hashtag_count: usize,
    pub min_location_checkins: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds {
            min_user_checkins: 20,
            min_hashtag_count: 20,
            min_location_checkins: 50,
        }
    }
}

/// Removes sparse users, hashtags and locations, then hashtag-less posts,
/// repeating until nothing changes. Surviving ids are re-densified in their
/// original relative order.
pub fn filter_corpus(corpus: &Corpus, thresholds: FilterThresholds) -> Corpus {
    let n_users = corpus.users().len();
    let n_tags = corpus.vocab().len();
    let n_locs = corpus.locations().len();

    let mut user_alive = vec![true; n_users];
    let mut tag_alive = vec![true; n_tags];
    let mut loc_alive = vec![true; n_locs];
    let mut post_alive = vec![true; corpus.len()];

    let live_tags = |post: &Post, tag_alive: &[bool]| {
        post.hashtags
            .iter()
            .filter(|&&h| tag_alive[h as usize])
            .count()
    };

    loop {
        let mut changed = false;

        let mut checkins = vec![0usize; n_users];
        for (p, post) in corpus.posts().iter().enumerate() {
            if post_alive[p] && post.location.is_some() {
                checkins[post.user as usize] += 1;
            }
        }
        for u in 0..n_users {
            if user_alive[u] && checkins[u] < thresholds.min_user_checkins {
                user_alive[u] = false;
                changed = true;
            }
        }
        for (p, post) in corpus.posts().iter().enumerate() {
            if post_alive[p] && !user_alive[post.user as usize] {
                post_alive[p] = false;
            }
        }

        let mut uses = vec![0usize; n_tags];
        for (p, post) in corpus.posts().iter().enumerate() {
            if post_alive[p] {
                for &h in &post.hashtags {
                    uses[h as usize] += 1;
                }
            }
        }
        for h in 0..n_tags {
            if tag_alive[h] && uses[h] < thresholds.min_hashtag_count {
                tag_alive[h] = false;
                changed = true;
            }
        }

        let mut visits = vec![0usize; n_locs];
        for (p, post) in corpus.posts().iter().enumerate() {
            if let (true, Some(l)) = (post_alive[p], post.location) {
                visits[l as usize] += 1;
            }
        }
        for l in 0..n_locs {
            if loc_alive[l] && visits[l] < thresholds.min_location_checkins {
                loc_alive[l] = false;
                changed = true;
            }
        }

        for (p, post) in corpus.posts().iter().enumerate() {
            if !post_alive[p] {
                continue;
            }
            let loc_gone = post.location.is_some_and(|l| !loc_alive[l as usize]);
            if loc_gone || live_tags(post, &tag_alive) == 0 {
                post_alive[p] = false;
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }

    // Users and locations left without posts are dropped as well; hashtags
    // only survive through posts by construction.
    let mut user_used = vec![false; n_users];
    for (p, post) in corpus.posts().iter().enumerate() {
        if post_alive[p] {
            user_used[post.user as usize] = true;
        }
    }

    let remap = |alive: &[bool]| {
        let mut next = 0u32;
        alive
            .iter()
            .map(|&a| {
                a.then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect::<Vec<Option<u32>>>()
    };
    let user_keep: Vec<bool> = (0..n_users).map(|u| user_alive[u] && user_used[u]).collect();
    let user_map = remap(&user_keep);
    let tag_map = remap(&tag_alive);
    let loc_map = remap(&loc_alive);

    let vocab: Vocabulary = corpus
        .vocab()
        .iter()
        .filter(|(h, _)| tag_alive[*h as usize])
        .map(|(_, t)| t)
        .collect();
    let locations = corpus
        .locations()
        .iter()
        .enumerate()
        .filter(|(l, _)| loc_alive[*l])
        .map(|(_, l)| l.clone())
        .collect();
    let users = corpus
        .users()
        .iter()
        .enumerate()
        .filter(|(u, _)| user_keep[*u])
        .map(|(_, u)| u.clone())
        .collect();
    let posts = corpus
        .posts()
        .iter()
        .enumerate()
        .filter(|(p, _)| post_alive[*p])
        .map(|(_, post)| {
            let hashtags: Vec<HashtagId> = post
                .hashtags
                .iter()
                .filter_map(|&h| tag_map[h as usize])
                .collect();
            Post::new(
                user_map[post.user as usize].expect("live post has live user") as UserId,
                post.location
                    .map(|l| loc_map[l as usize].expect("live post has live location") as LocationId),
                post.time,
                hashtags,
            )
        })
        .collect();
    Corpus::new(posts, vocab, locations, users).expect("filtered corpus stays consistent")
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::corpus;
    use super::*;

    fn small(user: usize, tag: usize, loc: usize) -> FilterThresholds {
        FilterThresholds {
            min_user_checkins: user,
            min_hashtag_count: tag,
            min_location_checkins: loc,
        }
    }

    #[test]
    fn drops_hashtag_below_threshold() {
        let mut rows: Vec<(&str, Option<u32>, &[&str])> = Vec::new();
        for _ in 0..19 {
            rows.push(("u", Some(0), &["common", "rare"]));
        }
        rows.push(("u", Some(0), &["common"]));
        let c = corpus(1, &rows);
        let out = filter_corpus(&c, small(1, 20, 1));
        assert_eq!(out.vocab().texts(), &["common"]);
        assert_eq!(out.len(), 20);
    }

    #[test]
    fn satisfied_corpus_is_fixed_point() {
        let rows: Vec<(&str, Option<u32>, &[&str])> = (0..6)
            .map(|i| (if i % 2 == 0 { "a" } else { "b" }, Some(i % 2), &["x", "y"][..]))
            .collect();
        let c = corpus(2, &rows);
        let out = filter_corpus(&c, small(3, 6, 3));
        assert_eq!(out, c);
        assert_eq!(filter_corpus(&out, small(3, 6, 3)), out);
    }

    #[test]
    fn drops_posts_without_hashtags_and_unused_users() {
        let c = corpus(
            1,
            &[("a", Some(0), &["x"]), ("a", Some(0), &["x"]), ("b", Some(0), &[])],
        );
        let out = filter_corpus(&c, small(1, 1, 1));
        assert_eq!(out.len(), 2);
        assert_eq!(out.users(), &["a"]);
    }
}
