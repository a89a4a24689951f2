use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureVector, ForestParams};
use crate::corpus::HashtagId;

/// Node of a flattened tree. Children are indices into `Tree::nodes`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Node {
    Split {
        feature: HashtagId,
        /// Taken when the feature is absent.
        absent: u32,
        /// Taken when the feature is present.
        present: u32,
    },
    Leaf {
        /// Per-class sample counts, indexed by class position.
        counts: Vec<(usize, u32)>,
        /// Majority class; ties go to the lower class index.
        vote: usize,
    },
}

/// Binary decision tree over presence features; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub(crate) nodes: Vec<Node>,
}

pub(crate) fn majority(counts: &[(usize, u32)]) -> usize {
    let mut best = counts[0];
    for &(class, count) in &counts[1..] {
        if count > best.1 || (count == best.1 && class < best.0) {
            best = (class, count);
        }
    }
    best.0
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let n = f64::from(total);
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = f64::from(c) / n;
            p * p
        })
        .sum::<f64>()
}

impl Tree {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0u32, 0usize)];
        while let Some((i, d)) = stack.pop() {
            deepest = deepest.max(d);
            if let Node::Split {
                absent, present, ..
            } = self.nodes[i as usize]
            {
                stack.push((absent, d + 1));
                stack.push((present, d + 1));
            }
        }
        deepest
    }

    pub fn split_features(&self) -> impl Iterator<Item = HashtagId> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature),
            Node::Leaf { .. } => None,
        })
    }

    /// Class index this tree votes for.
    pub(crate) fn vote(&self, features: &FeatureVector) -> usize {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    absent,
                    present,
                } => {
                    i = if features.contains(*feature) {
                        *present as usize
                    } else {
                        *absent as usize
                    };
                }
                Node::Leaf { vote, .. } => return *vote,
            }
        }
    }

    /// Grows one tree on a bootstrap resample of `samples`.
    pub(crate) fn grow(
        samples: &[(FeatureVector, usize)],
        dimension: usize,
        n_classes: usize,
        params: &ForestParams,
        seed: u64,
    ) -> Tree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bootstrap: Vec<u32> = (0..samples.len())
            .map(|_| rng.random_range(0..samples.len()) as u32)
            .collect();
        let n_candidates = ((dimension as f64).sqrt().ceil() as usize).clamp(1, dimension.max(1));
        let min_leaf = params.min_leaf.max(1) as u32;

        let mut nodes: Vec<Node> = vec![Node::Leaf {
            counts: Vec::new(),
            vote: 0,
        }];
        let mut work = vec![(0usize, bootstrap, 0usize)];
        // Scratch space reused across nodes.
        let mut slot_of = vec![usize::MAX; dimension];
        let mut present_counts = vec![0u32; n_candidates * n_classes];
        let mut class_counts = vec![0u32; n_classes];

        while let Some((at, members, depth)) = work.pop() {
            class_counts.iter_mut().for_each(|c| *c = 0);
            for &s in &members {
                class_counts[samples[s as usize].1] += 1;
            }
            let total = members.len() as u32;
            let parent_gini = gini(&class_counts, total);
            let leaf = |class_counts: &[u32]| {
                let counts: Vec<(usize, u32)> = class_counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(k, &c)| (k, c))
                    .collect();
                let vote = majority(&counts);
                Node::Leaf { counts, vote }
            };

            let at_depth_limit = params.max_depth.is_some_and(|d| depth >= d);
            if at_depth_limit || total < 2 * min_leaf || parent_gini <= 0.0 || dimension == 0 {
                nodes[at] = leaf(&class_counts);
                continue;
            }

            let candidates = index::sample(&mut rng, dimension, n_candidates).into_vec();
            for (slot, &f) in candidates.iter().enumerate() {
                slot_of[f] = slot;
            }
            present_counts.iter_mut().for_each(|c| *c = 0);
            for &s in &members {
                let (features, class) = &samples[s as usize];
                for &f in features.present() {
                    let slot = slot_of[f as usize];
                    if slot != usize::MAX {
                        present_counts[slot * n_classes + class] += 1;
                    }
                }
            }

            let mut best: Option<(usize, f64)> = None;
            let mut absent_counts = vec![0u32; n_classes];
            for (slot, &feature) in candidates.iter().enumerate() {
                let present = &present_counts[slot * n_classes..(slot + 1) * n_classes];
                let n_present: u32 = present.iter().sum();
                let n_absent = total - n_present;
                if n_present < min_leaf || n_absent < min_leaf {
                    continue;
                }
                for k in 0..n_classes {
                    absent_counts[k] = class_counts[k] - present[k];
                }
                let weighted = (f64::from(n_present) * gini(present, n_present)
                    + f64::from(n_absent) * gini(&absent_counts, n_absent))
                    / f64::from(total);
                let decrease = parent_gini - weighted;
                if decrease > 1e-12 && best.is_none_or(|(_, d)| decrease > d) {
                    best = Some((feature, decrease));
                }
            }
            for &f in &candidates {
                slot_of[f] = usize::MAX;
            }

            match best {
                None => nodes[at] = leaf(&class_counts),
                Some((feature, _)) => {
                    let feature = feature as HashtagId;
                    let (with, without): (Vec<u32>, Vec<u32>) = members
                        .into_iter()
                        .partition(|&s| samples[s as usize].0.contains(feature));
                    let absent = nodes.len();
                    let present = absent + 1;
                    for _ in 0..2 {
                        nodes.push(Node::Leaf {
                            counts: Vec::new(),
                            vote: 0,
                        });
                    }
                    nodes[at] = Node::Split {
                        feature,
                        absent: absent as u32,
                        present: present as u32,
                    };
                    work.push((present, with, depth + 1));
                    work.push((absent, without, depth + 1));
                }
            }
        }
        Tree { nodes }
    }
}
