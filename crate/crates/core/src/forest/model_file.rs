//! JSON dump of a trained forest: trees are written as nested
//! `{"split":{feature,left,right}}` / `{"leaf":{counts}}` objects, where
//! `left` is the feature-absent branch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tree::{majority, Node, Tree};
use super::{ForestError, ForestParams, RandomForestModel};
use crate::corpus::{HashtagId, LocationId};

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TreeNode {
    Split {
        feature: HashtagId,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        counts: BTreeMap<LocationId, u32>,
    },
}

impl Drop for TreeNode {
    // Deep trees would otherwise overflow the stack on drop.
    fn drop(&mut self) {
        let mut stack = Vec::new();
        if let TreeNode::Split { left, right, .. } = self {
            stack.push(std::mem::replace(left, Box::new(TreeNode::empty())));
            stack.push(std::mem::replace(right, Box::new(TreeNode::empty())));
        }
        while let Some(mut node) = stack.pop() {
            if let TreeNode::Split { left, right, .. } = &mut *node {
                stack.push(std::mem::replace(left, Box::new(TreeNode::empty())));
                stack.push(std::mem::replace(right, Box::new(TreeNode::empty())));
            }
        }
    }
}

impl TreeNode {
    fn empty() -> Self {
        TreeNode::Leaf {
            counts: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    n_trees: usize,
    vocab_dimension: usize,
    classes: Vec<LocationId>,
    seed: u64,
    #[serde(default = "default_min_leaf")]
    min_leaf: usize,
    #[serde(default)]
    max_depth: Option<usize>,
    #[serde(default)]
    degenerate: bool,
    trees: Vec<TreeNode>,
}

fn default_min_leaf() -> usize {
    1
}

fn nest(tree: &Tree, classes: &[LocationId]) -> TreeNode {
    fn go(tree: &Tree, i: usize, classes: &[LocationId]) -> TreeNode {
        match &tree.nodes[i] {
            Node::Split {
                feature,
                absent,
                present,
            } => TreeNode::Split {
                feature: *feature,
                left: Box::new(go(tree, *absent as usize, classes)),
                right: Box::new(go(tree, *present as usize, classes)),
            },
            Node::Leaf { counts, .. } => TreeNode::Leaf {
                counts: counts.iter().map(|&(k, c)| (classes[k], c)).collect(),
            },
        }
    }
    go(tree, 0, classes)
}

fn flatten(root: &TreeNode, classes: &[LocationId], dimension: usize) -> Result<Tree, ForestError> {
    let mut nodes: Vec<Node> = Vec::new();
    let mut stack: Vec<(&TreeNode, usize)> = vec![(root, 0)];
    nodes.push(Node::Leaf {
        counts: Vec::new(),
        vote: 0,
    });
    while let Some((node, at)) = stack.pop() {
        match node {
            TreeNode::Split {
                feature,
                left,
                right,
            } => {
                if *feature as usize >= dimension {
                    return Err(ForestError::InvalidModel(format!(
                        "split feature {feature} >= vocab_dimension {dimension}"
                    )));
                }
                let absent = nodes.len();
                for _ in 0..2 {
                    nodes.push(Node::Leaf {
                        counts: Vec::new(),
                        vote: 0,
                    });
                }
                nodes[at] = Node::Split {
                    feature: *feature,
                    absent: absent as u32,
                    present: absent as u32 + 1,
                };
                stack.push((left, absent));
                stack.push((right, absent + 1));
            }
            TreeNode::Leaf { counts } => {
                let mut indexed = Vec::with_capacity(counts.len());
                for (loc, &c) in counts {
                    let k = classes.binary_search(loc).map_err(|_| {
                        ForestError::InvalidModel(format!("leaf class {loc} not in classes"))
                    })?;
                    if c > 0 {
                        indexed.push((k, c));
                    }
                }
                if indexed.is_empty() {
                    return Err(ForestError::InvalidModel("leaf without samples".into()));
                }
                let vote = majority(&indexed);
                nodes[at] = Node::Leaf {
                    counts: indexed,
                    vote,
                };
            }
        }
    }
    Ok(Tree { nodes })
}

pub(super) fn to_json(model: &RandomForestModel) -> Result<String, ForestError> {
    let file = ModelFile {
        version: MODEL_VERSION,
        n_trees: model.trees.len(),
        vocab_dimension: model.vocab_dimension,
        classes: model.classes.clone(),
        seed: model.params.seed,
        min_leaf: model.params.min_leaf,
        max_depth: model.params.max_depth,
        degenerate: model.degenerate,
        trees: model.trees.iter().map(|t| nest(t, &model.classes)).collect(),
    };
    Ok(serde_json::to_string(&file)?)
}

pub(super) fn from_json(text: &str) -> Result<RandomForestModel, ForestError> {
    let mut de = serde_json::Deserializer::from_str(text);
    de.disable_recursion_limit();
    let file = ModelFile::deserialize(serde_stacker::Deserializer::new(&mut de))?;
    de.end()?;

    if file.version != MODEL_VERSION {
        return Err(ForestError::InvalidModel(format!(
            "unsupported version {}",
            file.version
        )));
    }
    if file.trees.is_empty() || file.n_trees != file.trees.len() {
        return Err(ForestError::InvalidModel(format!(
            "n_trees {} but {} trees",
            file.n_trees,
            file.trees.len()
        )));
    }
    if file.classes.is_empty() || !file.classes.windows(2).all(|w| w[0] < w[1]) {
        return Err(ForestError::InvalidModel(
            "classes must be non-empty and strictly ascending".into(),
        ));
    }
    let trees = file
        .trees
        .iter()
        .map(|t| flatten(t, &file.classes, file.vocab_dimension))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RandomForestModel {
        trees,
        vocab_dimension: file.vocab_dimension,
        classes: file.classes.clone(),
        params: ForestParams {
            n_trees: file.n_trees,
            min_leaf: file.min_leaf,
            max_depth: file.max_depth,
            seed: file.seed,
        },
        degenerate: file.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{train, ForestParams, RandomForestModel};
    use crate::corpus::fixtures::corpus;

    #[test]
    fn round_trip_preserves_model() {
        let rows: Vec<(&str, Option<u32>, &[&str])> = (0..24)
            .map(|i| ("u", Some(i % 3), [&["a"][..], &["b", "x"], &["c", "x"]][i as usize % 3]))
            .collect();
        let model = train(
            &corpus(3, &rows),
            &ForestParams {
                n_trees: 6,
                seed: 5,
                ..ForestParams::default()
            },
        )
        .unwrap();
        let json = model.to_json().unwrap();
        let back = RandomForestModel::from_json(&json).unwrap();
        assert_eq!(back, model);
        assert!(json.starts_with(r#"{"version":1,"n_trees":6,"vocab_dimension":4,"classes":[0,1,2]"#));
    }

    #[test]
    fn leaf_only_model_parses() {
        let json = r#"{"version":1,"n_trees":1,"vocab_dimension":3,"classes":[4,9],"seed":0,
            "trees":[{"split":{"feature":2,"left":{"leaf":{"counts":{"4":3}}},"right":{"leaf":{"counts":{"9":1,"4":1}}}}}]}"#;
        let m = RandomForestModel::from_json(json).unwrap();
        assert_eq!(m.posterior_for(&[2]).argmax(), 4);
        assert_eq!(m.posterior_for(&[]).argmax(), 4);
    }

    #[test]
    fn rejects_inconsistent_models() {
        let cases = [
            r#"{"version":2,"n_trees":1,"vocab_dimension":1,"classes":[0],"seed":0,"trees":[{"leaf":{"counts":{"0":1}}}]}"#,
            r#"{"version":1,"n_trees":2,"vocab_dimension":1,"classes":[0],"seed":0,"trees":[{"leaf":{"counts":{"0":1}}}]}"#,
            r#"{"version":1,"n_trees":1,"vocab_dimension":1,"classes":[0],"seed":0,"trees":[{"leaf":{"counts":{"5":1}}}]}"#,
            r#"{"version":1,"n_trees":1,"vocab_dimension":1,"classes":[0],"seed":0,"trees":[{"leaf":{"counts":{}}}]}"#,
            r#"{"version":1,"n_trees":1,"vocab_dimension":1,"classes":[0],"seed":0,"trees":[{"split":{"feature":1,"left":{"leaf":{"counts":{"0":1}}},"right":{"leaf":{"counts":{"0":1}}}}}]}"#,
            r#"{"version":1,"n_trees":1,"vocab_dimension":1,"classes":[1,0],"seed":0,"trees":[{"leaf":{"counts":{"0":1}}}]}"#,
        ];
        for case in cases {
            assert!(RandomForestModel::from_json(case).is_err(), "{case}");
        }
    }

    #[test]
    fn deep_nesting_parses() {
        let depth = 2000;
        let mut json = String::new();
        for _ in 0..depth {
            json.push_str(r#"{"split":{"feature":0,"left":{"leaf":{"counts":{"0":1}}},"right":"#);
        }
        json.push_str(r#"{"leaf":{"counts":{"1":1}}}"#);
        for _ in 0..depth {
            json.push_str("}}");
        }
        let text = format!(
            r#"{{"version":1,"n_trees":1,"vocab_dimension":1,"classes":[0,1],"seed":0,"trees":[{json}]}}"#
        );
        let m = RandomForestModel::from_json(&text).unwrap();
        assert_eq!(m.trees()[0].depth(), depth);
        assert_eq!(m.posterior_for(&[0]).argmax(), 1);
    }
}
