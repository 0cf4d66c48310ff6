//! Gradient-boosted regression trees with squared-error loss.
//!
//! Trees are grown leaf-wise (best split first) with exact greedy split
//! search on pre-sorted feature values. There is no row or feature
//! subsampling, so training is fully deterministic; ties between candidate
//! splits are broken by node creation order, then feature index, then
//! threshold.

use serde::Serialize;

use super::FeatureMatrix;

#[derive(Debug, Clone, Serialize)]
pub struct GbrtModel {
    pub base: f64,
    pub trees: Vec<Tree>,
    /// in-sample mean squared error after each boosting stage
    pub training_loss: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "node", rename_all = "kebab-case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

impl Tree {
    fn leaf_value(&self, x: &FeatureMatrix, row: usize) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if x.value(row, *feature) <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

impl GbrtModel {
    pub fn predict(&self, x: &FeatureMatrix) -> Vec<f64> {
        (0..x.n_rows())
            .map(|row| {
                self.base
                    + self
                        .trees
                        .iter()
                        .map(|t| t.leaf_value(x, row))
                        .sum::<f64>()
            })
            .collect()
    }
}

/// Split candidate for one grown leaf. Gain is the reduction in residual
/// sum of squares.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Working state of a growable leaf: its rows sorted by every feature,
/// and the residual sums over those rows.
struct LeafState {
    /// tree-node index this state belongs to
    node: usize,
    /// per feature: row ids sorted ascending by that feature's value
    sorted: Vec<Vec<u32>>,
    sum: f64,
    sum_sq: f64,
}

impl LeafState {
    fn count(&self) -> usize {
        self.sorted[0].len()
    }
}

pub(super) fn fit(
    x: &FeatureMatrix,
    y: &[f64],
    trees: usize,
    learning_rate: f64,
    max_leaves: usize,
    min_leaf_samples: usize,
) -> GbrtModel {
    let n = x.n_rows();
    let d = x.n_features();
    let base = crate::stats::mean(y);

    // Global sort order per feature, computed once and reused by every tree
    // through stable partitioning.
    let root_sorted: Vec<Vec<u32>> = (0..d)
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                col[a as usize]
                    .partial_cmp(&col[b as usize])
                    .expect("finite feature values")
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let mut residual: Vec<f64> = y.iter().map(|v| v - base).collect();
    let mut model = GbrtModel {
        base,
        trees: Vec::with_capacity(trees),
        training_loss: Vec::with_capacity(trees),
    };

    for _ in 0..trees {
        let tree = grow_tree(
            x,
            &residual,
            &root_sorted,
            learning_rate,
            max_leaves,
            min_leaf_samples,
        );
        for row in 0..n {
            residual[row] -= tree.leaf_value(x, row);
        }
        model
            .training_loss
            .push(residual.iter().map(|r| r * r).sum::<f64>() / n as f64);
        model.trees.push(tree);
    }
    model
}

fn grow_tree(
    x: &FeatureMatrix,
    residual: &[f64],
    root_sorted: &[Vec<u32>],
    learning_rate: f64,
    max_leaves: usize,
    min_leaf_samples: usize,
) -> Tree {
    let mut nodes: Vec<Node> = vec![Node::Leaf { value: 0.0 }];
    let (sum, sum_sq) = residual
        .iter()
        .fold((0.0, 0.0), |(s, q), r| (s + r, q + r * r));
    let root = LeafState {
        node: 0,
        sorted: root_sorted.to_vec(),
        sum,
        sum_sq,
    };

    let mut leaves: Vec<LeafState> = vec![root];
    let mut candidates: Vec<Option<Candidate>> =
        vec![best_split(x, residual, &leaves[0], min_leaf_samples)];

    while leaves.len() < max_leaves {
        // Best candidate across all growable leaves; ties prefer the leaf
        // created first so growth order is reproducible.
        let Some(slot) = candidates
            .iter()
            .enumerate()
            .filter_map(|(i, c)| c.map(|c| (i, c)))
            .max_by(|(ia, a), (ib, b)| {
                a.gain
                    .partial_cmp(&b.gain)
                    .expect("finite gain")
                    .then(ib.cmp(ia))
            })
            .map(|(i, _)| i)
        else {
            break;
        };
        let cand = candidates[slot].take().expect("candidate present");
        let state = leaves.swap_remove(slot);
        candidates.swap_remove(slot);

        let col = x.column(cand.feature);
        let mut left = LeafState {
            node: nodes.len(),
            sorted: vec![Vec::new(); state.sorted.len()],
            sum: 0.0,
            sum_sq: 0.0,
        };
        let mut right = LeafState {
            node: nodes.len() + 1,
            sorted: vec![Vec::new(); state.sorted.len()],
            sum: 0.0,
            sum_sq: 0.0,
        };
        for (j, order) in state.sorted.iter().enumerate() {
            for &row in order {
                if col[row as usize] <= cand.threshold {
                    left.sorted[j].push(row);
                } else {
                    right.sorted[j].push(row);
                }
            }
        }
        for &row in &left.sorted[0] {
            let r = residual[row as usize];
            left.sum += r;
            left.sum_sq += r * r;
        }
        right.sum = state.sum - left.sum;
        right.sum_sq = state.sum_sq - left.sum_sq;

        nodes[state.node] = Node::Split {
            feature: cand.feature,
            threshold: cand.threshold,
            left: left.node,
            right: right.node,
        };
        nodes.push(Node::Leaf { value: 0.0 });
        nodes.push(Node::Leaf { value: 0.0 });

        for child in [left, right] {
            let cand = best_split(x, residual, &child, min_leaf_samples);
            leaves.push(child);
            candidates.push(cand);
        }
    }

    for leaf in &leaves {
        let value = learning_rate * leaf.sum / leaf.count() as f64;
        nodes[leaf.node] = Node::Leaf { value };
    }
    Tree { nodes }
}

/// Exact greedy search for the best split of one leaf. Returns `None` when
/// no split satisfies the minimum-leaf-size constraint with a materially
/// positive gain.
fn best_split(
    x: &FeatureMatrix,
    residual: &[f64],
    leaf: &LeafState,
    min_leaf_samples: usize,
) -> Option<Candidate> {
    let n = leaf.count();
    if n < 2 * min_leaf_samples {
        return None;
    }
    let parent_score = leaf.sum * leaf.sum / n as f64;
    // Gains below the floating-point noise floor of the node's residual
    // mass are treated as zero so constant targets produce root-only trees.
    let min_gain = 1e-9 * (leaf.sum_sq + 1e-300);

    let mut best: Option<Candidate> = None;
    for (feature, order) in leaf.sorted.iter().enumerate() {
        let col = x.column(feature);
        let mut left_sum = 0.0;
        let mut left_n = 0usize;
        for w in 0..n - 1 {
            let row = order[w] as usize;
            left_sum += residual[row];
            left_n += 1;
            let here = col[row];
            let next = col[order[w + 1] as usize];
            if here == next {
                continue;
            }
            if left_n < min_leaf_samples || n - left_n < min_leaf_samples {
                continue;
            }
            let right_sum = leaf.sum - left_sum;
            let right_n = n - left_n;
            let gain = left_sum * left_sum / left_n as f64
                + right_sum * right_sum / right_n as f64
                - parent_score;
            if gain <= min_gain {
                continue;
            }
            if best.map(|b| gain > b.gain).unwrap_or(true) {
                let mut threshold = here + (next - here) / 2.0;
                if threshold >= next {
                    threshold = here;
                }
                best = Some(Candidate {
                    gain,
                    feature,
                    threshold,
                });
            }
        }
    }
    best
}
