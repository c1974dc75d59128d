//! Binary decision trees: gini-grown classification trees for forests and
//! second-order regression trees for boosting.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::FeatureMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class distribution for classification trees, `[w]` for boosting trees.
    Leaf { value: Vec<f64> },
}

/// Nodes in an arena with the root at index 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    fn leaf_value_at(&self, x: &FeatureMatrix, i: usize) -> &[f64] {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if x.get(i, *feature) <= *threshold { *left } else { *right },
                Node::Leaf { value } => return value,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, k: usize) -> usize {
            match &t.nodes[k] {
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(self, 0)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value } => Some(value.as_slice()),
            Node::Split { .. } => None,
        })
    }

    /// Largest feature index referenced by a split.
    pub fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

/// Gini impurity Σ p(1 − p) of a class-count vector.
pub fn gini(counts: &[f64]) -> f64 {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    counts.iter().map(|&c| (c / total) * (1.0 - c / total)).sum()
}

pub(crate) struct ClassificationGrower<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [usize],
    pub n_classes: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub features_per_split: usize,
}

impl ClassificationGrower<'_> {
    /// Grows a tree on `rows`, which may repeat (bootstrap multiplicity).
    pub fn grow<R: Rng>(&self, rows: Vec<usize>, rng: &mut R) -> Tree {
        let mut nodes = Vec::new();
        self.grow_node(rows, 0, &mut nodes, rng);
        Tree { nodes }
    }

    fn grow_node<R: Rng>(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>, rng: &mut R) -> usize {
        let mut counts = vec![0.0; self.n_classes];
        for &r in &rows {
            counts[self.y[r]] += 1.0;
        }
        let id = nodes.len();
        let n = rows.len() as f64;
        nodes.push(Node::Leaf {
            value: counts.iter().map(|c| c / n).collect(),
        });
        let pure = counts.iter().filter(|&&c| c > 0.0).count() <= 1;
        if pure || depth >= self.max_depth || rows.len() < self.min_samples_split {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(&rows, rng) else {
            return id;
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x.get(r, feature) <= threshold);
        let left = self.grow_node(left, depth + 1, nodes, rng);
        let right = self.grow_node(right, depth + 1, nodes, rng);
        nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Minimum weighted child gini over a random feature subset. Features
    /// constant within the node do not count towards the subset size.
    fn best_split<R: Rng>(&self, rows: &[usize], rng: &mut R) -> Option<(usize, f64)> {
        let n_features = self.x.ncols();
        let order = sample(rng, n_features, n_features);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut evaluated = 0;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        let n = rows.len() as f64;
        for feature in order.iter() {
            if evaluated >= self.features_per_split {
                break;
            }
            let col = self.x.column(feature);
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[pairs.len() - 1].0 {
                continue;
            }
            evaluated += 1;
            let mut left = vec![0.0; self.n_classes];
            let mut right = vec![0.0; self.n_classes];
            for &(_, c) in &pairs {
                right[c] += 1.0;
            }
            for k in 0..pairs.len() - 1 {
                let c = pairs[k].1;
                left[c] += 1.0;
                right[c] -= 1.0;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let nl = (k + 1) as f64;
                let score = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                if best.is_none_or(|b| score < b.0) {
                    best = Some((score, feature, 0.5 * (pairs[k].0 + pairs[k + 1].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BoostingTreeParams {
    pub max_depth: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub min_child_weight: f64,
}

/// Row orderings by feature value, computed once per boosting run.
pub(crate) fn presort(x: &FeatureMatrix) -> Vec<Vec<u32>> {
    (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mut idx: Vec<u32> = (0..x.nrows() as u32).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect()
}

/// Grows a regression tree level by level on gradient/hessian sums with the
/// exact greedy split search. Rows with `in_bag[i] == false` are ignored.
pub(crate) fn grow_boosting_tree(
    x: &FeatureMatrix,
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    in_bag: &[bool],
    params: BoostingTreeParams,
) -> Tree {
    let n = x.nrows();
    let lambda = params.lambda;
    let weight = |g: f64, h: f64| if h + lambda > 0.0 { -g / (h + lambda) } else { 0.0 };
    let score = |g: f64, h: f64| if h + lambda > 0.0 { g * g / (h + lambda) } else { 0.0 };

    // Open nodes at the current level: arena id plus (G, H).
    let (mut g0, mut h0) = (0.0, 0.0);
    for i in (0..n).filter(|&i| in_bag[i]) {
        g0 += grad[i];
        h0 += hess[i];
    }
    let mut nodes = vec![Node::Leaf {
        value: vec![weight(g0, h0)],
    }];
    let mut open: Vec<(usize, f64, f64)> = vec![(0, g0, h0)];
    // Position of each in-bag row among `open`, or usize::MAX once settled.
    let mut slot: Vec<usize> = (0..n).map(|i| if in_bag[i] { 0 } else { usize::MAX }).collect();

    for _depth in 0..params.max_depth {
        if open.is_empty() {
            break;
        }
        let k = open.len();
        // best: (gain, feature, threshold)
        let mut best: Vec<Option<(f64, usize, f64)>> = vec![None; k];
        let mut gl = vec![0.0; k];
        let mut hl = vec![0.0; k];
        let mut last = vec![f64::NAN; k];
        for (feature, order) in sorted.iter().enumerate() {
            let col = x.column(feature);
            gl.iter_mut().for_each(|v| *v = 0.0);
            hl.iter_mut().for_each(|v| *v = 0.0);
            last.iter_mut().for_each(|v| *v = f64::NAN);
            for &r in order {
                let r = r as usize;
                let q = slot[r];
                if q == usize::MAX {
                    continue;
                }
                let v = col[r];
                let (_, g, h) = open[q];
                if !last[q].is_nan() && v > last[q] {
                    let (gr, hr) = (g - gl[q], h - hl[q]);
                    if hl[q] >= params.min_child_weight && hr >= params.min_child_weight {
                        let gain = 0.5 * (score(gl[q], hl[q]) + score(gr, hr) - score(g, h)) - params.gamma;
                        if gain > 0.0 && best[q].is_none_or(|b| gain > b.0) {
                            best[q] = Some((gain, feature, 0.5 * (last[q] + v)));
                        }
                    }
                }
                gl[q] += grad[r];
                hl[q] += hess[r];
                last[q] = v;
            }
        }

        // Split the winners; each child is a fresh open node.
        let mut next: Vec<(usize, f64, f64)> = Vec::new();
        let mut child_slot = vec![(usize::MAX, usize::MAX); k];
        for (q, b) in best.iter().enumerate() {
            let Some((_, feature, threshold)) = *b else { continue };
            let left = nodes.len();
            nodes.push(Node::Leaf { value: vec![0.0] });
            nodes.push(Node::Leaf { value: vec![0.0] });
            nodes[open[q].0] = Node::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            child_slot[q] = (next.len(), next.len() + 1);
            next.push((left, 0.0, 0.0));
            next.push((left + 1, 0.0, 0.0));
        }
        for r in 0..n {
            let q = slot[r];
            if q == usize::MAX {
                continue;
            }
            match best[q] {
                Some((_, feature, threshold)) => {
                    let c = if x.get(r, feature) <= threshold { child_slot[q].0 } else { child_slot[q].1 };
                    slot[r] = c;
                    next[c].1 += grad[r];
                    next[c].2 += hess[r];
                }
                None => slot[r] = usize::MAX,
            }
        }
        for &(id, g, h) in &next {
            nodes[id] = Node::Leaf {
                value: vec![weight(g, h)],
            };
        }
        open = next;
    }
    Tree { nodes }
}

/// Leaf value of every row of `x`.
pub(crate) fn evaluate_rows(tree: &Tree, x: &FeatureMatrix) -> Vec<f64> {
    (0..x.nrows()).map(|i| tree.leaf_value_at(x, i)[0]).collect()
}
