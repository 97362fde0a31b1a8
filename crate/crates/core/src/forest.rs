//! Random forest over flattened temporal features: bagged Gini decision
//! trees with per-node feature subsampling and mean-decrease-impurity
//! feature importances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// None grows to purity (subject to `min_samples_split`).
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// None means floor(sqrt(n_features)), the classification default.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be >= 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(Error::Config("min_samples_split must be >= 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Fraction of training rows at this leaf with label 1.
        probability: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { probability } => return *probability,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], idx: usize) -> usize {
            match &nodes[idx] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
            }
        }
        rec(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub n_features: usize,
    /// Unnormalized impurity-decrease totals per feature, summed over trees.
    importance_raw: Vec<f64>,
}

impl Forest {
    /// A forest with no trees yet; predictions error until fitted.
    pub fn empty(n_features: usize) -> Forest {
        Forest {
            trees: Vec::new(),
            n_features,
            importance_raw: vec![0.0; n_features],
        }
    }

    /// Mean over trees of the leaf class-1 fraction.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if self.trees.is_empty() {
            return Err(Error::Data("forest has not been fitted".into()));
        }
        if row.len() != self.n_features {
            return Err(Error::Shape(format!(
                "forest expects {} features, got {}",
                self.n_features,
                row.len()
            )));
        }
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    /// Mean-decrease-impurity importances normalized to sum to 1. Features
    /// never used in any split get 0.
    pub fn feature_importance(&self) -> Vec<f64> {
        let total: f64 = self.importance_raw.iter().sum();
        if total <= 0.0 {
            return vec![0.0; self.n_features];
        }
        self.importance_raw.iter().map(|v| v / total).collect()
    }
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    cfg: &'a ForestConfig,
    max_features: usize,
    nodes: Vec<Node>,
    importance: Vec<f64>,
    n_total: usize,
    feature_pool: Vec<usize>,
}

impl<'a> TreeBuilder<'a> {
    /// Grows the subtree over `idx` (indices into the bootstrap sample);
    /// returns the node index.
    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        let n = idx.len();
        let node_gini = gini(pos, n);
        let make_leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf {
                probability: pos as f64 / n as f64,
            });
            nodes.len() - 1
        };
        if pos == 0
            || pos == n
            || n < self.cfg.min_samples_split
            || self.cfg.max_depth.is_some_and(|d| depth >= d)
        {
            return make_leaf(&mut self.nodes);
        }

        // per-node feature subsample without replacement
        self.feature_pool.shuffle(rng);
        let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, gain)
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for &feature in self.feature_pool[..self.max_features].iter() {
            order.clear();
            order.extend_from_slice(idx);
            order.sort_unstable_by(|&a, &b| {
                self.rows[a][feature].total_cmp(&self.rows[b][feature])
            });
            // left-prefix scan over distinct-value boundaries
            let mut left_pos = 0usize;
            for k in 0..n - 1 {
                if self.labels[order[k]] == 1 {
                    left_pos += 1;
                }
                let a = self.rows[order[k]][feature];
                let b = self.rows[order[k + 1]][feature];
                if a == b {
                    continue;
                }
                let left_n = k + 1;
                let right_n = n - left_n;
                let right_pos = pos - left_pos;
                let child = (left_n as f64 * gini(left_pos, left_n)
                    + right_n as f64 * gini(right_pos, right_n))
                    / n as f64;
                let gain = node_gini - child;
                let threshold = a + (b - a) / 2.0;
                if gain > best.map_or(1e-12, |(_, _, g)| g) {
                    best = Some((feature, threshold, gain));
                }
            }
        }

        let Some((feature, threshold, gain)) = best else {
            return make_leaf(&mut self.nodes);
        };
        self.importance[feature] += gain * n as f64 / self.n_total as f64;

        let split_at = itertools_partition(idx, |&i| self.rows[i][feature] <= threshold);
        let node_idx = self.nodes.len();
        self.nodes.push(Node::Leaf { probability: 0.0 }); // placeholder
        let (left_idx, right_idx) = idx.split_at_mut(split_at);
        let left = self.grow(left_idx, depth + 1, rng);
        let right = self.grow(right_idx, depth + 1, rng);
        self.nodes[node_idx] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        node_idx
    }
}

/// In-place stable-enough partition; returns the number of elements
/// satisfying the predicate, which end up first.
fn itertools_partition<T, F: Fn(&T) -> bool>(slice: &mut [T], pred: F) -> usize {
    let mut next = 0;
    for i in 0..slice.len() {
        if pred(&slice[i]) {
            slice.swap(next, i);
            next += 1;
        }
    }
    next
}

pub fn fit_forest(rows: &[Vec<f64>], labels: &[u8], cfg: &ForestConfig) -> Result<Forest> {
    cfg.validate()?;
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Data(format!(
            "forest needs matching non-empty rows/labels, got {}/{}",
            rows.len(),
            labels.len()
        )));
    }
    let n_features = rows[0].len();
    if rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::Shape("forest rows have inconsistent widths".into()));
    }
    let max_features = cfg
        .max_features
        .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
        .clamp(1, n_features);

    let mut forest = Forest::empty(n_features);
    for tree_i in 0..cfg.n_trees {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (tree_i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let mut idx: Vec<usize> = if cfg.bootstrap {
            (0..rows.len()).map(|_| rng.gen_range(0..rows.len())).collect()
        } else {
            (0..rows.len()).collect()
        };
        let mut builder = TreeBuilder {
            rows,
            labels,
            cfg,
            max_features,
            nodes: Vec::new(),
            importance: vec![0.0; n_features],
            n_total: idx.len(),
            feature_pool: (0..n_features).collect(),
        };
        builder.grow(&mut idx, 0, &mut rng);
        forest.trees.push(DecisionTree {
            nodes: builder.nodes,
        });
        for (acc, v) in forest.importance_raw.iter_mut().zip(&builder.importance) {
            *acc += v;
        }
    }
    Ok(forest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_tree_cfg() -> ForestConfig {
        ForestConfig {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(usize::MAX),
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn pure_labels_give_single_leaf() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]];
        let labels = vec![1, 1, 1];
        let f = fit_forest(&rows, &labels, &single_tree_cfg()).unwrap();
        assert_eq!(f.trees[0].nodes.len(), 1);
        assert_eq!(f.predict(&[0.0, 0.0]).unwrap(), 1.0);
        assert!(f.feature_importance().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stump_matches_brute_force_best_split() {
        // single feature, 1D data: enumerate every midpoint by hand
        let xs = [0.1, 0.4, 0.45, 0.8, 0.9, 1.3];
        let labels = [0u8, 0, 1, 1, 1, 1];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let cfg = ForestConfig {
            max_depth: Some(1),
            ..single_tree_cfg()
        };
        let f = fit_forest(&rows, &labels, &cfg).unwrap();

        // brute force: best weighted-Gini midpoint
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..xs.len() - 1 {
            let thr = (xs[k] + xs[k + 1]) / 2.0;
            let (mut lp, mut ln, mut rp, mut rn) = (0, 0, 0, 0);
            for (&x, &y) in xs.iter().zip(&labels) {
                match (x <= thr, y) {
                    (true, 1) => lp += 1,
                    (true, _) => ln += 1,
                    (false, 1) => rp += 1,
                    (false, _) => rn += 1,
                }
            }
            let w = ((lp + ln) as f64 * gini(lp, lp + ln)
                + (rp + rn) as f64 * gini(rp, rp + rn))
                / xs.len() as f64;
            if w < best.0 {
                best = (w, thr);
            }
        }
        let Node::Split { threshold, .. } = f.trees[0].nodes[0] else {
            panic!("expected a split at the root");
        };
        assert!((threshold - best.1).abs() < 1e-12, "{threshold} vs {}", best.1);
        assert!((threshold - 0.425).abs() < 1e-12);
    }

    #[test]
    fn separable_data_reaches_perfect_training_accuracy() {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let x = i as f64 / 10.0;
            rows.push(vec![x, (i % 7) as f64]);
            labels.push(u8::from(x > 3.0));
        }
        let cfg = ForestConfig {
            n_trees: 15,
            seed: 3,
            ..Default::default()
        };
        let f = fit_forest(&rows, &labels, &cfg).unwrap();
        for (row, &y) in rows.iter().zip(&labels) {
            let p = f.predict(row).unwrap();
            assert_eq!(u8::from(p > 0.5), y, "row {row:?}");
        }
    }

    #[test]
    fn importance_concentrates_on_informative_feature_and_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..300 {
            let y = rng.gen_bool(0.5);
            let informative = if y { 1.0 } else { -1.0 } + rng.gen_range(-0.3..0.3);
            rows.push(vec![rng.gen_range(-1.0..1.0), informative, rng.gen_range(-1.0..1.0)]);
            labels.push(y as u8);
        }
        let cfg = ForestConfig {
            n_trees: 30,
            seed: 5,
            ..Default::default()
        };
        let f = fit_forest(&rows, &labels, &cfg).unwrap();
        let imp = f.feature_importance();
        assert!((imp.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(imp[1] > 0.8, "importances {imp:?}");
        assert!(imp[1] > imp[0] && imp[1] > imp[2]);
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<u8> = (0..80).map(|_| rng.gen_bool(0.4) as u8).collect();
        let cfg = ForestConfig {
            n_trees: 10,
            seed: 21,
            ..Default::default()
        };
        let a = fit_forest(&rows, &labels, &cfg).unwrap();
        let b = fit_forest(&rows, &labels, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn predictions_are_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect();
        let labels: Vec<u8> = (0..50).map(|i| (i % 3 == 0) as u8).collect();
        let f = fit_forest(&rows, &labels, &ForestConfig { n_trees: 9, ..Default::default() }).unwrap();
        for row in &rows {
            let p = f.predict(row).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(f.predict(&[0.0; 2]).is_err());
        assert!(Forest::empty(3).predict(&[0.0; 3]).is_err());
    }

    #[test]
    fn max_depth_is_respected() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<u8> = (0..200).map(|_| rng.gen_bool(0.5) as u8).collect();
        let cfg = ForestConfig {
            n_trees: 5,
            max_depth: Some(3),
            seed: 2,
            ..Default::default()
        };
        let f = fit_forest(&rows, &labels, &cfg).unwrap();
        for t in &f.trees {
            assert!(t.depth() <= 3);
        }
    }
}
