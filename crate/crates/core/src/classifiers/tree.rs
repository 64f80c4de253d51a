//! Greedy CART classification tree with Gini impurity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_samples, Class, LabeledSample};
use crate::breath_stats::BreathStats;
use crate::error::{Error, Result};

pub const TREE_VERSION: &str = "breathline-tree/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TreeConfig {
    pub max_depth: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf {
        real: usize,
        fake: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn leaf_for(&self, x: &[f64]) -> (usize, usize) {
        match self {
            TreeNode::Leaf { real, fake } => (*real, *fake),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if x[*feature] <= *threshold {
                    left.leaf_for(x)
                } else {
                    right.leaf_for(x)
                }
            }
        }
    }
}

/// Gini impurity `1 - sum p_k^2` of a two-class node.
pub fn gini(real: usize, fake: usize) -> f64 {
    let n = (real + fake) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (p, q) = (real as f64 / n, fake as f64 / n);
    1.0 - p * p - q * q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub version: String,
    pub config: TreeConfig,
    pub root: TreeNode,
}

/// Best split of `idx` as (feature, threshold, weighted child impurity).
/// Ties keep the lowest feature index, then the lowest threshold.
pub(crate) fn best_split(rows: &[Vec<f64>], real: &[bool], idx: &[usize]) -> Option<(usize, f64, f64)> {
    let d = rows.first().map_or(0, Vec::len);
    let n = idx.len() as f64;
    let total_real = idx.iter().filter(|&&i| real[i]).count();
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..d {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
        let (mut left_real, mut left_n) = (0usize, 0usize);
        for k in 0..order.len().saturating_sub(1) {
            let i = order[k];
            left_n += 1;
            left_real += usize::from(real[i]);
            let (v, next) = (rows[i][f], rows[order[k + 1]][f]);
            if v == next {
                continue;
            }
            let right_n = order.len() - left_n;
            let right_real = total_real - left_real;
            let impurity = (left_n as f64 * gini(left_real, left_n - left_real)
                + right_n as f64 * gini(right_real, right_n - right_real))
                / n;
            if best.is_none_or(|(_, _, b)| impurity < b) {
                best = Some((f, v + (next - v) / 2.0, impurity));
            }
        }
    }
    best
}

fn build(rows: &[Vec<f64>], real: &[bool], idx: &[usize], depth: usize, max_depth: usize) -> TreeNode {
    let r = idx.iter().filter(|&&i| real[i]).count();
    let leaf = TreeNode::Leaf {
        real: r,
        fake: idx.len() - r,
    };
    let parent = gini(r, idx.len() - r);
    if depth >= max_depth || parent == 0.0 {
        return leaf;
    }
    match best_split(rows, real, idx) {
        Some((feature, threshold, impurity)) if impurity < parent - 1e-12 => {
            let (l, rr): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| rows[i][feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(build(rows, real, &l, depth + 1, max_depth)),
                right: Box::new(build(rows, real, &rr, depth + 1, max_depth)),
            }
        }
        _ => leaf,
    }
}

impl TreeModel {
    pub fn train(samples: &[LabeledSample], config: &TreeConfig) -> Result<Self> {
        check_samples(samples)?;
        let rows: Vec<Vec<f64>> = samples.iter().map(|s| s.stats.to_array().to_vec()).collect();
        let real: Vec<bool> = samples.iter().map(|s| s.label.is_real()).collect();
        Self::fit(&rows, &real, config)
    }

    pub fn fit(rows: &[Vec<f64>], real: &[bool], config: &TreeConfig) -> Result<Self> {
        if rows.is_empty() || rows.len() != real.len() {
            return Err(Error::Input(format!("{} rows but {} labels", rows.len(), real.len())));
        }
        let idx: Vec<usize> = (0..rows.len()).collect();
        Ok(Self {
            version: TREE_VERSION.to_string(),
            config: config.clone(),
            root: build(rows, real, &idx, 0, config.max_depth),
        })
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Fraction of real training samples in the reached leaf.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let (r, f) = self.root.leaf_for(x);
        if r + f == 0 {
            0.5
        } else {
            r as f64 / (r + f) as f64
        }
    }

    pub fn score(&self, stats: &BreathStats) -> f64 {
        self.predict_row(&stats.to_array())
    }

    /// Majority class of the leaf; ties go to fake.
    pub fn classify(&self, stats: &BreathStats) -> Class {
        Class::from_real(self.score(stats) > 0.5)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != TREE_VERSION {
            return Err(Error::UnsupportedVersion {
                found: m.version,
                expected: TREE_VERSION.to_string(),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(Error::at(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(Error::at(path))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exhaustive(rows: &[Vec<f64>], real: &[bool]) -> (usize, f64, f64) {
        let mut best = (usize::MAX, f64::NAN, f64::INFINITY);
        for f in 0..rows[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let side = |left: bool| {
                    let members: Vec<bool> =
                        rows.iter().zip(real).filter(|(r, _)| (r[f] <= t) == left).map(|(_, &y)| y).collect();
                    let r = members.iter().filter(|&&y| y).count();
                    members.len() as f64 * gini(r, members.len() - r)
                };
                let imp = (side(true) + side(false)) / rows.len() as f64;
                if imp < best.2 {
                    best = (f, t, imp);
                }
            }
        }
        best
    }

    #[test]
    fn gini_half() {
        assert_eq!(gini(5, 5), 0.5);
        assert_eq!(gini(3, 0), 0.0);
    }

    #[test]
    fn zero_rate_is_one_split() {
        let rows = vec![
            vec![0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0],
            vec![9.0, 300.0, 4000.0],
            vec![13.0, 500.0, 2500.0],
        ];
        let real = [false, false, true, true];
        let m = TreeModel::fit(&rows, &real, &TreeConfig::default()).unwrap();
        assert_eq!(m.depth(), 1);
        assert!(matches!(m.root, TreeNode::Split { feature: 0, threshold: 4.5, .. }));
        for (r, &y) in rows.iter().zip(&real) {
            assert_eq!(m.predict_row(r) > 0.5, y);
        }
        let back = TreeModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn eight_sample_root_matches_exhaustive() {
        let rows = vec![
            vec![3.0, 1.0, 7.0],
            vec![1.0, 4.0, 2.0],
            vec![4.0, 1.5, 8.0],
            vec![1.5, 9.0, 6.0],
            vec![5.0, 2.6, 5.0],
            vec![9.0, 5.0, 3.0],
            vec![2.0, 6.0, 1.0],
            vec![6.0, 5.5, 4.0],
        ];
        let real = [true, false, true, false, true, true, false, false];
        let m = TreeModel::fit(&rows, &real, &TreeConfig::default()).unwrap();
        let (f, t, _) = exhaustive(&rows, &real);
        match m.root {
            TreeNode::Split { feature, threshold, .. } => assert_eq!((feature, threshold), (f, t)),
            _ => panic!("expected a split"),
        }
    }

    proptest! {
        #[test]
        fn depth_and_accuracy(data in prop::collection::vec((prop::array::uniform3(0u8..8), any::<bool>()), 2..30)) {
            let rows: Vec<Vec<f64>> = data.iter().map(|(x, _)| x.iter().map(|&v| v as f64).collect()).collect();
            let real: Vec<bool> = data.iter().map(|d| d.1).collect();
            let m = TreeModel::fit(&rows, &real, &TreeConfig::default()).unwrap();
            prop_assert!(m.depth() <= 3);
            let acc = |pred: &dyn Fn(&[f64]) -> bool| rows.iter().zip(&real).filter(|(r, &y)| pred(r) == y).count();
            let tree_acc = acc(&|r| m.predict_row(r) > 0.5);
            // best single-feature threshold, either orientation, plus constant rules
            let mut stump = acc(&|_| true).max(acc(&|_| false));
            for f in 0..3 {
                for t in 0..8 {
                    let t = t as f64 + 0.5;
                    stump = stump.max(acc(&|r| r[f] <= t)).max(acc(&|r| r[f] > t));
                }
            }
            prop_assert!(tree_acc >= stump, "tree {} < stump {}", tree_acc, stump);
            let (f, t, imp) = exhaustive(&rows, &real);
            if let TreeNode::Split { feature, threshold, .. } = m.root {
                prop_assert_eq!((feature, threshold), (f, t));
                let _ = imp;
            }
        }
    }
}
