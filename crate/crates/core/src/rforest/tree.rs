//! CART classification trees grown on bootstrap samples.
//!
//! Features are rank-encoded once per dataset so that every node only sorts
//! packed `(rank, class)` integers. Gini comparisons are done in exact integer
//! arithmetic: for a split with child class counts `l` and `r`, minimizing the
//! weighted Gini impurity is the same as maximizing
//! `sum(l_c^2)/n_l + sum(r_c^2)/n_r`, which is compared by cross-multiplication.
//! Ties keep the earliest candidate: lowest feature index, then lowest threshold.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Stream 0 of a tree's generator draws the bootstrap; node `k` (preorder) uses stream `k + 1`.
const BOOTSTRAP_STREAM: u64 = 0;

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for item `index` under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_add(1)))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    /// Features sampled (without replacement) at every node.
    pub mtry: usize,
    /// Nodes with fewer rows than this become leaves.
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { mtry: 7, min_leaf: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go to the left child at `index + 1`.
    Split { feature: usize, threshold: f64, right: usize },
    Leaf { histogram: Vec<u32>, vote: usize },
}

impl TreeNode {
    pub fn leaf(histogram: Vec<u32>) -> Self {
        let vote = plurality(&histogram);
        TreeNode::Leaf { histogram, vote }
    }
}

/// Index of the largest count; ties go to the lower index.
pub(crate) fn plurality(histogram: &[u32]) -> usize {
    let mut best = 0;
    for (k, &c) in histogram.iter().enumerate() {
        if c > histogram[best] {
            best = k;
        }
    }
    best
}

/// Nodes stored in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub seed: u64,
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &TreeNode {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split { feature, threshold, right } => {
                    i = if x[*feature] <= *threshold { i + 1 } else { *right };
                }
                leaf => return leaf,
            }
        }
    }

    pub fn vote(&self, x: &[f64]) -> usize {
        match self.leaf_for(x) {
            TreeNode::Leaf { vote, .. } => *vote,
            TreeNode::Split { .. } => unreachable!("descent ends at a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> (usize, usize) {
            match &nodes[i] {
                TreeNode::Leaf { .. } => (0, i + 1),
                TreeNode::Split { right, .. } => {
                    let (dl, _) = walk(nodes, i + 1);
                    let (dr, end) = walk(nodes, *right);
                    (1 + dl.max(dr), end)
                }
            }
        }
        walk(&self.nodes, 0).0
    }

    /// Rebuilds right-child links from a preorder list; fails on malformed input.
    pub(crate) fn from_preorder(seed: u64, nodes: Vec<TreeNode>) -> Result<Self> {
        fn subtree_end(nodes: &mut [TreeNode], i: usize) -> Result<usize> {
            if i >= nodes.len() {
                return Err(Error::Parse("truncated preorder tree".into()));
            }
            if let TreeNode::Leaf { .. } = nodes[i] {
                return Ok(i + 1);
            }
            let right = subtree_end(nodes, i + 1)?;
            if let TreeNode::Split { right: r, .. } = &mut nodes[i] {
                *r = right;
            }
            subtree_end(nodes, right)
        }
        let mut nodes = nodes;
        if subtree_end(&mut nodes, 0)? != nodes.len() {
            return Err(Error::Parse("trailing nodes after preorder tree".into()));
        }
        Ok(Tree { seed, nodes })
    }
}

/// Dense per-feature ranks of a dataset, shared by all trees grown on it.
#[derive(Debug, Clone)]
pub struct RankedData {
    pub n_features: usize,
    pub n_classes: usize,
    /// `ranks[f][row]`
    ranks: Vec<Vec<u32>>,
    /// `values[f][rank]`: the distinct sorted values of feature `f`.
    values: Vec<Vec<f64>>,
    labels: Vec<u8>,
}

impl RankedData {
    pub fn new(ds: &Dataset) -> Self {
        let n = ds.len();
        let mut ranks = Vec::with_capacity(ds.n_features);
        let mut values = Vec::with_capacity(ds.n_features);
        for f in 0..ds.n_features {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| ds.value(a as usize, f).total_cmp(&ds.value(b as usize, f)));
            let mut r = vec![0u32; n];
            let mut distinct: Vec<f64> = Vec::new();
            for &row in &order {
                let v = ds.value(row as usize, f);
                if distinct.last() != Some(&v) {
                    distinct.push(v);
                }
                r[row as usize] = (distinct.len() - 1) as u32;
            }
            ranks.push(r);
            values.push(distinct);
        }
        RankedData {
            n_features: ds.n_features,
            n_classes: ds.classes.len(),
            ranks,
            values,
            labels: ds.y.iter().map(|&c| c as u8).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Draws `rows.len()` rows from `rows` with replacement.
pub fn bootstrap_sample(rows: &[u32], seed: u64) -> Vec<u32> {
    let mut rng = stream_rng(seed, BOOTSTRAP_STREAM);
    (0..rows.len()).map(|_| rows[rng.random_range(0..rows.len())]).collect()
}

/// Grows one tree on a bootstrap sample of `rows` (indices into `data`).
pub fn train_tree(data: &RankedData, rows: &[u32], params: &TreeParams, seed: u64) -> Result<Tree> {
    if rows.is_empty() {
        return Err(Error::Argument("cannot train a tree on zero rows".into()));
    }
    let sample = bootstrap_sample(rows, seed);
    grow(data, sample, params, seed)
}

struct Task {
    rows: Vec<u32>,
    /// Split node whose right link must point at this task's node.
    patch_parent: Option<usize>,
}

struct Best {
    feature: usize,
    rank_lo: u32,
    rank_hi: u32,
    num: u128,
    den: u128,
}

/// Grows a tree on exactly the given multiset of rows.
pub fn grow(data: &RankedData, sample: Vec<u32>, params: &TreeParams, seed: u64) -> Result<Tree> {
    if params.mtry == 0 || params.mtry > data.n_features {
        return Err(Error::Config(format!("mtry must lie in 1..={}, got {}", data.n_features, params.mtry)));
    }
    if data.n_classes == 0 || data.n_classes > 255 {
        return Err(Error::Argument(format!("unsupported class count {}", data.n_classes)));
    }
    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut stack = vec![Task { rows: sample, patch_parent: None }];
    let mut keys: Vec<u64> = Vec::new();
    while let Some(task) = stack.pop() {
        let id = nodes.len();
        if let Some(parent) = task.patch_parent {
            if let TreeNode::Split { right, .. } = &mut nodes[parent] {
                *right = id;
            }
        }
        let rows = task.rows;
        let mut hist = vec![0u32; data.n_classes];
        for &r in &rows {
            hist[data.labels[r as usize] as usize] += 1;
        }
        let n = rows.len();
        let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < params.min_leaf {
            nodes.push(TreeNode::leaf(hist));
            continue;
        }

        let mut rng = stream_rng(seed, id as u64 + 1);
        let mut features = index::sample(&mut rng, data.n_features, params.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<Best> = None;
        for &f in &features {
            keys.clear();
            let ranks = &data.ranks[f];
            keys.extend(rows.iter().map(|&r| ((ranks[r as usize] as u64) << 8) | data.labels[r as usize] as u64));
            keys.sort_unstable();
            let mut left = vec![0u64; data.n_classes];
            let mut right: Vec<u64> = hist.iter().map(|&c| c as u64).collect();
            let mut s_left: u128 = 0;
            let mut s_right: u128 = right.iter().map(|&c| (c * c) as u128).sum();
            for i in 0..n - 1 {
                let c = (keys[i] & 0xFF) as usize;
                s_left += (2 * left[c] + 1) as u128;
                s_right -= (2 * right[c] - 1) as u128;
                left[c] += 1;
                right[c] -= 1;
                let rank = (keys[i] >> 8) as u32;
                let next = (keys[i + 1] >> 8) as u32;
                if rank == next {
                    continue;
                }
                let n_l = (i + 1) as u128;
                let n_r = (n - i - 1) as u128;
                let num = s_left * n_r + s_right * n_l;
                let den = n_l * n_r;
                let better = match &best {
                    None => true,
                    Some(b) => num * b.den > b.num * den,
                };
                if better {
                    best = Some(Best { feature: f, rank_lo: rank, rank_hi: next, num, den });
                }
            }
        }

        let parent_s: u128 = hist.iter().map(|&c| (c as u128) * (c as u128)).sum();
        let Some(b) = best.filter(|b| b.num * n as u128 > parent_s * b.den) else {
            nodes.push(TreeNode::leaf(hist));
            continue;
        };
        let lo = data.values[b.feature][b.rank_lo as usize];
        let hi = data.values[b.feature][b.rank_hi as usize];
        let mut threshold = lo + (hi - lo) / 2.0;
        if !(threshold >= lo && threshold < hi) {
            threshold = lo;
        }
        let ranks = &data.ranks[b.feature];
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.into_iter().partition(|&r| ranks[r as usize] <= b.rank_lo);
        nodes.push(TreeNode::Split { feature: b.feature, threshold, right: usize::MAX });
        stack.push(Task { rows: right_rows, patch_parent: Some(id) });
        stack.push(Task { rows: left_rows, patch_parent: None });
    }
    Ok(Tree { seed, nodes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::LandUseClass;

    fn dataset(x: Vec<Vec<f64>>, y: Vec<usize>) -> Dataset {
        Dataset::new(x, y, vec![LandUseClass::Residential, LandUseClass::Commercial]).unwrap()
    }

    #[test]
    fn separable_data_gives_one_split() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<usize> = (0..20).map(|i| usize::from(i >= 10)).collect();
        let ds = dataset(x.clone(), y.clone());
        let rd = RankedData::new(&ds);
        let rows: Vec<u32> = (0..20).collect();
        let tree = grow(&rd, rows, &TreeParams { mtry: 1, min_leaf: 5 }, 42).unwrap();
        assert_eq!(tree.depth(), 1);
        assert!(matches!(tree.nodes[0], TreeNode::Split { threshold, .. } if threshold == 9.5));
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(tree.vote(xi), *yi);
        }
    }

    #[test]
    fn single_class_is_one_leaf() {
        let ds = dataset((0..10).map(|i| vec![i as f64]).collect(), vec![1; 10]);
        let rd = RankedData::new(&ds);
        let rows: Vec<u32> = (0..10).collect();
        let tree = train_tree(&rd, &rows, &TreeParams { mtry: 1, min_leaf: 1 }, 7).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.vote(&[3.0]), 1);
    }

    #[test]
    fn small_nodes_become_leaves() {
        let ds = dataset((0..4).map(|i| vec![i as f64]).collect(), vec![0, 1, 0, 1]);
        let rd = RankedData::new(&ds);
        let tree = grow(&rd, vec![0, 1, 2, 3], &TreeParams { mtry: 1, min_leaf: 5 }, 1).unwrap();
        assert_eq!(tree.nodes, vec![TreeNode::leaf(vec![2, 2])]);
    }

    #[test]
    fn no_gain_means_leaf() {
        // Identical feature values: no admissible threshold.
        let ds = dataset(vec![vec![1.0]; 8], vec![0, 1, 0, 1, 0, 1, 0, 1]);
        let rd = RankedData::new(&ds);
        let tree = grow(&rd, (0..8).collect(), &TreeParams { mtry: 1, min_leaf: 2 }, 1).unwrap();
        assert_eq!(tree.nodes.len(), 1);
        assert_eq!(tree.vote(&[1.0]), 0);
    }

    #[test]
    fn empty_rows_rejected() {
        let ds = dataset(vec![vec![1.0], vec![2.0]], vec![0, 1]);
        let rd = RankedData::new(&ds);
        assert!(matches!(train_tree(&rd, &[], &TreeParams { mtry: 1, min_leaf: 1 }, 1), Err(Error::Argument(_))));
        assert!(matches!(train_tree(&rd, &[0, 1], &TreeParams { mtry: 2, min_leaf: 1 }, 1), Err(Error::Config(_))));
    }

    #[test]
    fn bootstrap_draws_input_rows_only() {
        let rows: Vec<u32> = vec![3, 9, 11, 40, 41];
        let s = bootstrap_sample(&rows, 99);
        assert_eq!(s.len(), rows.len());
        assert!(s.iter().all(|r| rows.contains(r)));
        assert_eq!(s, bootstrap_sample(&rows, 99));
    }

    #[test]
    fn preorder_links_round_trip() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i * 37 % 60) as f64, (i % 7) as f64]).collect();
        let y: Vec<usize> = (0..60).map(|i| usize::from((i * 37 % 60) % 3 == 0)).collect();
        let ds = dataset(x, y);
        let rd = RankedData::new(&ds);
        let tree = train_tree(&rd, &(0..60).collect::<Vec<_>>(), &TreeParams { mtry: 2, min_leaf: 2 }, 5).unwrap();
        assert!(tree.nodes.len() > 3);
        let stripped = tree
            .nodes
            .iter()
            .map(|n| match n {
                TreeNode::Split { feature, threshold, .. } => TreeNode::Split { feature: *feature, threshold: *threshold, right: 0 },
                leaf => leaf.clone(),
            })
            .collect();
        assert_eq!(Tree::from_preorder(tree.seed, stripped).unwrap(), tree);
        assert!(Tree::from_preorder(1, vec![TreeNode::Split { feature: 0, threshold: 0.0, right: 0 }]).is_err());
    }
}
