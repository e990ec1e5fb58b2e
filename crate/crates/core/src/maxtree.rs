//! Per-sample max-trees for threshold reporting.
//!
//! Tree `i` keeps one leaf per neuron holding the current score `w_rᵀx_i`;
//! every internal node stores the maximum of its two children. Reporting all
//! leaves above a threshold only descends into subtrees whose maximum exceeds
//! it, so a query touches O(|result|·log m) nodes.

use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

/// Complete binary max-tree in heap layout.
///
/// `nodes[1]` is the root, the children of `v` are `2v` and `2v+1`, and leaf
/// `r` lives at `m_pad + r`. Leaves past `m` hold `-inf` and are never
/// reported since `-inf > tau` is false for every finite `tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTree {
    m: usize,
    m_pad: usize,
    nodes: Vec<f64>,
}

impl ThresholdTree {
    /// # Panics
    /// If `scores` is empty.
    pub fn build(scores: &[f64]) -> Self {
        let m = scores.len();
        assert!(m >= 1, "a tree needs at least one leaf");
        let m_pad = m.next_power_of_two();
        let mut nodes = vec![f64::NEG_INFINITY; 2 * m_pad];
        nodes[m_pad..m_pad + m].copy_from_slice(scores);
        for v in (1..m_pad).rev() {
            nodes[v] = nodes[2 * v].max(nodes[2 * v + 1]);
        }
        Self { m, m_pad, nodes }
    }

    /// Number of real (unpadded) leaves.
    #[inline]
    pub fn leaves(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn padded_leaves(&self) -> usize {
        self.m_pad
    }

    /// Total node count, `2·m_pad − 1`.
    pub fn node_count(&self) -> usize {
        2 * self.m_pad - 1
    }

    /// Tree depth, `⌈log₂ m_pad⌉`.
    pub fn depth(&self) -> usize {
        self.m_pad.trailing_zeros() as usize
    }

    #[inline]
    pub fn root(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn leaf(&self, r: usize) -> f64 {
        debug_assert!(r < self.m);
        self.nodes[self.m_pad + r]
    }

    /// Adds `delta` to leaf `r` and recomputes every ancestor from its two
    /// children, so decreases are propagated correctly.
    #[inline]
    pub fn add_to_leaf(&mut self, r: usize, delta: f64) {
        debug_assert!(r < self.m);
        let mut v = self.m_pad + r;
        self.nodes[v] += delta;
        v >>= 1;
        while v >= 1 {
            self.nodes[v] = self.nodes[2 * v].max(self.nodes[2 * v + 1]);
            v >>= 1;
        }
    }

    pub fn query(&self, tau: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.query_into(tau, &mut out);
        out
    }

    /// Appends every leaf with value strictly above `tau` to `out`, in
    /// ascending order. Returns the number of node values read.
    pub fn query_into(&self, tau: f64, out: &mut Vec<usize>) -> usize {
        let mut reads = 1;
        // Also rejects a NaN threshold.
        if self.nodes[1].partial_cmp(&tau) != Some(std::cmp::Ordering::Greater) {
            return reads;
        }
        // Explicit stack, right child pushed first so leaves come out in order.
        let mut stack = Vec::with_capacity(2 * self.depth() + 2);
        stack.push(1usize);
        while let Some(v) = stack.pop() {
            if v >= self.m_pad {
                out.push(v - self.m_pad);
                continue;
            }
            let (l, r) = (2 * v, 2 * v + 1);
            reads += 2;
            if self.nodes[r] > tau {
                stack.push(r);
            }
            if self.nodes[l] > tau {
                stack.push(l);
            }
        }
        reads
    }

    /// Checks the max-heap invariant and the padding sentinels. On failure
    /// returns the heap index of the first bad node.
    pub fn check_invariants(&self) -> std::result::Result<(), usize> {
        for v in 1..self.m_pad {
            if self.nodes[v] != self.nodes[2 * v].max(self.nodes[2 * v + 1]) {
                return Err(v);
            }
        }
        for v in self.m_pad + self.m..2 * self.m_pad {
            if self.nodes[v] != f64::NEG_INFINITY {
                return Err(v);
            }
        }
        Ok(())
    }

    /// Overwrites a raw node. Only for exercising invariant checks.
    #[doc(hidden)]
    pub fn corrupt_node(&mut self, heap_index: usize, value: f64) {
        self.nodes[heap_index] = value;
    }
}

/// One [`ThresholdTree`] per sample, all with the same leaf count.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeBank {
    m: usize,
    trees: Vec<ThresholdTree>,
}

impl TreeBank {
    /// `scores` is n×m with `scores[i, r] = w_rᵀx_i`.
    pub fn build(scores: &RealMatrix) -> Self {
        let (n, m) = (scores.rows(), scores.cols());
        let mut row = vec![0.0; m];
        let trees = (0..n)
            .map(|i| {
                for (r, v) in row.iter_mut().enumerate() {
                    *v = scores.get(i, r);
                }
                ThresholdTree::build(&row)
            })
            .collect();
        Self { m, trees }
    }

    pub fn from_trees(trees: Vec<ThresholdTree>) -> Result<Self> {
        let m = trees
            .first()
            .map(ThresholdTree::leaves)
            .ok_or_else(|| Error::InvalidInput("tree bank needs at least one tree".into()))?;
        if let Some(t) = trees.iter().find(|t| t.leaves() != m) {
            return Err(Error::DimensionMismatch {
                what: "tree leaf count",
                expected: m,
                got: t.leaves(),
            });
        }
        Ok(Self { m, trees })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.trees.len()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tree(&self, i: usize) -> Result<&ThresholdTree> {
        Error::check_index("sample", i, self.trees.len())?;
        Ok(&self.trees[i])
    }

    pub fn trees(&self) -> &[ThresholdTree] {
        &self.trees
    }

    pub fn trees_mut(&mut self) -> &mut [ThresholdTree] {
        &mut self.trees
    }

    pub fn leaf_value(&self, i: usize, r: usize) -> Result<f64> {
        Error::check_index("sample", i, self.trees.len())?;
        Error::check_index("neuron", r, self.m)?;
        Ok(self.trees[i].leaf(r))
    }

    pub fn update_leaf_delta(&mut self, i: usize, r: usize, delta: f64) -> Result<()> {
        Error::check_index("sample", i, self.trees.len())?;
        Error::check_index("neuron", r, self.m)?;
        if !delta.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite delta {delta}")));
        }
        self.trees[i].add_to_leaf(r, delta);
        Ok(())
    }

    /// Neurons `r` with `leaf_value(i, r) > tau`, ascending.
    pub fn query(&self, i: usize, tau: f64) -> Result<Vec<usize>> {
        Error::check_index("sample", i, self.trees.len())?;
        Ok(self.trees[i].query(tau))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scan(leaves: &[f64], tau: f64) -> Vec<usize> {
        (0..leaves.len()).filter(|&r| leaves[r] > tau).collect()
    }

    #[test]
    fn root_is_max_of_leaves() {
        let t = ThresholdTree::build(&[1.0, 5.0, 2.0, 0.0]);
        assert_eq!(t.root(), 5.0);
        assert_eq!(t.node_count(), 7);
    }

    #[test]
    fn single_leaf_tree() {
        let t = ThresholdTree::build(&[-3.0]);
        assert_eq!(t.root(), -3.0);
        assert_eq!(t.query(-4.0), vec![0]);
        assert!(t.query(-3.0).is_empty());
        // m = 3 pads to 4; the padding leaf is never reported
        let t = ThresholdTree::build(&[1.0, 2.0, 3.0]);
        assert_eq!(t.padded_leaves(), 4);
        assert_eq!(t.query(f64::MIN), vec![0, 1, 2]);
        t.check_invariants().unwrap();
    }

    #[test]
    fn query_examples() {
        let t = ThresholdTree::build(&[0.5, 2.0, 1.5, -1.0]);
        // leaves 2 and 3 in 1-based numbering
        assert_eq!(t.query(1.0), vec![1, 2]);
        assert!(t.query(3.0).is_empty());
        assert!(t.query(2.0).is_empty());
    }

    #[test]
    fn decrease_propagates_to_root() {
        let mut t = ThresholdTree::build(&[1.0, 5.0, 2.0, 0.0]);
        t.add_to_leaf(1, -4.0);
        assert_eq!(t, ThresholdTree::build(&[1.0, 1.0, 2.0, 0.0]));
        assert_eq!(t.root(), 2.0);

        let mut t = ThresholdTree::build(&[1.0, 5.0, 2.0, 0.0]);
        t.add_to_leaf(3, 10.0);
        assert_eq!(t.root(), 10.0);

        let mut t = ThresholdTree::build(&[1.0, 5.0, 2.0, 0.0]);
        let before = t.clone();
        t.add_to_leaf(2, 0.0);
        assert_eq!(t, before);
    }

    #[test]
    fn bank_accessors() {
        let mut scores = RealMatrix::zeros(3, 4);
        scores.set(1, 2, 7.5);
        let mut bank = TreeBank::build(&scores);
        assert_eq!(bank.leaf_value(1, 2).unwrap(), 7.5);
        bank.update_leaf_delta(1, 2, -1.5).unwrap();
        assert_eq!(bank.leaf_value(1, 2).unwrap(), 6.0);
        assert!(bank.leaf_value(1, 4).is_err());
        assert!(bank.leaf_value(3, 0).is_err());
        assert!(bank.query(3, 0.0).is_err());
        assert!(bank.update_leaf_delta(0, 0, f64::NAN).is_err());
        assert_eq!(bank.query(1, 1.0).unwrap(), vec![2]);
    }

    #[test]
    fn corrupted_node_is_detected() {
        let mut t = ThresholdTree::build(&[1.0, 2.0, 3.0, 4.0]);
        t.corrupt_node(2, 100.0);
        assert_eq!(t.check_invariants(), Err(1));
    }

    proptest! {
        #[test]
        fn random_updates_keep_heap_and_match_scan(
            init in prop::collection::vec(-5.0f64..5.0, 1..80),
            ops in prop::collection::vec((0usize..1000, -5.0f64..5.0, any::<bool>()), 0..60),
        ) {
            let mut shadow = init.clone();
            let mut tree = ThresholdTree::build(&init);
            for (slot, delta, tau_from_leaf) in ops {
                let r = slot % shadow.len();
                shadow[r] += delta;
                tree.add_to_leaf(r, delta);
                prop_assert!(tree.check_invariants().is_ok());
                let tau = if tau_from_leaf { shadow[(slot / 7) % shadow.len()] } else { delta };
                let mut got = Vec::new();
                let reads = tree.query_into(tau, &mut got);
                prop_assert_eq!(&got, &scan(&shadow, tau));
                let bound = 2 * (got.len() + 1) * (tree.depth() + 1);
                prop_assert!(reads <= bound, "reads {} > bound {}", reads, bound);
            }
        }
    }
}
