use rand::Rng;

/// Binary sum tree over non-negative leaf weights.
///
/// Parents are recomputed from their children on every update, so the root
/// never drifts from the sum of the leaves by more than rounding in one pass.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    base: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(leaves: usize) -> Self {
        let base = leaves.max(1).next_power_of_two();
        Self {
            leaves,
            base,
            nodes: vec![0.0; 2 * base],
        }
    }

    pub fn len(&self) -> usize {
        self.leaves
    }

    pub fn is_empty(&self) -> bool {
        self.leaves == 0
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.nodes[self.base + leaf]
    }

    pub fn set(&mut self, leaf: usize, weight: f64) {
        assert!(leaf < self.leaves, "leaf {leaf} out of range");
        debug_assert!(weight >= 0.0 && weight.is_finite());
        let mut i = self.base + leaf;
        self.nodes[i] = weight;
        while i > 1 {
            i /= 2;
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
        }
    }

    /// Leaf whose cumulative-weight interval contains `mass ∈ [0, total)`.
    pub fn find(&self, mut mass: f64) -> usize {
        let mut i = 1;
        while i < self.base {
            let left = 2 * i;
            let lw = self.nodes[left];
            if mass < lw || self.nodes[left + 1] <= 0.0 {
                i = left;
            } else {
                mass -= lw;
                i = left + 1;
            }
        }
        // Rounding can only push us onto a zero-weight leaf to the right of the
        // last positive one; walk back to it.
        let mut leaf = i - self.base;
        while leaf > 0 && (leaf >= self.leaves || self.get(leaf) <= 0.0) {
            leaf -= 1;
        }
        leaf
    }

    /// Draws one leaf with probability proportional to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        self.find(u * self.total())
    }

    /// Sum of the leaves, recomputed from scratch.
    pub fn leaf_sum(&self) -> f64 {
        self.nodes[self.base..self.base + self.leaves].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn find_walks_cumulative_intervals() {
        let mut t = SumTree::new(5);
        for (i, w) in [1.0, 0.0, 2.0, 3.0, 0.5].into_iter().enumerate() {
            t.set(i, w);
        }
        assert_eq!(t.total(), 6.5);
        assert_eq!(t.find(0.0), 0);
        assert_eq!(t.find(0.999), 0);
        assert_eq!(t.find(1.0), 2);
        assert_eq!(t.find(2.999), 2);
        assert_eq!(t.find(3.0), 3);
        assert_eq!(t.find(6.2), 4);
        assert_eq!(t.find(6.5), 4);
    }

    proptest! {
        #[test]
        fn root_tracks_leaves(updates in prop::collection::vec((0usize..37, 0f64..1e3), 1..200)) {
            let mut t = SumTree::new(37);
            for (i, w) in updates {
                t.set(i, w);
            }
            let s = t.leaf_sum();
            prop_assert!((t.total() - s).abs() <= 1e-6 * s.max(1e-12));
        }
    }
}
