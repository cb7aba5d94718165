//! Binary sum tree over dynamic non-negative weights.
//!
//! Leaves live in slots allocated in insertion order; removed slots go on a
//! LIFO free list and are reused by the next insertion, so the leaf order is
//! a deterministic function of the operation sequence. Every internal node
//! is recomputed as the floating-point sum of its two children on each
//! mutation, so the child-sum invariant holds exactly, not just up to drift.

use crate::error::{Error, Result};

/// Stable reference to a leaf. The generation detects reuse of a slot after
/// the original leaf was removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle {
    slot: u32,
    generation: u32,
}

impl Handle {
    pub fn slot(&self) -> usize {
        self.slot as usize
    }
}

#[derive(Clone, Debug)]
pub struct WeightedIndexTree {
    // nodes[1] is the root, leaves occupy nodes[capacity..2 * capacity].
    nodes: Vec<f64>,
    capacity: usize,
    generations: Vec<u32>,
    live: Vec<bool>,
    free: Vec<u32>,
    live_count: usize,
    last_visits: usize,
}

impl Default for WeightedIndexTree {
    fn default() -> Self {
        Self::new()
    }
}

impl WeightedIndexTree {
    pub fn new() -> Self {
        Self::with_capacity(1)
    }

    pub fn with_capacity(capacity: usize) -> Self {
        let capacity = capacity.max(1).next_power_of_two();
        WeightedIndexTree {
            nodes: vec![0.0; 2 * capacity],
            capacity,
            generations: Vec::new(),
            live: Vec::new(),
            free: Vec::new(),
            live_count: 0,
            last_visits: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.live_count
    }

    pub fn is_empty(&self) -> bool {
        self.live_count == 0
    }

    /// Number of slots ever allocated, live or free.
    pub fn slots(&self) -> usize {
        self.generations.len()
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Nodes written by the most recent mutation.
    pub fn last_op_visits(&self) -> usize {
        self.last_visits
    }

    pub fn insert(&mut self, weight: f64) -> Result<Handle> {
        check_weight(weight)?;
        let slot = match self.free.pop() {
            Some(slot) => slot as usize,
            None => {
                let slot = self.generations.len();
                if slot == self.capacity {
                    self.grow();
                }
                self.generations.push(0);
                self.live.push(false);
                slot
            }
        };
        self.live[slot] = true;
        self.live_count += 1;
        self.set_leaf(slot, weight);
        Ok(Handle {
            slot: slot as u32,
            generation: self.generations[slot],
        })
    }

    pub fn remove(&mut self, handle: Handle) -> Result<f64> {
        let slot = self.check(handle)?;
        let old = self.nodes[self.capacity + slot];
        self.set_leaf(slot, 0.0);
        self.live[slot] = false;
        self.generations[slot] = self.generations[slot].wrapping_add(1);
        self.free.push(slot as u32);
        self.live_count -= 1;
        Ok(old)
    }

    pub fn update(&mut self, handle: Handle, weight: f64) -> Result<()> {
        check_weight(weight)?;
        let slot = self.check(handle)?;
        self.set_leaf(slot, weight);
        Ok(())
    }

    pub fn weight(&self, handle: Handle) -> Result<f64> {
        let slot = self.check(handle)?;
        Ok(self.nodes[self.capacity + slot])
    }

    pub fn contains(&self, handle: Handle) -> bool {
        self.check(handle).is_ok()
    }

    /// Live handles in leaf order.
    pub fn handles(&self) -> impl Iterator<Item = Handle> + '_ {
        self.live
            .iter()
            .enumerate()
            .filter(|(_, &live)| live)
            .map(|(slot, _)| Handle {
                slot: slot as u32,
                generation: self.generations[slot],
            })
    }

    /// Inverse-CDF lookup: the leaf whose weight interval contains
    /// `u · total()`, for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> Result<Handle> {
        let total = self.total();
        if self.live_count == 0 || total <= 0.0 {
            return Err(Error::NoMass);
        }
        let mut target = u * total;
        let mut k = 1;
        while k < self.capacity {
            let (left, right) = (2 * k, 2 * k + 1);
            if target < self.nodes[left] || self.nodes[right] <= 0.0 {
                k = left;
            } else {
                target -= self.nodes[left];
                k = right;
            }
        }
        let slot = k - self.capacity;
        debug_assert!(self.live[slot] && self.nodes[k] > 0.0);
        Ok(Handle {
            slot: slot as u32,
            generation: self.generations[slot],
        })
    }

    /// Recompute every internal node from the leaves.
    pub fn rebuild(&mut self) {
        for k in (1..self.capacity).rev() {
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
        self.last_visits = self.capacity;
    }

    /// Exact child-sum check over every internal node.
    pub fn is_consistent(&self) -> bool {
        (1..self.capacity).all(|k| self.nodes[k] == self.nodes[2 * k] + self.nodes[2 * k + 1])
    }

    fn check(&self, handle: Handle) -> Result<usize> {
        let slot = handle.slot as usize;
        if slot < self.generations.len()
            && self.live[slot]
            && self.generations[slot] == handle.generation
        {
            Ok(slot)
        } else {
            Err(Error::StaleHandle)
        }
    }

    fn set_leaf(&mut self, slot: usize, weight: f64) {
        let mut k = self.capacity + slot;
        self.nodes[k] = weight;
        let mut visits = 1;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
            visits += 1;
        }
        self.last_visits = visits;
    }

    fn grow(&mut self) {
        let old = self.capacity;
        let capacity = old * 2;
        let mut nodes = vec![0.0; 2 * capacity];
        nodes[capacity..capacity + old].copy_from_slice(&self.nodes[old..2 * old]);
        self.nodes = nodes;
        self.capacity = capacity;
        self.rebuild();
    }
}

fn check_weight(weight: f64) -> Result<()> {
    if weight.is_finite() && weight >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidWeight(weight))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Linear-scan reference with the same slot allocation rule.
    #[derive(Default)]
    struct ArrayOracle {
        weights: Vec<Option<f64>>,
        free: Vec<usize>,
    }

    impl ArrayOracle {
        fn insert(&mut self, w: f64) -> usize {
            match self.free.pop() {
                Some(s) => {
                    self.weights[s] = Some(w);
                    s
                }
                None => {
                    self.weights.push(Some(w));
                    self.weights.len() - 1
                }
            }
        }
        fn remove(&mut self, s: usize) {
            self.weights[s] = None;
            self.free.push(s);
        }
        fn total(&self) -> f64 {
            self.weights.iter().flatten().sum()
        }
        fn sample(&self, u: f64) -> Option<usize> {
            let target = u * self.total();
            let mut acc = 0.0;
            for (s, w) in self.weights.iter().enumerate() {
                if let Some(w) = *w {
                    if w > 0.0 && target < acc + w {
                        return Some(s);
                    }
                    acc += w;
                }
            }
            None
        }
    }

    #[test]
    fn basic_totals_and_sampling() {
        let mut t = WeightedIndexTree::new();
        let a = t.insert(1.0).unwrap();
        let b = t.insert(2.0).unwrap();
        let c = t.insert(3.0).unwrap();
        assert_eq!(t.total(), 6.0);
        assert_eq!(t.sample(0.5).unwrap(), c);
        assert_eq!(t.sample(0.0).unwrap(), a);
        assert_eq!(t.sample(0.2).unwrap(), b);
        t.remove(b).unwrap();
        assert_eq!(t.total(), 4.0);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn zero_weight_leaf_never_sampled() {
        let mut t = WeightedIndexTree::new();
        let z = t.insert(0.0).unwrap();
        assert_eq!(t.total(), 0.0);
        assert!(matches!(t.sample(0.3), Err(Error::NoMass)));
        let one = t.insert(1.0).unwrap();
        let z2 = t.insert(0.0).unwrap();
        assert!(t.contains(z));
        for i in 0..1000 {
            let h = t.sample(i as f64 / 1000.0).unwrap();
            assert_eq!(h, one);
            assert_ne!(h, z2);
        }
    }

    #[test]
    fn single_leaf_update_to_zero() {
        let mut t = WeightedIndexTree::new();
        let h = t.insert(5.0).unwrap();
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(t.sample(u).unwrap(), h);
        }
        t.update(h, 0.0).unwrap();
        assert_eq!(t.total(), 0.0);
        assert!(matches!(t.sample(0.5), Err(Error::NoMass)));
    }

    #[test]
    fn rejects_bad_weights_and_stale_handles() {
        let mut t = WeightedIndexTree::new();
        assert!(matches!(t.insert(-1.0), Err(Error::InvalidWeight(_))));
        assert!(t.insert(f64::NAN).is_err());
        assert!(t.insert(f64::INFINITY).is_err());
        let h = t.insert(1.0).unwrap();
        t.remove(h).unwrap();
        assert!(matches!(t.remove(h), Err(Error::StaleHandle)));
        assert!(matches!(t.update(h, 2.0), Err(Error::StaleHandle)));
        // The slot is reused, but the old handle stays stale.
        let h2 = t.insert(4.0).unwrap();
        assert_eq!(h2.slot(), h.slot());
        assert!(t.weight(h).is_err());
        assert_eq!(t.weight(h2).unwrap(), 4.0);
    }

    #[test]
    fn many_inserts_match_compensated_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut t = WeightedIndexTree::new();
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for _ in 0..100_000 {
            let w: f64 = rng.random::<f64>() * 10.0;
            t.insert(w).unwrap();
            // Kahan summation
            let y = w - comp;
            let s = sum + y;
            comp = (s - sum) - y;
            sum = s;
        }
        assert!(((t.total() - sum) / sum).abs() < 1e-9);
        assert!(t.is_consistent());
    }

    #[test]
    fn chi_square_frequencies() {
        let mut t = WeightedIndexTree::new();
        let hs: Vec<_> = [1.0, 2.0, 3.0].iter().map(|&w| t.insert(w).unwrap()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mut counts = [0u64; 3];
        for _ in 0..n {
            let h = t.sample(rng.random::<f64>()).unwrap();
            counts[hs.iter().position(|&x| x == h).unwrap()] += 1;
        }
        let expected = [n as f64 / 6.0, n as f64 / 3.0, n as f64 / 2.0];
        let chi2: f64 = counts
            .iter()
            .zip(expected)
            .map(|(&c, e)| (c as f64 - e).powi(2) / e)
            .sum();
        // 99.9% quantile of chi-square with 2 degrees of freedom.
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }

    #[test]
    fn interleaved_operations_match_array_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = WeightedIndexTree::new();
        let mut oracle = ArrayOracle::default();
        let mut live: Vec<(Handle, usize)> = Vec::new();
        for step in 0..10_000 {
            let op = rng.random_range(0..10);
            // Integer weights keep both summation orders exact.
            let w = rng.random_range(0..20) as f64;
            if op < 5 || live.is_empty() {
                let h = t.insert(w).unwrap();
                let s = oracle.insert(w);
                assert_eq!(h.slot(), s);
                live.push((h, s));
            } else if op < 8 {
                let i = rng.random_range(0..live.len());
                let (h, s) = live.swap_remove(i);
                t.remove(h).unwrap();
                oracle.remove(s);
            } else {
                let (h, s) = live[rng.random_range(0..live.len())];
                t.update(h, w).unwrap();
                oracle.weights[s] = Some(w);
            }
            assert_eq!(t.total(), oracle.total(), "step {step}");
            let u: f64 = rng.random();
            match (t.sample(u), oracle.sample(u)) {
                (Ok(h), Some(s)) => assert_eq!(h.slot(), s, "step {step}"),
                (Err(Error::NoMass), None) => {}
                (a, b) => panic!("step {step}: tree {a:?} vs oracle {b:?}"),
            }
        }
        assert!(t.is_consistent());
    }

    #[test]
    fn mutations_touch_logarithmic_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = WeightedIndexTree::new();
        let mut live = Vec::new();
        for _ in 0..5000 {
            let slots_before = t.slots();
            let h = t.insert(rng.random()).unwrap();
            live.push(h);
            let n = t.slots();
            let bound = 2 * (n as f64).log2().ceil() as usize + 2;
            // Growth rebuilds are amortised; every other insertion is a path update.
            if slots_before == 0 || !(slots_before).is_power_of_two() {
                assert!(t.last_op_visits() <= bound, "{} > {bound}", t.last_op_visits());
            }
        }
        let n = t.slots();
        let bound = 2 * (n as f64).log2().ceil() as usize + 2;
        for _ in 0..2000 {
            let i = rng.random_range(0..live.len());
            t.update(live[i], rng.random()).unwrap();
            assert!(t.last_op_visits() <= bound);
            let h = live.swap_remove(i);
            t.remove(h).unwrap();
            assert!(t.last_op_visits() <= bound);
        }
    }

    #[test]
    fn rebuild_restores_child_sums() {
        let mut t = WeightedIndexTree::new();
        let hs: Vec<_> = (0..37).map(|i| t.insert(0.1 * i as f64).unwrap()).collect();
        for h in hs.iter().step_by(3) {
            t.remove(*h).unwrap();
        }
        let before = t.total();
        t.rebuild();
        assert!(t.is_consistent());
        assert_eq!(t.total(), before);
    }

    proptest! {
        #[test]
        fn sample_lands_in_weight_interval(weights in proptest::collection::vec(0u32..50, 1..64), u in 0.0f64..1.0) {
            let mut t = WeightedIndexTree::new();
            let hs: Vec<_> = weights.iter().map(|&w| t.insert(w as f64).unwrap()).collect();
            let total: f64 = weights.iter().map(|&w| w as f64).sum();
            prop_assume!(total > 0.0);
            let h = t.sample(u).unwrap();
            let i = hs.iter().position(|&x| x == h).unwrap();
            let before: f64 = weights[..i].iter().map(|&w| w as f64).sum();
            let target = u * total;
            prop_assert!(before <= target && target < before + weights[i] as f64);
        }
    }
}
