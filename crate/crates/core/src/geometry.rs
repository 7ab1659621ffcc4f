//! Unit torus metric and the block partition used by sampling and recovery.
//!
//! Positions live on the one-dimensional torus `(-1/2, 1/2]`. The recovery
//! pipeline works on blocks of width `kappa * ln(n) / n`, indexed from 0 in
//! increasing order of the coordinate shifted into `[0, 1)`. Block 0 therefore
//! starts at the origin. When `1 / width` is not an integer the last block is
//! narrower than the others.

use serde::{Deserialize, Serialize};

use crate::error::GkbmError;

/// Slack used when comparing distances against the interaction radius.
pub(crate) const RADIUS_SLACK: f64 = 1e-12;

/// A point of the torus `(-1/2, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(into = "f64", from = "f64")]
pub struct TorusPoint(f64);

impl TorusPoint {
    /// Wraps an arbitrary real coordinate onto the torus.
    pub fn new(coordinate: f64) -> Self {
        let mut y = coordinate - coordinate.round_ties_even();
        if y <= -0.5 {
            y += 1.0;
        }
        // -0.0 and 0.0 compare equal but serialize differently
        if y == 0.0 {
            y = 0.0;
        }
        TorusPoint(y)
    }

    pub fn coordinate(self) -> f64 {
        self.0
    }

    /// The coordinate remapped into `[0, 1)`.
    pub fn shifted(self) -> f64 {
        let s = if self.0 < 0.0 { self.0 + 1.0 } else { self.0 };
        if s >= 1.0 {
            0.0
        } else {
            s
        }
    }

    /// Builds a point from a coordinate in `[0, 1)`.
    pub fn from_shifted(s: f64) -> Self {
        TorusPoint::new(s)
    }

    pub fn offset(self, delta: f64) -> Self {
        TorusPoint::new(self.0 + delta)
    }
}

impl From<f64> for TorusPoint {
    fn from(x: f64) -> Self {
        TorusPoint::new(x)
    }
}

impl From<TorusPoint> for f64 {
    fn from(p: TorusPoint) -> f64 {
        p.0
    }
}

/// `min(|x - y|, 1 - |x - y|)`.
pub fn torus_distance(x: TorusPoint, y: TorusPoint) -> f64 {
    let d = (x.0 - y.0).abs();
    d.min(1.0 - d)
}

/// The division of the torus into blocks of width `kappa * ln(n) / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPartition {
    n: u64,
    kappa: f64,
    block_width: f64,
    block_count: usize,
    /// For every block, the blocks (itself included) that can hold a point
    /// within `block_width` of one of its points. Sorted, deduplicated.
    reach: Vec<Vec<usize>>,
}

impl BlockPartition {
    pub fn new(n: u64, kappa: f64) -> Result<Self, GkbmError> {
        if n < 3 {
            return Err(GkbmError::invalid(format!("n must be at least 3, got {n}")));
        }
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(GkbmError::invalid(format!(
                "kappa must be positive and finite, got {kappa}"
            )));
        }
        let nf = n as f64;
        let block_width = kappa * nf.ln() / nf;
        if block_width >= 0.5 {
            return Err(GkbmError::invalid(format!(
                "block width kappa*ln(n)/n = {block_width} must be below 1/2 (n = {n}, kappa = {kappa})"
            )));
        }
        let ratio = nf / (kappa * nf.ln());
        let mut block_count = ratio.ceil() as usize;
        // guard the integral case against ratio landing one ulp above an integer
        if (ratio - ratio.round()).abs() <= 1e-12 * ratio {
            block_count = ratio.round() as usize;
        }
        let mut partition = BlockPartition {
            n,
            kappa,
            block_width,
            block_count,
            reach: Vec::new(),
        };
        partition.reach = (0..block_count).map(|i| partition.compute_reach(i)).collect();
        Ok(partition)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn block_width(&self) -> f64 {
        self.block_width
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    /// `[start, end)` of block `i` in shifted coordinates.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let start = i as f64 * self.block_width;
        let end = if i + 1 == self.block_count {
            1.0
        } else {
            ((i + 1) as f64 * self.block_width).min(1.0)
        };
        (start, end)
    }

    pub fn width_of(&self, i: usize) -> f64 {
        let (a, b) = self.bounds(i);
        b - a
    }

    pub fn block_of(&self, x: TorusPoint) -> usize {
        let idx = (x.shifted() / self.block_width).floor() as usize;
        idx.min(self.block_count - 1)
    }

    /// Number of blocks between `i` and `j` going the short way round.
    pub fn cyclic_gap(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        d.min(self.block_count - d)
    }

    /// Blocks that may contain points within `block_width` of block `i`.
    pub fn reachable(&self, i: usize) -> &[usize] {
        &self.reach[i]
    }

    /// Unordered block pairs `(i, j)` with `i <= j` that can hold linked nodes.
    pub fn candidate_block_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.block_count {
            for &j in &self.reach[i] {
                if i <= j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Smallest distance between any point of block `i` and any of block `j`.
    pub fn block_separation(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (ai, bi) = self.bounds(i);
        let (aj, bj) = self.bounds(j);
        let forward = (aj - bi).rem_euclid(1.0);
        let backward = (ai - bj).rem_euclid(1.0);
        forward.min(backward)
    }

    fn compute_reach(&self, i: usize) -> Vec<usize> {
        let b = self.block_count;
        let mut out = vec![i];
        // the narrow last block can put a block two steps away within range
        for step in 1..=2usize.min(b - 1) {
            for j in [(i + step) % b, (i + b - step) % b] {
                if self.block_separation(i, j) < self.block_width * (1.0 - RADIUS_SLACK) {
                    out.push(j);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(x: f64) -> TorusPoint {
        TorusPoint::new(x)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(torus_distance(p(0.0), p(0.0)), 0.0);
        assert!((torus_distance(p(-0.45), p(0.45)) - 0.10).abs() < 1e-12);
        assert!((torus_distance(p(0.1), p(0.3)) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn normalization_maps_into_half_open_interval() {
        assert_eq!(p(-0.5).coordinate(), 0.5);
        assert_eq!(p(0.5).coordinate(), 0.5);
        assert!((p(0.75).coordinate() + 0.25).abs() < 1e-15);
        assert!((p(-1.25).coordinate() + 0.25).abs() < 1e-15);
        assert_eq!(p(-0.0).coordinate().to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn partition_examples() {
        let part = BlockPartition::new(55, 1.0).unwrap();
        assert!((part.block_width() - 55f64.ln() / 55.0).abs() < 1e-15);
        assert_eq!(part.block_count(), 14);
        let part = BlockPartition::new(1000, 2.0).unwrap();
        assert_eq!(part.block_count(), 73);
    }

    #[test]
    fn partition_rejects_wide_blocks() {
        assert!(BlockPartition::new(2, 1.0).is_err());
        assert!(BlockPartition::new(10, 3.0).is_err());
        assert!(BlockPartition::new(100, 0.0).is_err());
    }

    #[test]
    fn integral_block_count_has_full_last_block() {
        // choose kappa so that n / (kappa ln n) = 20 exactly
        let n = 1000u64;
        let kappa = n as f64 / (20.0 * (n as f64).ln());
        let part = BlockPartition::new(n, kappa).unwrap();
        assert_eq!(part.block_count(), 20);
        assert!((part.width_of(19) - part.block_width()).abs() < 1e-12);
    }

    #[test]
    fn widths_sum_to_one() {
        for &(n, kappa) in &[(55u64, 1.0), (1000, 2.0), (8000, 1.0), (37, 0.7)] {
            let part = BlockPartition::new(n, kappa).unwrap();
            let total: f64 = (0..part.block_count()).map(|i| part.width_of(i)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn narrow_last_block_links_its_neighbours() {
        let part = BlockPartition::new(55, 1.0).unwrap();
        let b = part.block_count();
        assert!(part.width_of(b - 1) < part.block_width());
        assert!(part.reachable(b - 2).contains(&0));
        assert!(part.reachable(0).contains(&(b - 2)));
        assert!(!part.reachable(b - 3).contains(&0));
        assert_eq!(part.reachable(5), &[4, 5, 6]);
    }

    #[test]
    fn block_assignment_matches_bounds() {
        let part = BlockPartition::new(1000, 2.0).unwrap();
        for k in 0..10_000 {
            let x = p(-0.5 + k as f64 / 10_000.0 + 1e-9);
            let i = part.block_of(x);
            let (a, b) = part.bounds(i);
            assert!(x.shifted() >= a - 1e-12 && x.shifted() < b + 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn distance_is_symmetric(x in -0.5f64..0.5, y in -0.5f64..0.5) {
            prop_assert_eq!(torus_distance(p(x), p(y)), torus_distance(p(y), p(x)));
        }

        #[test]
        fn distance_triangle(x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5) {
            let lhs = torus_distance(p(x), p(z));
            let rhs = torus_distance(p(x), p(y)) + torus_distance(p(y), p(z));
            prop_assert!(lhs <= rhs + 1e-15);
            prop_assert!((0.0..=0.5).contains(&lhs));
        }

        #[test]
        fn unreachable_blocks_are_out_of_range(x in -0.5f64..0.5, y in -0.5f64..0.5) {
            for &(n, kappa) in &[(55u64, 1.0), (1000, 2.0), (300, 1.3)] {
                let part = BlockPartition::new(n, kappa).unwrap();
                let (i, j) = (part.block_of(p(x)), part.block_of(p(y)));
                if !part.reachable(i).contains(&j) {
                    prop_assert!(torus_distance(p(x), p(y)) > part.block_width());
                }
            }
            // with a full-width last block, cyclic gap >= 2 alone implies separation
            let n = 1000u64;
            let part = BlockPartition::new(n, n as f64 / (20.0 * (n as f64).ln())).unwrap();
            let (i, j) = (part.block_of(p(x)), part.block_of(p(y)));
            if part.cyclic_gap(i, j) >= 2 {
                prop_assert!(torus_distance(p(x), p(y)) > part.block_width());
            }
        }
    }
}
