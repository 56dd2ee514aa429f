//! Set partitions and nonempty subsets of `{1..m}`.
//!
//! The full likelihood sums a product of `mu` terms over every partition of
//! the component index set, and the censored likelihood indexes its terms by
//! nonempty subsets. Both families are enumerated lazily: the number of
//! partitions is the Bell number of the dimension and explodes quickly, so
//! nothing here ever materializes the whole list.
//!
//! Components are indexed `0..m` internally. File formats and diagnostics use
//! the 1-based convention of the statistical literature; conversion happens at
//! the I/O boundary.

use crate::error::{Error, Result};

/// Default cap on the dimension for partition enumeration.
pub const PARTITION_DIM_CAP: usize = 12;
/// Default cap on the dimension for subset enumeration.
pub const SUBSET_DIM_CAP: usize = 25;

/// A nonempty subset of `{0..m}`, stored as a bitmask.
///
/// Members iterate in strictly increasing order. The mask doubles as a cache
/// index for per-subset quantities.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct ComponentSet {
    mask: u32,
    m: usize,
}

impl ComponentSet {
    /// Build from explicit member indices (0-based, strictly below `m`).
    pub fn from_members(members: &[usize], m: usize) -> Result<Self> {
        if m == 0 || m > SUBSET_DIM_CAP {
            return Err(Error::invalid(format!("ambient dimension {m} out of range")));
        }
        if members.is_empty() {
            return Err(Error::invalid("component set must be nonempty"));
        }
        let mut mask = 0u32;
        for &j in members {
            if j >= m {
                return Err(Error::invalid(format!(
                    "component index {j} out of range for dimension {m}"
                )));
            }
            if mask & (1 << j) != 0 {
                return Err(Error::invalid(format!("duplicate component index {j}")));
            }
            mask |= 1 << j;
        }
        Ok(ComponentSet { mask, m })
    }

    /// Build from a bitmask; `mask` must be nonzero and fit in `m` bits.
    pub fn from_mask(mask: u32, m: usize) -> Result<Self> {
        if mask == 0 {
            return Err(Error::invalid("component set must be nonempty"));
        }
        if m > SUBSET_DIM_CAP || (mask >> m) != 0 {
            return Err(Error::invalid(format!("mask {mask:#b} does not fit in dimension {m}")));
        }
        Ok(ComponentSet { mask, m })
    }

    /// The full set `{0..m}`.
    pub fn full(m: usize) -> Self {
        ComponentSet { mask: ((1u64 << m) - 1) as u32, m }
    }

    /// Singleton `{j}`.
    pub fn singleton(j: usize, m: usize) -> Self {
        debug_assert!(j < m);
        ComponentSet { mask: 1 << j, m }
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn ambient_dim(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        false // nonempty by construction
    }

    pub fn is_full(&self) -> bool {
        self.len() == self.m
    }

    pub fn contains(&self, j: usize) -> bool {
        j < self.m && self.mask & (1 << j) != 0
    }

    /// Smallest member.
    pub fn min_member(&self) -> usize {
        self.mask.trailing_zeros() as usize
    }

    /// Members in increasing order.
    pub fn members(&self) -> impl Iterator<Item = usize> + '_ {
        let mask = self.mask;
        (0..self.m).filter(move |j| mask & (1 << j) != 0)
    }

    /// The complement within the ambient set; `None` when `self` is full.
    pub fn complement(&self) -> Option<ComponentSet> {
        let full = ((1u64 << self.m) - 1) as u32;
        let mask = full & !self.mask;
        (mask != 0).then_some(ComponentSet { mask, m: self.m })
    }

    /// Complement member indices in increasing order (empty when full).
    pub fn complement_members(&self) -> Vec<usize> {
        (0..self.m).filter(|j| self.mask & (1 << j) == 0).collect()
    }
}

impl std::fmt::Debug for ComponentSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{{")?;
        for (i, j) in self.members().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", j + 1)?;
        }
        write!(f, "}}")
    }
}

/// A partition of `{0..m}` into disjoint nonempty blocks.
///
/// Canonical order: blocks sorted by smallest member, so the summation order
/// of likelihood terms is deterministic.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Partition {
    blocks: Vec<ComponentSet>,
    m: usize,
}

impl Partition {
    pub fn new(blocks: Vec<ComponentSet>, m: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("partition must have at least one block"));
        }
        let mut union = 0u32;
        for b in &blocks {
            if b.ambient_dim() != m {
                return Err(Error::invalid("block has wrong ambient dimension"));
            }
            if union & b.mask() != 0 {
                return Err(Error::invalid("partition blocks overlap"));
            }
            union |= b.mask();
        }
        if union != ((1u64 << m) - 1) as u32 {
            return Err(Error::invalid("partition blocks do not cover the index set"));
        }
        let mut blocks = blocks;
        blocks.sort_by_key(|b| b.min_member());
        Ok(Partition { blocks, m })
    }

    /// Build from a block assignment `a[j] = label of j's block`.
    pub fn from_assignment(assignment: &[usize]) -> Result<Self> {
        let m = assignment.len();
        if m == 0 {
            return Err(Error::invalid("empty assignment"));
        }
        let nblocks = assignment.iter().max().unwrap() + 1;
        let mut masks = vec![0u32; nblocks];
        for (j, &a) in assignment.iter().enumerate() {
            masks[a] |= 1 << j;
        }
        let blocks = masks
            .into_iter()
            .filter(|&mk| mk != 0)
            .map(|mk| ComponentSet::from_mask(mk, m))
            .collect::<Result<Vec<_>>>()?;
        Partition::new(blocks, m)
    }

    /// All components in one block.
    pub fn single_block(m: usize) -> Self {
        Partition { blocks: vec![ComponentSet::full(m)], m }
    }

    /// Every component in its own block.
    pub fn singletons(m: usize) -> Self {
        Partition {
            blocks: (0..m).map(|j| ComponentSet::singleton(j, m)).collect(),
            m,
        }
    }

    pub fn blocks(&self) -> &[ComponentSet] {
        &self.blocks
    }

    pub fn ambient_dim(&self) -> usize {
        self.m
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn max_block_size(&self) -> usize {
        self.blocks.iter().map(|b| b.len()).max().unwrap_or(0)
    }
}

/// Exact Bell number `B(m)` via the Bell triangle.
///
/// Errors on `u128` overflow rather than wrapping (the Bell triangle for
/// `B(42)` already touches `B(43) > 2^128`).
pub fn bell_number(m: usize) -> Result<u128> {
    let mut row: Vec<u128> = vec![1];
    for _ in 0..m {
        let mut next = Vec::with_capacity(row.len() + 1);
        next.push(*row.last().unwrap());
        for &v in &row {
            let prev = *next.last().unwrap();
            let s = prev
                .checked_add(v)
                .ok_or_else(|| Error::Overflow(format!("Bell number of {m} exceeds u128")))?;
            next.push(s);
        }
        row = next;
    }
    Ok(row[0])
}

/// Lazy generator of all partitions of `{0..m}` in restricted-growth-string
/// order (canonical: each new label first appears at the smallest possible
/// index). O(m) memory regardless of the Bell number.
#[derive(Debug)]
pub struct PartitionIter {
    a: Vec<usize>,    // restricted growth string
    bmax: Vec<usize>, // bmax[j] = 1 + max(a[0..j])
    m: usize,
    started: bool,
    done: bool,
}

impl PartitionIter {
    fn new(m: usize) -> Self {
        PartitionIter { a: vec![0; m], bmax: vec![0; m], m, started: false, done: false }
    }

    /// Advance to the next restricted growth string; returns false when done.
    fn advance(&mut self) -> bool {
        if self.done {
            return false;
        }
        if !self.started {
            // a = [0,...,0], bmax[j] = 1 for j >= 1
            self.started = true;
            for j in 1..self.m {
                self.bmax[j] = 1;
            }
            return true;
        }
        // Find the rightmost position that can be incremented.
        let mut j = self.m;
        while j > 1 {
            j -= 1;
            if self.a[j] < self.bmax[j] {
                self.a[j] += 1;
                let mut bm = self.bmax[j].max(self.a[j] + 1);
                for i in j + 1..self.m {
                    self.a[i] = 0;
                    self.bmax[i] = bm;
                    bm = bm.max(1);
                }
                return true;
            }
        }
        self.done = true;
        false
    }

    /// The current restricted growth string (valid after `next` yields).
    pub fn assignment(&self) -> &[usize] {
        &self.a
    }
}

impl Iterator for PartitionIter {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.advance() {
            Some(Partition::from_assignment(&self.a).expect("RGS yields valid partitions"))
        } else {
            None
        }
    }
}

/// Enumerate every partition of `{0..m}` exactly once.
pub fn enumerate_partitions(m: usize) -> Result<PartitionIter> {
    enumerate_partitions_capped(m, PARTITION_DIM_CAP)
}

/// As [`enumerate_partitions`] with an explicit dimension cap.
pub fn enumerate_partitions_capped(m: usize, cap: usize) -> Result<PartitionIter> {
    if m == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if m > cap {
        return Err(Error::DimensionCap {
            what: "partition enumeration (Bell-number explosion)",
            dim: m,
            cap,
        });
    }
    Ok(PartitionIter::new(m))
}

/// Visit every partition without allocating `Partition` values: the callback
/// receives the restricted growth string. This is the hot path of the full
/// likelihood.
pub fn for_each_partition_assignment<F: FnMut(&[usize])>(m: usize, mut f: F) {
    let mut it = PartitionIter::new(m);
    while it.advance() {
        f(&it.a);
    }
}

/// Lazy enumeration of all `2^m - 1` nonempty subsets, by increasing mask.
pub fn enumerate_nonempty_subsets(m: usize) -> Result<impl Iterator<Item = ComponentSet>> {
    enumerate_nonempty_subsets_capped(m, SUBSET_DIM_CAP)
}

/// As [`enumerate_nonempty_subsets`] with an explicit dimension cap.
pub fn enumerate_nonempty_subsets_capped(
    m: usize,
    cap: usize,
) -> Result<impl Iterator<Item = ComponentSet>> {
    if m == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if m > cap {
        return Err(Error::DimensionCap { what: "subset enumeration", dim: m, cap });
    }
    Ok((1u32..(1u32 << m)).map(move |mask| ComponentSet { mask, m }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bell_anchors() {
        // B(0)=1 and the small values by exhaustive enumeration elsewhere.
        assert_eq!(bell_number(0).unwrap(), 1);
        assert_eq!(bell_number(1).unwrap(), 1);
        assert_eq!(bell_number(3).unwrap(), 5);
        assert_eq!(bell_number(7).unwrap(), 877);
        assert_eq!(bell_number(10).unwrap(), 115975);
    }

    #[test]
    fn bell_overflow_errors() {
        assert!(bell_number(41).is_ok());
        assert!(matches!(bell_number(42), Err(Error::Overflow(_))));
    }

    #[test]
    fn partition_counts_match_bell() {
        for m in 1..=10 {
            let count = enumerate_partitions(m).unwrap().count() as u128;
            assert_eq!(count, bell_number(m).unwrap(), "m={m}");
        }
    }

    #[test]
    fn m1_single_partition() {
        let parts: Vec<_> = enumerate_partitions(1).unwrap().collect();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], Partition::single_block(1));
    }

    #[test]
    fn partitions_are_valid_and_unique() {
        for m in 1..=6 {
            let mut seen = std::collections::HashSet::new();
            for p in enumerate_partitions(m).unwrap() {
                assert_eq!(p.ambient_dim(), m);
                let mut union = 0u32;
                for b in p.blocks() {
                    assert!(b.len() >= 1);
                    assert_eq!(union & b.mask(), 0, "blocks overlap");
                    union |= b.mask();
                }
                assert_eq!(union, (1u32 << m) - 1, "blocks do not cover");
                // canonical order by least member
                let mins: Vec<_> = p.blocks().iter().map(|b| b.min_member()).collect();
                assert!(mins.windows(2).all(|w| w[0] < w[1]));
                let key: Vec<u32> = p.blocks().iter().map(|b| b.mask()).collect();
                assert!(seen.insert(key), "duplicate partition");
            }
        }
    }

    #[test]
    fn partition_cap_refused() {
        let err = enumerate_partitions(13).unwrap_err();
        assert!(err.to_string().contains("explosion"));
    }

    #[test]
    fn subsets_count_and_unique() {
        for m in [1usize, 2, 5] {
            let subs: Vec<_> = enumerate_nonempty_subsets(m).unwrap().collect();
            assert_eq!(subs.len(), (1 << m) - 1);
            let mut seen = std::collections::HashSet::new();
            for s in &subs {
                assert!(seen.insert(s.mask()));
                assert!(s.len() >= 1);
            }
        }
    }

    #[test]
    fn subsets_m2_explicit() {
        let subs: Vec<_> = enumerate_nonempty_subsets(2).unwrap().collect();
        let members: Vec<Vec<usize>> = subs.iter().map(|s| s.members().collect()).collect();
        assert_eq!(members, vec![vec![0], vec![1], vec![0, 1]]);
    }

    #[test]
    fn component_set_basics() {
        let b = ComponentSet::from_members(&[0, 2], 3).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.complement_members(), vec![1]);
        assert_eq!(format!("{b:?}"), "{1,3}");
        assert!(ComponentSet::from_members(&[], 3).is_err());
        assert!(ComponentSet::from_members(&[3], 3).is_err());
        assert!(ComponentSet::from_members(&[1, 1], 3).is_err());
        assert!(ComponentSet::full(3).complement().is_none());
    }

    #[test]
    fn assignment_roundtrip() {
        let p = Partition::from_assignment(&[0, 1, 0, 2]).unwrap();
        assert_eq!(p.num_blocks(), 3);
        assert_eq!(p.blocks()[0].members().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(p.max_block_size(), 2);
    }
}
