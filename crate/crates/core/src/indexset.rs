//! Total-degree multi-index sets `{α : 2 ≤ |α| ≤ K}` in graded lexicographic order.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnpError};

/// Largest order for which every `α!` fits in an `i64`.
pub const MAX_INDEX_ORDER: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        Self(entries)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    /// `α! = Π_j α_j!`
    pub fn factorial(&self) -> u64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }
}

impl std::ops::Index<usize> for MultiIndex {
    type Output = usize;
    fn index(&self, j: usize) -> &usize {
        &self.0[j]
    }
}

pub fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Ordered set of multi-indices with their factorial weights (the diagonal of `𝒬`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndexSet {
    dimension: usize,
    order: usize,
    indices: Vec<MultiIndex>,
    weights: Vec<u64>,
}

impl MultiIndexSet {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Rebuilds a set from an explicit index list, e.g. one read from a density file.
    /// The list must equal the canonical enumeration for `(dimension, order)`.
    pub fn from_indices(dimension: usize, order: usize, indices: Vec<MultiIndex>) -> Result<Self> {
        let canonical = build_index_set(dimension, order)?;
        if canonical.indices != indices {
            return Err(SnpError::InvalidConfig(format!(
                "index list does not match the graded-lexicographic set for d={dimension}, K={order}"
            )));
        }
        Ok(canonical)
    }
}

/// Graded lexicographic enumeration: ascending total degree, then lexicographic
/// on the entry vector within each degree.
pub fn build_index_set(d: usize, order: usize) -> Result<MultiIndexSet> {
    if d == 0 {
        return Err(SnpError::InvalidDimension);
    }
    if order < 2 {
        return Err(SnpError::InvalidOrder {
            order,
            reason: "whitened expansions start at order 2",
        });
    }
    if order > MAX_INDEX_ORDER {
        return Err(SnpError::InvalidOrder {
            order,
            reason: "factorial weights overflow beyond order 20",
        });
    }
    let mut indices = Vec::with_capacity(coefficient_count(d, order));
    for degree in 2..=order {
        let mut current = vec![0usize; d];
        compositions(degree, 0, &mut current, &mut indices);
    }
    let weights = indices.iter().map(MultiIndex::factorial).collect();
    Ok(MultiIndexSet {
        dimension: d,
        order,
        indices,
        weights,
    })
}

// Emits all `current` with entries from `pos` on summing to `remaining`,
// in lexicographic order.
fn compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
    let d = current.len();
    if pos == d - 1 {
        current[pos] = remaining;
        out.push(MultiIndex(current.clone()));
        current[pos] = 0;
        return;
    }
    for a in 0..=remaining {
        current[pos] = a;
        compositions(remaining - a, pos + 1, current, out);
    }
    current[pos] = 0;
}

/// `M = C(d+K, K) - 1 - d`
pub fn coefficient_count(d: usize, order: usize) -> usize {
    let k = order.min(d) as u128;
    let n = (d + order) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    (c as usize).saturating_sub(1 + d)
}
