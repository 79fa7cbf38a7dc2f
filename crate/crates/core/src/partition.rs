//! Token-grid partitioning as explicit index permutations.
//!
//! Splitting an `h × w` token grid with partition side `M` produces
//! `(h/M)·(w/M)` groups of `M²` tokens each. The dilated variant samples
//! each group across the whole grid with stride `(h/M, w/M)`, so every
//! group sees a global footprint; the window variant takes contiguous
//! `M × M` blocks. Merging is the exact inverse reordering. Both are pure
//! functions of the geometry and never look at tensor contents.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Geometry of one partitioned token grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartitionSpec {
    h: usize,
    w: usize,
    m: usize,
}

impl PartitionSpec {
    /// Both grid extents must be positive multiples of the partition side.
    pub fn new(h: usize, w: usize, m: usize) -> Result<Self> {
        if m == 0 || h == 0 || w == 0 {
            return Err(Error::Partition(format!(
                "partition geometry must be positive, got {h}x{w} with M={m}"
            )));
        }
        if !h.is_multiple_of(m) || !w.is_multiple_of(m) {
            return Err(Error::Partition(format!(
                "grid {h}x{w} is not divisible by partition side {m}"
            )));
        }
        Ok(Self { h, w, m })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn side(&self) -> usize {
        self.m
    }

    /// Stride each dilated partition uses to sample the grid.
    pub fn dilation(&self) -> (usize, usize) {
        (self.h / self.m, self.w / self.m)
    }

    pub fn partitions(&self) -> usize {
        (self.h / self.m) * (self.w / self.m)
    }

    /// Tokens per partition (`M²`).
    pub fn partition_len(&self) -> usize {
        self.m * self.m
    }

    pub fn tokens(&self) -> usize {
        self.h * self.w
    }
}

/// A bijection on `[0, N)` paired with its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    /// Validates bijectivity and derives the inverse.
    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (pos, &orig) in forward.iter().enumerate() {
            if orig >= n || inverse[orig] != usize::MAX {
                return Err(Error::Partition(format!(
                    "forward array is not a bijection on [0, {n})"
                )));
            }
            inverse[orig] = pos;
        }
        Ok(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// `forward[j]` is the original index of the token placed at split
    /// position `j`.
    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// Deliberately inconsistent copy for fault-injection drills: the merge
    /// side swaps two slots while the split side stays intact, emulating a
    /// broken merge.
    pub(crate) fn with_swapped_inverse(&self, a: usize, b: usize) -> Permutation {
        let mut inverse = self.inverse.clone();
        inverse.swap(a, b);
        Permutation {
            forward: self.forward.clone(),
            inverse,
        }
    }
}

/// Partition-major enumeration of the adaptively-dilated splitting.
///
/// Partition `(i, j)` for `i ∈ [0, h/M)`, `j ∈ [0, w/M)` holds the tokens at
/// grid positions `(i + p·h/M, j + q·w/M)` in row-major `(p, q)` order, so
/// token `(a, b)` lands in partition `(a mod h/M, b mod w/M)`.
pub fn dilated_split_permutation(spec: &PartitionSpec) -> Permutation {
    let (h, w) = spec.grid();
    let m = spec.side();
    let (dh, dw) = spec.dilation();
    let mut forward = Vec::with_capacity(h * w);
    for i in 0..dh {
        for j in 0..dw {
            for p in 0..m {
                for q in 0..m {
                    forward.push((i + p * dh) * w + (j + q * dw));
                }
            }
        }
    }
    Permutation::from_forward(forward).expect("construction is bijective")
}

/// Contiguous `M × M` window splitting: token `(a, b)` lands in window
/// `(a div M, b div M)`.
pub fn window_split_permutation(spec: &PartitionSpec) -> Permutation {
    let (h, w) = spec.grid();
    let m = spec.side();
    let mut forward = Vec::with_capacity(h * w);
    for wi in 0..h / m {
        for wj in 0..w / m {
            for p in 0..m {
                for q in 0..m {
                    forward.push((wi * m + p) * w + (wj * m + q));
                }
            }
        }
    }
    Permutation::from_forward(forward).expect("construction is bijective")
}

/// Reorder token rows into split order: row `j` of the output is row
/// `forward[j]` of the input.
pub fn split<E: Scalar>(tokens: &Tensor<E>, perm: &Permutation) -> Result<Tensor<E>> {
    gather_rows(tokens, perm.forward())
}

/// Restore original token order: row `i` of the output is the row that the
/// split placed at position `inverse[i]`. `merge(split(x)) == x` exactly.
pub fn merge<E: Scalar>(tokens: &Tensor<E>, perm: &Permutation) -> Result<Tensor<E>> {
    gather_rows(tokens, perm.inverse())
}

fn gather_rows<E: Scalar>(tokens: &Tensor<E>, order: &[usize]) -> Result<Tensor<E>> {
    let (n, c) = tokens.dims2()?;
    if n != order.len() {
        return Err(Error::Dim(format!(
            "permutation length {} does not match {} token rows",
            order.len(),
            n
        )));
    }
    let mut data = Vec::with_capacity(n * c);
    for &r in order {
        data.extend_from_slice(&tokens.data()[r * c..(r + 1) * c]);
    }
    Tensor::from_vec(vec![n, c], data)
}
