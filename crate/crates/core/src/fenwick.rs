//! Fenwick (binary indexed) tree over stored coordinates of a lazily
//! affine-mapped vector. The materialized value of coordinate `r` is
//! `a * stored[r] + b`; all queries take the `(a, b)` pair so the tree itself
//! never needs rebuilding when the whole vector is rescaled.

#[derive(Debug, Clone)]
pub struct FenwickTree {
    // 1-based; tree[i] covers lsb(i) stored entries ending at i.
    tree: Vec<f64>,
    len: usize,
    // largest power of two <= len, for the descend
    top_bit: usize,
}

#[inline]
fn lsb(i: usize) -> usize {
    i & i.wrapping_neg()
}

impl FenwickTree {
    pub fn from_values(values: &[f64]) -> Self {
        let len = values.len();
        let mut tree = vec![0.0; len + 1];
        tree[1..].copy_from_slice(values);
        for i in 1..=len {
            let j = i + lsb(i);
            if j <= len {
                tree[j] += tree[i];
            }
        }
        let mut top_bit = 1;
        while top_bit * 2 <= len {
            top_bit *= 2;
        }
        Self { tree, len, top_bit }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Add `delta` to stored coordinate `idx` (0-based).
    pub fn add(&mut self, idx: usize, delta: f64) {
        let mut i = idx + 1;
        while i <= self.len {
            self.tree[i] += delta;
            i += lsb(i);
        }
    }

    /// Sum of stored coordinates `0..=idx`.
    pub fn prefix_stored(&self, idx: usize) -> f64 {
        let mut i = idx + 1;
        let mut sum = 0.0;
        while i > 0 {
            sum += self.tree[i];
            i -= lsb(i);
        }
        sum
    }

    /// Sum of materialized coordinates `0..=idx` under the affine map.
    pub fn prefix(&self, idx: usize, mult: f64, add: f64) -> f64 {
        mult * self.prefix_stored(idx) + add * (idx + 1) as f64
    }

    /// Total materialized mass.
    pub fn total(&self, mult: f64, add: f64) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.prefix(self.len - 1, mult, add)
        }
    }

    /// Smallest 0-based index `r` with materialized prefix sum `> target`.
    ///
    /// Requires every materialized coordinate to be positive (true for
    /// ambiguity-set members, which are floored away from zero). Returns
    /// `len - 1` when `target` exceeds the total mass.
    pub fn search(&self, target: f64, mult: f64, add: f64) -> usize {
        let mut pos = 0usize;
        let mut remaining = target;
        let mut bit = self.top_bit;
        while bit != 0 {
            let next = pos + bit;
            if next <= self.len {
                let node = mult * self.tree[next] + add * bit as f64;
                if node <= remaining {
                    remaining -= node;
                    pos = next;
                }
            }
            bit >>= 1;
        }
        pos.min(self.len - 1)
    }
}
