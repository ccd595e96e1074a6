use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Real;

/// One physical weight matrix (row-major) with its rowwise Adagrad accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalTable<R> {
    rows: usize,
    cols: usize,
    weights: Vec<R>,
    state: Vec<R>,
}

impl<R: Real> InternalTable<R> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        InternalTable {
            rows,
            cols,
            weights: vec![R::zero(); rows * cols],
            state: vec![R::zero(); rows],
        }
    }

    /// Wraps existing weights with zeroed optimizer state.
    pub fn from_weights(rows: usize, cols: usize, weights: Vec<R>) -> Self {
        assert_eq!(weights.len(), rows * cols, "weights must be rows × cols");
        InternalTable {
            rows,
            cols,
            weights,
            state: vec![R::zero(); rows],
        }
    }

    pub(crate) fn from_parts(rows: usize, cols: usize, weights: Vec<R>, state: Vec<R>) -> Self {
        debug_assert_eq!(weights.len(), rows * cols);
        debug_assert_eq!(state.len(), rows);
        InternalTable {
            rows,
            cols,
            weights,
            state,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[R] {
        &self.weights[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [R] {
        &mut self.weights[r * self.cols..(r + 1) * self.cols]
    }

    pub fn weights(&self) -> &[R] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [R] {
        &mut self.weights
    }

    /// Per-row Adagrad accumulators.
    pub fn state(&self) -> &[R] {
        &self.state
    }
}

/// Uniform weights in `[-scale, scale]` from a seeded ChaCha stream; zeroed
/// optimizer state. Values are drawn in `f64` so both precisions see the
/// same numbers up to rounding.
pub fn init_weights<R: Real>(rows: usize, cols: usize, scale: f64, seed: u64) -> InternalTable<R> {
    if scale == 0.0 {
        return InternalTable::zeros(rows, cols);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = (0..rows * cols)
        .map(|_| R::of(scale * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    InternalTable::from_weights(rows, cols, weights)
}

/// Gradients for the rows of one table touched by a batch, in first-touch order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRowGrads<R> {
    cols: usize,
    rows: Vec<usize>,
    grads: Vec<R>,
    slots: HashMap<usize, usize>,
}

impl<R: Real> SparseRowGrads<R> {
    pub fn new(cols: usize) -> Self {
        SparseRowGrads {
            cols,
            rows: Vec::new(),
            grads: Vec::new(),
            slots: HashMap::new(),
        }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Adds `g` into the accumulated gradient of `row`.
    pub fn add(&mut self, row: usize, g: &[R]) {
        debug_assert_eq!(g.len(), self.cols);
        let slot = *self.slots.entry(row).or_insert_with(|| {
            self.rows.push(row);
            self.grads.extend(std::iter::repeat_n(R::zero(), self.cols));
            self.rows.len() - 1
        });
        let dst = &mut self.grads[slot * self.cols..(slot + 1) * self.cols];
        for (d, &x) in dst.iter_mut().zip(g) {
            *d += x;
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, row: usize) -> Option<&[R]> {
        self.slots
            .get(&row)
            .map(|&s| &self.grads[s * self.cols..(s + 1) * self.cols])
    }

    /// `(row, gradient)` pairs in first-touch order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &[R])> + '_ {
        self.rows.iter().copied().zip(self.grads.chunks_exact(self.cols.max(1)))
    }
}

/// Sparse rowwise Adagrad: for each touched row, add the mean squared
/// gradient entry to the row's accumulator, then step by
/// `lr * g / sqrt(acc + eps)`. Untouched rows are left alone.
pub fn adagrad_step<R: Real>(table: &mut InternalTable<R>, grads: &SparseRowGrads<R>, lr: R, eps: R) {
    assert_eq!(grads.cols(), table.cols, "gradient width must match the table");
    let inv_cols = R::one() / R::of(table.cols as f64);
    for (row, g) in grads.iter() {
        let mean_sq = g.iter().map(|&x| x * x).sum::<R>() * inv_cols;
        table.state[row] += mean_sq;
        let step = lr / (table.state[row] + eps).sqrt();
        for (w, &x) in table.row_mut(row).iter_mut().zip(g) {
            *w -= step * x;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adagrad_single_step() {
        let mut t = InternalTable::from_weights(1, 2, vec![1.0f64, 1.0]);
        let mut g = SparseRowGrads::new(2);
        g.add(0, &[0.5, 0.5]);
        adagrad_step(&mut t, &g, 0.02, 1e-8);
        assert!((t.state()[0] - 0.25).abs() < 1e-15);
        for &w in t.row(0) {
            assert!((w - 0.98).abs() < 1e-9);
        }
    }

    #[test]
    fn adagrad_zero_gradient_is_a_no_op() {
        let mut t = InternalTable::from_weights(2, 2, vec![0.3f64, -0.1, 0.7, 0.2]);
        let before = t.clone();
        let mut g = SparseRowGrads::new(2);
        g.add(1, &[0.0, 0.0]);
        adagrad_step(&mut t, &g, 0.02, 1e-8);
        assert_eq!(t, before);
    }

    #[test]
    fn adagrad_steps_shrink() {
        let mut t = InternalTable::from_weights(1, 2, vec![1.0f64, 1.0]);
        let mut g = SparseRowGrads::new(2);
        g.add(0, &[0.5, 0.5]);
        adagrad_step(&mut t, &g, 0.02, 1e-8);
        let d1 = 1.0 - t.row(0)[0];
        let w1 = t.row(0)[0];
        adagrad_step(&mut t, &g, 0.02, 1e-8);
        let d2 = w1 - t.row(0)[0];
        // second step: 0.02 * 0.5 / sqrt(0.5)
        assert!((d2 - 0.02 * 0.5 / 0.5f64.sqrt()).abs() < 1e-9);
        assert!(d2 < d1);
    }

    #[test]
    fn adagrad_leaves_untouched_rows_bit_identical() {
        let mut t: InternalTable<f32> = init_weights(5, 3, 0.5, 9);
        let before = t.clone();
        let mut g = SparseRowGrads::new(3);
        g.add(2, &[0.1, -0.2, 0.3]);
        adagrad_step(&mut t, &g, 0.02, 1e-8);
        for r in [0, 1, 3, 4] {
            assert_eq!(t.row(r), before.row(r));
            assert_eq!(t.state()[r], 0.0);
        }
        assert_ne!(t.row(2), before.row(2));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a: InternalTable<f32> = init_weights(10, 4, 0.5, 42);
        let b: InternalTable<f32> = init_weights(10, 4, 0.5, 42);
        let c: InternalTable<f32> = init_weights(10, 4, 0.5, 43);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.weights().iter().all(|w| w.abs() <= 0.5));
        assert!(a.state().iter().all(|&s| s == 0.0));
        let z: InternalTable<f64> = init_weights(3, 3, 0.0, 1);
        assert!(z.weights().iter().all(|&w| w == 0.0));
    }

    #[test]
    fn init_mean_is_near_zero() {
        let scale = 0.5;
        let t: InternalTable<f64> = init_weights(200, 64, scale, 7);
        let n = t.weights().len() as f64;
        let mean = t.weights().iter().sum::<f64>() / n;
        // uniform on [-s, s] has variance s²/3
        let sigma = (scale * scale / 3.0 / n).sqrt();
        assert!(mean.abs() < 3.0 * sigma, "mean {mean} vs 3σ {}", 3.0 * sigma);
    }

    #[test]
    fn sparse_grads_accumulate_in_first_touch_order() {
        let mut g = SparseRowGrads::new(2);
        g.add(4, &[1.0f64, 2.0]);
        g.add(1, &[0.5, 0.5]);
        g.add(4, &[3.0, -1.0]);
        let rows: Vec<_> = g.iter().map(|(r, v)| (r, v.to_vec())).collect();
        assert_eq!(rows, vec![(4, vec![4.0, 1.0]), (1, vec![0.5, 0.5])]);
        assert_eq!(g.get(7), None);
    }
}
