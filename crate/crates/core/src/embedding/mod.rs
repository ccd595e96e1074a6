//! Embedding lookups through a [`HashPlan`].
//!
//! A [`LogicalEmbedding`] owns one [`InternalTable`] per internal table of its
//! plan. A lookup of id `i` fetches row `plan.row(t, i)` from every table `t`
//! and either sums the rows or concatenates them (a skipped table contributes
//! zeros of its width). The backward pass routes each sample's upstream
//! gradient back along the same rows; samples that land on the same row add.

mod io;
mod real;
mod table;

pub use io::{load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
pub use real::Real;
pub use table::{adagrad_step, init_weights, InternalTable, SparseRowGrads};

use crate::error::{Error, Result};
use crate::plan::{HashPlan, MergeMode};

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalEmbedding<R> {
    plan: HashPlan,
    tables: Vec<InternalTable<R>>,
    output_width: usize,
}

/// Column widths of each internal table: all `width` under SUM, `width`
/// split as evenly as possible under CONCAT (remainder to table 0).
pub fn table_widths(plan: &HashPlan, width: usize) -> Vec<usize> {
    let t = plan.num_tables();
    match plan.merge_mode() {
        MergeMode::Sum => vec![width; t],
        MergeMode::Concat => {
            let mut w = vec![width / t; t];
            w[0] += width % t;
            w
        }
    }
}

impl<R: Real> LogicalEmbedding<R> {
    /// Random uniform init with scale `1 / sqrt(cols)` per table.
    pub fn new(plan: HashPlan, output_width: usize, seed: u64) -> Result<Self> {
        Self::with_scale(plan, output_width, None, seed)
    }

    pub fn with_scale(plan: HashPlan, output_width: usize, scale: Option<f64>, seed: u64) -> Result<Self> {
        let widths = table_widths(&plan, output_width);
        if output_width == 0 || widths.contains(&0) {
            return Err(Error::invalid(format!(
                "width {output_width} cannot feed {} internal tables",
                plan.num_tables()
            )));
        }
        let tables = plan
            .tables()
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(t, (pt, &cols))| {
                let s = scale.unwrap_or(1.0 / (cols as f64).sqrt());
                init_weights(pt.rows, cols, s, seed.wrapping_add(t as u64))
            })
            .collect();
        Ok(LogicalEmbedding {
            plan,
            tables,
            output_width,
        })
    }

    pub fn from_tables(plan: HashPlan, tables: Vec<InternalTable<R>>, output_width: usize) -> Result<Self> {
        let widths = table_widths(&plan, output_width);
        if tables.len() != plan.num_tables() {
            return Err(Error::invalid(format!(
                "{} tables for a plan with {}",
                tables.len(),
                plan.num_tables()
            )));
        }
        for (t, ((table, pt), &cols)) in tables.iter().zip(plan.tables()).zip(&widths).enumerate() {
            if table.rows() != pt.rows || table.cols() != cols {
                return Err(Error::invalid(format!(
                    "table {t} is {}×{}, plan expects {}×{cols}",
                    table.rows(),
                    table.cols(),
                    pt.rows
                )));
            }
        }
        Ok(LogicalEmbedding {
            plan,
            tables,
            output_width,
        })
    }

    pub fn plan(&self) -> &HashPlan {
        &self.plan
    }

    pub fn tables(&self) -> &[InternalTable<R>] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [InternalTable<R>] {
        &mut self.tables
    }

    pub fn output_width(&self) -> usize {
        self.output_width
    }

    pub fn height(&self) -> usize {
        self.plan.n()
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.plan.n() {
            return Err(Error::Lookup {
                id,
                height: self.plan.n(),
            });
        }
        Ok(())
    }

    /// Writes the merged embedding of `id` into `out` (length `output_width`).
    #[inline]
    pub fn lookup_into(&self, id: usize, out: &mut [R]) -> Result<()> {
        self.check_id(id)?;
        debug_assert_eq!(out.len(), self.output_width);
        out.fill(R::zero());
        match self.plan.merge_mode() {
            MergeMode::Sum => {
                for (t, table) in self.tables.iter().enumerate() {
                    if let Some(r) = self.plan.row(t, id) {
                        for (o, &w) in out.iter_mut().zip(table.row(r)) {
                            *o += w;
                        }
                    }
                }
            }
            MergeMode::Concat => {
                let mut offset = 0;
                for (t, table) in self.tables.iter().enumerate() {
                    let cols = table.cols();
                    if let Some(r) = self.plan.row(t, id) {
                        out[offset..offset + cols].copy_from_slice(table.row(r));
                    }
                    offset += cols;
                }
            }
        }
        Ok(())
    }

    /// `B × output_width` row-major embeddings for a batch of ids.
    pub fn forward(&self, ids: &[usize]) -> Result<Vec<R>> {
        let w = self.output_width;
        let mut out = vec![R::zero(); ids.len() * w];
        for (&id, dst) in ids.iter().zip(out.chunks_exact_mut(w)) {
            self.lookup_into(id, dst)?;
        }
        Ok(out)
    }

    /// Accumulates one sample's upstream gradient into per-table row gradients.
    #[inline]
    pub fn accumulate(&self, id: usize, upstream: &[R], grads: &mut [SparseRowGrads<R>]) -> Result<()> {
        self.check_id(id)?;
        let mut offset = 0;
        for (t, table) in self.tables.iter().enumerate() {
            let cols = table.cols();
            if let Some(r) = self.plan.row(t, id) {
                let g = match self.plan.merge_mode() {
                    MergeMode::Sum => upstream,
                    MergeMode::Concat => &upstream[offset..offset + cols],
                };
                grads[t].add(r, g);
            }
            offset += cols;
        }
        Ok(())
    }

    pub fn empty_grads(&self) -> Vec<SparseRowGrads<R>> {
        self.tables.iter().map(|t| SparseRowGrads::new(t.cols())).collect()
    }

    /// Row gradients for every internal table given a `B × output_width`
    /// upstream gradient, accumulated in sample order.
    pub fn backward(&self, ids: &[usize], upstream: &[R]) -> Result<Vec<SparseRowGrads<R>>> {
        if upstream.len() != ids.len() * self.output_width {
            return Err(Error::contract(format!(
                "upstream has {} entries, expected {} × {}",
                upstream.len(),
                ids.len(),
                self.output_width
            )));
        }
        let mut grads = self.empty_grads();
        for (&id, g) in ids.iter().zip(upstream.chunks_exact(self.output_width)) {
            self.accumulate(id, g, &mut grads)?;
        }
        Ok(grads)
    }

    /// Applies rowwise Adagrad to every internal table.
    pub fn apply_adagrad(&mut self, grads: &[SparseRowGrads<R>], lr: R, eps: R) {
        for (table, g) in self.tables.iter_mut().zip(grads) {
            adagrad_step(table, g, lr, eps);
        }
    }
}
