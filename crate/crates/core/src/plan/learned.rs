//! Learned hash functions: cluster each id's low-dimension teacher latent and
//! map every id to the row of its cluster.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{HashPlan, MergeMode, MethodTag, PlanTable};
use crate::cluster::{self, default_size_max, ClusterConfig};
use crate::error::{Error, Result};

/// Which 1D signal feeds each internal table's clustering run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// Internal table `t` clusters latent column `t`.
    #[default]
    Column,
    /// Mean across all latent columns. Single internal table only.
    MeanOfColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedHashConfig {
    pub k: usize,
    /// Defaults to `4 * ceil(n / budget)` per table.
    pub size_max: Option<u64>,
    pub use_frequency_filter: bool,
    pub use_frequency_weighting: bool,
    pub stage1_factor: f64,
    pub stage2_factor: f64,
    pub stage3_factor: f64,
    pub projection: Projection,
}

impl Default for LearnedHashConfig {
    fn default() -> Self {
        LearnedHashConfig {
            k: 256,
            size_max: None,
            use_frequency_filter: true,
            use_frequency_weighting: true,
            stage1_factor: 2.0,
            stage2_factor: 0.75,
            stage3_factor: 0.5,
            projection: Projection::Column,
        }
    }
}

impl LearnedHashConfig {
    fn cluster_config(&self, n: usize, target: usize) -> ClusterConfig {
        ClusterConfig {
            k: self.k,
            target,
            size_max: self.size_max.unwrap_or_else(|| default_size_max(n, target)),
            use_frequency_filter: self.use_frequency_filter,
            use_frequency_weighting: self.use_frequency_weighting,
            stage1_factor: self.stage1_factor,
            stage2_factor: self.stage2_factor,
            stage3_factor: self.stage3_factor,
        }
    }
}

/// Per-table row budgets. SUM splits the rows (remainder to table 0); CONCAT
/// gives every table the full budget and splits the width instead.
pub fn row_budgets(target_rows: usize, tables: usize, mode: MergeMode) -> Vec<usize> {
    match mode {
        MergeMode::Sum => {
            let base = target_rows / tables;
            let mut out = vec![base; tables];
            out[0] += target_rows % tables;
            out
        }
        MergeMode::Concat => vec![target_rows; tables],
    }
}

/// Builds a learned plan from an `n × dim` row-major latent matrix and per-id
/// access counts. Each internal table is an independent clustering run; its
/// row count is the number of clusters that run ends with.
pub fn learned_hash(
    latent: &[f64],
    dim: usize,
    counts: &[u64],
    target_rows: usize,
    num_tables: usize,
    merge_mode: MergeMode,
    cfg: &LearnedHashConfig,
) -> Result<HashPlan> {
    if dim == 0 || !latent.len().is_multiple_of(dim) {
        return Err(Error::invalid(format!(
            "latent length {} is not a multiple of dimension {dim}",
            latent.len()
        )));
    }
    let n = latent.len() / dim;
    if counts.len() != n {
        return Err(Error::invalid(format!("{} counts for {n} ids", counts.len())));
    }
    if num_tables == 0 || num_tables > dim {
        return Err(Error::invalid(format!(
            "{num_tables} internal tables requested from a {dim}-dimensional latent"
        )));
    }
    if cfg.projection == Projection::MeanOfColumns && num_tables != 1 {
        return Err(Error::invalid("mean-of-columns projection supports one internal table"));
    }
    if target_rows >= n {
        return Err(Error::invalid(format!(
            "target_rows {target_rows} does not compress {n} ids"
        )));
    }
    let budgets = row_budgets(target_rows, num_tables, merge_mode);
    if budgets.contains(&0) {
        return Err(Error::invalid(format!(
            "{target_rows} rows cannot be split across {num_tables} tables"
        )));
    }

    let tables = budgets
        .par_iter()
        .enumerate()
        .map(|(t, &budget)| {
            let values: Vec<f64> = match cfg.projection {
                Projection::Column => latent.chunks_exact(dim).map(|row| row[t]).collect(),
                Projection::MeanOfColumns => latent
                    .chunks_exact(dim)
                    .map(|row| row.iter().sum::<f64>() / dim as f64)
                    .collect(),
            };
            let ccfg = cfg.cluster_config(n, budget);
            let (set, assignment) = cluster::run(&values, counts, &ccfg)?;
            Ok(PlanTable {
                rows: set.len(),
                mapping: assignment.into_iter().map(|a| a as u64).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    HashPlan::new(
        n,
        tables,
        merge_mode,
        MethodTag::Learned {
            target_rows,
            k: cfg.k,
            frequency_filter: cfg.use_frequency_filter,
            frequency_weighting: cfg.use_frequency_weighting,
        },
    )
}
