//! Hash plans: the id → row lookup tables that sit in front of embedding tables.
//!
//! A [`HashPlan`] maps each of the `N` original ids to a row in each of its
//! internal tables (or to [`SKIP`]). Rows fetched from the internal tables are
//! merged by summation or concatenation. Plans come from the learned builder
//! in [`learned`] or one of the baselines in [`baseline`], and are stored in
//! the packed `.chsh` format from [`format`].

pub mod baseline;
pub mod format;
pub mod learned;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use baseline::{freq_double_hash, identity_plan, modulo_hash, qr_hash};
pub use format::{deserialize_plan, entry_width_bits, serialize_plan};
pub use learned::{learned_hash, LearnedHashConfig, Projection};

/// Mapping entry meaning "this id has no row in this table".
pub const SKIP: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeMode {
    Sum,
    Concat,
}

impl MergeMode {
    pub(crate) fn code(self) -> u8 {
        match self {
            MergeMode::Sum => 0,
            MergeMode::Concat => 1,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(MergeMode::Sum),
            1 => Some(MergeMode::Concat),
            _ => None,
        }
    }
}

/// How a plan was produced. Not part of the binary format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodTag {
    Identity,
    Modulo {
        target_rows: usize,
    },
    Qr {
        target_rows: usize,
    },
    Fdh {
        target_rows: usize,
        retain_frac: f64,
        seed_a: u64,
        seed_b: u64,
    },
    Learned {
        target_rows: usize,
        k: usize,
        frequency_filter: bool,
        frequency_weighting: bool,
    },
    /// Plans read back from disk.
    Unspecified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanTable {
    pub rows: usize,
    pub mapping: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HashPlan {
    n: usize,
    tables: Vec<PlanTable>,
    merge_mode: MergeMode,
    method: MethodTag,
}

impl HashPlan {
    /// Builds a plan, checking that every entry is in range and every id is
    /// mapped by at least one table.
    pub fn new(n: usize, tables: Vec<PlanTable>, merge_mode: MergeMode, method: MethodTag) -> Result<Self> {
        let plan = HashPlan {
            n,
            tables,
            merge_mode,
            method,
        };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("plan must cover at least one id"));
        }
        if self.tables.is_empty() {
            return Err(Error::invalid("plan needs at least one internal table"));
        }
        for (t, table) in self.tables.iter().enumerate() {
            if table.rows == 0 {
                return Err(Error::invalid(format!("internal table {t} has no rows")));
            }
            if table.mapping.len() != self.n {
                return Err(Error::invalid(format!(
                    "internal table {t} maps {} ids, expected {}",
                    table.mapping.len(),
                    self.n
                )));
            }
            if let Some(id) = table.mapping.iter().position(|&r| r != SKIP && r >= table.rows as u64) {
                return Err(Error::invalid(format!(
                    "id {id} maps to row {} of table {t} with {} rows",
                    table.mapping[id], table.rows
                )));
            }
        }
        if let Some(id) = (0..self.n).find(|&id| self.tables.iter().all(|t| t.mapping[id] == SKIP)) {
            return Err(Error::invalid(format!("id {id} is skipped by every table")));
        }
        Ok(())
    }

    /// Number of original ids.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tables(&self) -> &[PlanTable] {
        &self.tables
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn merge_mode(&self) -> MergeMode {
        self.merge_mode
    }

    pub fn method(&self) -> &MethodTag {
        &self.method
    }

    pub fn with_method(mut self, method: MethodTag) -> Self {
        self.method = method;
        self
    }

    /// Row of `id` in internal table `table`, or `None` for [`SKIP`].
    #[inline]
    pub fn row(&self, table: usize, id: usize) -> Option<usize> {
        match self.tables[table].mapping[id] {
            SKIP => None,
            r => Some(r as usize),
        }
    }

    pub fn total_rows(&self) -> usize {
        self.tables.iter().map(|t| t.rows).sum()
    }

    pub fn max_rows(&self) -> usize {
        self.tables.iter().map(|t| t.rows).max().unwrap_or(0)
    }

    /// One table mapping every id to its own index, whatever the method tag.
    pub fn is_identity(&self) -> bool {
        matches!(self.method, MethodTag::Identity)
            || (self.tables.len() == 1
                && self.tables[0].rows == self.n
                && self.tables[0].mapping.iter().enumerate().all(|(i, &r)| r == i as u64))
    }

    /// Bytes taken by the lookup tables at the packed entry width. Identity
    /// plans need no lookup table and report zero.
    pub fn lookup_bytes(&self) -> usize {
        if self.is_identity() {
            return 0;
        }
        self.tables.len() * self.n * entry_width_bits(self.max_rows()) as usize / 8
    }

    /// JSON dump for debugging: method metadata plus every mapping, with
    /// `null` for skipped entries.
    pub fn to_json(&self) -> serde_json::Value {
        let tables: Vec<_> = self
            .tables
            .iter()
            .map(|t| {
                let mapping: Vec<Option<u64>> = t
                    .mapping
                    .iter()
                    .map(|&r| if r == SKIP { None } else { Some(r) })
                    .collect();
                serde_json::json!({ "rows": t.rows, "mapping": mapping })
            })
            .collect();
        serde_json::json!({
            "n": self.n,
            "merge_mode": self.merge_mode,
            "method": self.method,
            "tables": tables,
        })
    }
}

/// One categorical feature's table: its height, embedding width, and whether
/// it should be compressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSpec {
    pub height: usize,
    pub width: usize,
    pub compress: bool,
}

/// Marks a table for compression only when its height reaches `cutoff_rows`.
pub fn cutoff_filter(specs: &[TableSpec], cutoff_rows: usize) -> Vec<TableSpec> {
    specs
        .iter()
        .map(|s| TableSpec {
            compress: s.height >= cutoff_rows,
            ..s.clone()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(height: usize) -> TableSpec {
        TableSpec {
            height,
            width: 4,
            compress: false,
        }
    }

    #[test]
    fn cutoff_semantics() {
        let specs = [spec(50_000), spec(200_000)];
        let flags = |cut| {
            cutoff_filter(&specs, cut)
                .iter()
                .map(|s| s.compress)
                .collect::<Vec<_>>()
        };
        assert_eq!(flags(100_000), vec![false, true]);
        assert_eq!(flags(0), vec![true, true]);
        assert_eq!(flags(1_000_000), vec![false, false]);
        assert_eq!(flags(200_000), vec![false, true]);
    }

    #[test]
    fn rejects_out_of_range_rows_and_fully_skipped_ids() {
        let t = |rows, mapping| PlanTable { rows, mapping };
        assert!(HashPlan::new(2, vec![t(2, vec![0, 2])], MergeMode::Sum, MethodTag::Unspecified).is_err());
        assert!(HashPlan::new(2, vec![t(2, vec![0, SKIP])], MergeMode::Sum, MethodTag::Unspecified).is_err());
        assert!(HashPlan::new(
            2,
            vec![t(1, vec![0, SKIP]), t(1, vec![SKIP, 0])],
            MergeMode::Sum,
            MethodTag::Unspecified
        )
        .is_ok());
        assert!(HashPlan::new(2, vec![t(0, vec![])], MergeMode::Sum, MethodTag::Unspecified).is_err());
    }

    #[test]
    fn json_dump_marks_skips() {
        let plan = HashPlan::new(
            2,
            vec![
                PlanTable {
                    rows: 1,
                    mapping: vec![0, SKIP],
                },
                PlanTable {
                    rows: 1,
                    mapping: vec![0, 0],
                },
            ],
            MergeMode::Concat,
            MethodTag::Unspecified,
        )
        .unwrap();
        let v = plan.to_json();
        assert_eq!(v["tables"][0]["mapping"], serde_json::json!([0, null]));
        assert_eq!(v["merge_mode"], "concat");
    }
}
