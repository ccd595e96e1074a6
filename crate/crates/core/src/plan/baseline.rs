//! Baseline hash plans: identity, the modulo hashing trick, quotient–remainder
//! compositional hashing, and frequency-based double hashing.

use super::{HashPlan, MergeMode, MethodTag, PlanTable, SKIP};
use crate::error::{Error, Result};

/// One row per id. Used for uncompressed tables and tables below the cutoff.
pub fn identity_plan(n: usize) -> Result<HashPlan> {
    HashPlan::new(
        n,
        vec![PlanTable {
            rows: n,
            mapping: (0..n as u64).collect(),
        }],
        MergeMode::Sum,
        MethodTag::Identity,
    )
}

/// `id mod target_rows` into a single table.
pub fn modulo_hash(n: usize, target_rows: usize) -> Result<HashPlan> {
    if target_rows == 0 {
        return Err(Error::invalid("modulo hash needs at least one row"));
    }
    let m = target_rows as u64;
    HashPlan::new(
        n,
        vec![PlanTable {
            rows: target_rows.min(n),
            mapping: (0..n as u64).map(|id| id % m).collect(),
        }],
        MergeMode::Sum,
        MethodTag::Modulo { target_rows },
    )
}

/// Remainder table (`id mod m`, `m` rows) plus quotient table
/// (`id / m`, `ceil(n / m)` rows). The (quotient, remainder) pair is unique per id.
pub fn qr_hash(n: usize, target_rows: usize, merge_mode: MergeMode) -> Result<HashPlan> {
    if target_rows < 2 {
        return Err(Error::invalid("quotient-remainder hash needs at least two rows"));
    }
    let m = target_rows as u64;
    let remainder = PlanTable {
        rows: target_rows.min(n),
        mapping: (0..n as u64).map(|id| id % m).collect(),
    };
    let quotient = PlanTable {
        rows: n.div_ceil(target_rows),
        mapping: (0..n as u64).map(|id| id / m).collect(),
    };
    HashPlan::new(n, vec![remainder, quotient], merge_mode, MethodTag::Qr { target_rows })
}

/// splitmix64 finalizer; fixed constants so plans are identical on every platform.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn seeded_hash(id: u64, seed: u64, rows: u64) -> u64 {
    mix64(id ^ mix64(seed)) % rows
}

/// Frequency-based double hashing.
///
/// The `floor(retain_frac * n)` most accessed ids (ties to the smaller id) get a
/// private row each in a dedicated table. Every other id is hashed into two
/// shared tables of `floor((target_rows - R) / 2)` rows with independently
/// seeded mixers, and its two rows are summed. With nothing retained the
/// dedicated table is omitted.
pub fn freq_double_hash(
    counts: &[u64],
    n: usize,
    target_rows: usize,
    retain_frac: f64,
    seed_a: u64,
    seed_b: u64,
) -> Result<HashPlan> {
    if counts.len() != n {
        return Err(Error::invalid(format!("{} counts for {n} ids", counts.len())));
    }
    if !(0.0..1.0).contains(&retain_frac) {
        return Err(Error::invalid(format!("retain_frac {retain_frac} not in [0, 1)")));
    }
    let retained = (retain_frac * n as f64).floor() as usize;
    let needed = (retain_frac * n as f64).ceil() as usize;
    if target_rows <= needed || target_rows - retained < 2 {
        return Err(Error::invalid(format!(
            "row budget {target_rows} too small to retain {retained} ids and double-hash the rest"
        )));
    }
    let shared_rows = (target_rows - retained) / 2;

    let mut by_count: Vec<usize> = (0..n).collect();
    by_count.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let mut dedicated = vec![SKIP; n];
    for (row, &id) in by_count[..retained].iter().enumerate() {
        dedicated[id] = row as u64;
    }

    let shared = |seed: u64| {
        let mapping = (0..n)
            .map(|id| match dedicated[id] {
                SKIP => seeded_hash(id as u64, seed, shared_rows as u64),
                _ => SKIP,
            })
            .collect();
        PlanTable {
            rows: shared_rows,
            mapping,
        }
    };

    let mut tables = Vec::with_capacity(3);
    if retained > 0 {
        tables.push(PlanTable {
            rows: retained,
            mapping: dedicated.clone(),
        });
    }
    tables.push(shared(seed_a));
    tables.push(shared(seed_b));
    HashPlan::new(
        n,
        tables,
        MergeMode::Sum,
        MethodTag::Fdh {
            target_rows,
            retain_frac,
            seed_a,
            seed_b,
        },
    )
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    #[test]
    fn modulo_rows() {
        let p = modulo_hash(10, 4).unwrap();
        assert_eq!(p.row(0, 7), Some(3));
        assert_eq!(p.row(0, 0), Some(0));
        assert_eq!(p.tables()[0].rows, 4);
        let p = modulo_hash(10, 10).unwrap();
        assert_eq!(p.tables()[0].mapping, (0..10).collect::<Vec<u64>>());
        assert!(modulo_hash(10, 0).is_err());
    }

    #[test]
    fn qr_rows_and_injectivity() {
        let p = qr_hash(10, 4, MergeMode::Sum).unwrap();
        assert_eq!((p.row(1, 7), p.row(0, 7)), (Some(1), Some(3)));
        assert_eq!(p.tables()[1].rows, 3);
        let pairs: HashSet<_> = (0..10).map(|id| (p.row(1, id), p.row(0, id))).collect();
        assert_eq!(pairs.len(), 10);

        let p = qr_hash(10, 10, MergeMode::Concat).unwrap();
        assert_eq!(p.tables()[1].rows, 1);
        assert_eq!(p.tables()[0].mapping, (0..10).collect::<Vec<u64>>());
        assert_eq!(p.merge_mode(), MergeMode::Concat);
    }

    #[test]
    fn fdh_without_retention_is_plain_double_hashing() {
        let p = freq_double_hash(&[5; 100], 100, 20, 0.0, 1, 2).unwrap();
        assert_eq!(p.num_tables(), 2);
        assert!(p.tables().iter().all(|t| t.rows == 10));
        assert!(p.tables().iter().all(|t| t.mapping.iter().all(|&r| r != SKIP)));
        assert_ne!(p.tables()[0].mapping, p.tables()[1].mapping);
    }

    #[test]
    fn fdh_isolates_top_id() {
        let p = freq_double_hash(&[100, 1, 1, 1], 4, 3, 0.25, 7, 8).unwrap();
        assert_eq!(p.num_tables(), 3);
        assert_eq!(p.tables()[0].rows, 1);
        assert_eq!(p.tables()[0].mapping, vec![0, SKIP, SKIP, SKIP]);
        assert_eq!(p.row(1, 0), None);
        assert_eq!(p.row(2, 0), None);
        for id in 1..4 {
            assert!(p.row(1, id).is_some() && p.row(2, id).is_some());
        }
        assert!(p.total_rows() <= 3);
    }

    #[test]
    fn fdh_retained_rows_are_injective() {
        let counts: Vec<u64> = (0..1000).map(|i| (i * 7919 % 1000) as u64).collect();
        let p = freq_double_hash(&counts, 1000, 100, 0.025, 3, 4).unwrap();
        let rows: Vec<u64> = p.tables()[0].mapping.iter().copied().filter(|&r| r != SKIP).collect();
        let uniq: HashSet<_> = rows.iter().collect();
        assert_eq!(rows.len(), 25);
        assert_eq!(uniq.len(), 25);
    }

    #[test]
    fn fdh_budget_checks() {
        assert!(freq_double_hash(&[1; 100], 100, 10, 0.1, 0, 1).is_err());
        assert!(freq_double_hash(&[1; 100], 100, 11, 0.1, 0, 1).is_err());
        assert!(freq_double_hash(&[1; 100], 100, 12, 0.1, 0, 1).is_ok());
        assert!(freq_double_hash(&[1; 100], 100, 12, 1.0, 0, 1).is_err());
        assert!(freq_double_hash(&[1; 3], 100, 12, 0.0, 0, 1).is_err());
    }

    #[test]
    fn mixer_is_fixed() {
        // splitmix64 reference output for state 0
        assert_eq!(mix64(0), 0xe220_a839_7b1d_cdaf);
    }
}
