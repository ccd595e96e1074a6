//! The `.chsh` binary plan format.
//!
//! ```text
//! magic     b"CHSH"
//! version   u16
//! n         u64
//! tables    u16
//! merge     u8          0 = sum, 1 = concat
//! per table:
//!   rows    u64
//!   entries n × width   width ∈ {8, 16, 32, 64} bits, shared by all tables
//! ```
//!
//! All integers are little-endian. The entry width is the smallest one whose
//! all-ones pattern is not a valid row of the largest table; that pattern is
//! the skip sentinel.

use super::{HashPlan, MergeMode, MethodTag, PlanTable, SKIP};
use crate::codec::{self, Reader};
use crate::error::{ParseError, Result};

pub const MAGIC: &[u8; 4] = b"CHSH";
pub const VERSION: u16 = 1;

/// Smallest width in {8, 16, 32, 64} that holds rows `0..max_rows` plus the sentinel.
pub fn entry_width_bits(max_rows: usize) -> u32 {
    [8u32, 16, 32]
        .into_iter()
        .find(|&w| (max_rows as u64) < (1u64 << w))
        .unwrap_or(64)
}

fn sentinel(width: u32) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

pub fn serialize_plan(plan: &HashPlan) -> Vec<u8> {
    let width = entry_width_bits(plan.max_rows());
    let skip = sentinel(width);
    let mut out = Vec::with_capacity(17 + plan.num_tables() * (8 + plan.n() * width as usize / 8));
    codec::header(&mut out, MAGIC, VERSION);
    out.extend_from_slice(&(plan.n() as u64).to_le_bytes());
    out.extend_from_slice(&(plan.num_tables() as u16).to_le_bytes());
    out.push(plan.merge_mode().code());
    for t in plan.tables() {
        out.extend_from_slice(&(t.rows as u64).to_le_bytes());
        for &r in &t.mapping {
            let v = if r == SKIP { skip } else { r };
            match width {
                8 => out.push(v as u8),
                16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
                32 => out.extend_from_slice(&(v as u32).to_le_bytes()),
                _ => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

/// Parses a plan and re-checks every plan invariant. The method tag is not
/// stored, so it comes back as [`MethodTag::Unspecified`].
///
/// Row counts are interleaved with the entry blocks, so the entry width is
/// found by trying each candidate and keeping the one whose layout consumes
/// the input exactly and agrees with the width rule.
pub fn deserialize_plan(bytes: &[u8]) -> Result<HashPlan> {
    let mut r = Reader::new(bytes);
    r.header(MAGIC, VERSION)?;
    let n = r.len()?;
    let num_tables = r.u16()? as usize;
    let merge = r.u8()?;
    let merge_mode =
        MergeMode::from_code(merge).ok_or_else(|| ParseError::Invalid(format!("unknown merge mode {merge}")))?;
    let body = r.take(bytes.len() - PREFIX_LEN)?;
    if num_tables == 0 {
        return Err(ParseError::Invalid("plan has no internal tables".into()).into());
    }
    let first_rows = Reader::new(body).len()?;

    let mut first_err = None;
    for width in [8u32, 16, 32, 64] {
        match parse_tables(body, n, num_tables, width) {
            Ok(tables) => {
                return HashPlan::new(n, tables, merge_mode, MethodTag::Unspecified).map_err(|e| match e {
                    crate::Error::InvalidInput(msg) => ParseError::Invalid(msg).into(),
                    other => other,
                });
            }
            Err(e) if width >= entry_width_bits(first_rows) && first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    Err(first_err
        .unwrap_or_else(|| ParseError::Invalid("no consistent entry width".into()))
        .into())
}

const PREFIX_LEN: usize = 4 + 2 + 8 + 2 + 1;

fn parse_tables(body: &[u8], n: usize, num_tables: usize, width: u32) -> Result<Vec<PlanTable>, ParseError> {
    let block = n
        .checked_mul(width as usize / 8)
        .ok_or_else(|| ParseError::Invalid("entry block size overflows".into()))?;
    let mut r = Reader::new(body);
    let mut raw = Vec::with_capacity(num_tables);
    for _ in 0..num_tables {
        let rows = r.len()?;
        raw.push((rows, r.take(block)?));
    }
    r.finish()?;
    let max_rows = raw.iter().map(|&(rows, _)| rows).max().unwrap_or(0);
    if entry_width_bits(max_rows) != width {
        return Err(ParseError::Invalid(format!(
            "entry width {width} does not match largest table of {max_rows} rows"
        )));
    }
    let skip = sentinel(width);
    Ok(raw
        .into_iter()
        .map(|(rows, entries)| PlanTable {
            rows,
            mapping: decode_entries(entries, width, skip),
        })
        .collect())
}

fn decode_entries(raw: &[u8], width: u32, skip: u64) -> Vec<u64> {
    let bytes = width as usize / 8;
    raw.chunks_exact(bytes)
        .map(|c| {
            let mut buf = [0u8; 8];
            buf[..bytes].copy_from_slice(c);
            let v = u64::from_le_bytes(buf);
            if v == skip {
                SKIP
            } else {
                v
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{freq_double_hash, modulo_hash, qr_hash};
    use crate::{Error, ParseError};

    #[test]
    fn width_rule() {
        assert_eq!(entry_width_bits(200), 8);
        assert_eq!(entry_width_bits(255), 8);
        assert_eq!(entry_width_bits(256), 16);
        assert_eq!(entry_width_bits(65_535), 16);
        assert_eq!(entry_width_bits(70_000), 32);
        assert_eq!(entry_width_bits(1 << 32), 64);
    }

    #[test]
    fn round_trips_each_width() {
        for (n, rows) in [(300, 200), (300, 299), (70_001, 70_000)] {
            let plan = modulo_hash(n, rows).unwrap();
            let bytes = serialize_plan(&plan);
            assert_eq!(bytes.len(), PREFIX_LEN + 8 + n * entry_width_bits(rows) as usize / 8);
            let back = deserialize_plan(&bytes).unwrap();
            assert_eq!(back.tables(), plan.tables());
            assert_eq!(serialize_plan(&back), bytes);
        }
    }

    #[test]
    fn skip_entries_survive() {
        let counts: Vec<u64> = (0..500).collect();
        let plan = freq_double_hash(&counts, 500, 300, 0.02, 1, 2).unwrap();
        let back = deserialize_plan(&serialize_plan(&plan)).unwrap();
        assert_eq!(back.tables(), plan.tables());
        let plan = qr_hash(1000, 300, MergeMode::Concat).unwrap();
        let back = deserialize_plan(&serialize_plan(&plan)).unwrap();
        assert_eq!(back.merge_mode(), MergeMode::Concat);
    }

    #[test]
    fn parse_errors_are_distinct() {
        let bytes = serialize_plan(&modulo_hash(40, 7).unwrap());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            deserialize_plan(&bad),
            Err(Error::Parse(ParseError::BadMagic { .. }))
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            deserialize_plan(&bad),
            Err(Error::Parse(ParseError::BadVersion { found: 9, .. }))
        ));
        for cut in [3, 10, bytes.len() - 1] {
            assert!(
                matches!(
                    deserialize_plan(&bytes[..cut]),
                    Err(Error::Parse(ParseError::Truncated { .. }))
                ),
                "cut at {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[PREFIX_LEN + 8] = 7; // row 7 of a 7-row table
        assert!(matches!(
            deserialize_plan(&bad),
            Err(Error::Parse(ParseError::Invalid(_)))
        ));
    }
}
