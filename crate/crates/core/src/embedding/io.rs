//! Weight file format.
//!
//! ```text
//! magic     b"CHSW"
//! version   u16
//! precision u8     bytes per real: 4 or 8
//! tables    u32
//! per table:
//!   rows    u64
//!   cols    u64
//!   weights rows × cols reals, row-major
//!   state   rows reals (Adagrad accumulators)
//! ```
//!
//! Little-endian throughout.

use super::{InternalTable, Real};
use crate::codec::{self, Reader};
use crate::error::{ParseError, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CHSW";
pub const WEIGHTS_VERSION: u16 = 1;

pub fn save_weights<R: Real>(tables: &[InternalTable<R>]) -> Vec<u8> {
    let mut out = Vec::new();
    codec::header(&mut out, WEIGHTS_MAGIC, WEIGHTS_VERSION);
    out.push(R::BYTES);
    out.extend_from_slice(&(tables.len() as u32).to_le_bytes());
    for t in tables {
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for &w in t.weights() {
            w.write_le(&mut out);
        }
        for &s in t.state() {
            s.write_le(&mut out);
        }
    }
    out
}

fn reals<R: Real>(r: &mut Reader<'_>, count: usize) -> Result<Vec<R>, ParseError> {
    let bytes = count
        .checked_mul(R::BYTES as usize)
        .ok_or_else(|| ParseError::Invalid("table size overflows".into()))?;
    Ok(r.take(bytes)?
        .chunks_exact(R::BYTES as usize)
        .map(R::from_le_slice)
        .collect())
}

pub fn load_weights<R: Real>(bytes: &[u8]) -> Result<Vec<InternalTable<R>>> {
    let mut r = Reader::new(bytes);
    r.header(WEIGHTS_MAGIC, WEIGHTS_VERSION)?;
    let precision = r.u8()?;
    if precision != R::BYTES {
        return Err(ParseError::Invalid(format!(
            "file stores {precision}-byte reals, loading as {}-byte",
            R::BYTES
        ))
        .into());
    }
    let count = r.u32()? as usize;
    let mut tables = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rows = r.len()?;
        let cols = r.len()?;
        let cells = rows
            .checked_mul(cols)
            .ok_or_else(|| ParseError::Invalid("table size overflows".into()))?;
        let weights: Vec<R> = reals(&mut r, cells)?;
        let state: Vec<R> = reals(&mut r, rows)?;
        if weights.iter().chain(&state).any(|x| !x.is_finite()) {
            return Err(ParseError::Invalid("non-finite weight".into()).into());
        }
        tables.push(InternalTable::from_parts(rows, cols, weights, state));
    }
    r.finish()?;
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{adagrad_step, init_weights, SparseRowGrads};
    use crate::{Error, ParseError};

    fn trained() -> Vec<InternalTable<f32>> {
        let mut a = init_weights(7, 3, 0.4, 1);
        let b = init_weights(2, 5, 0.4, 2);
        let mut g = SparseRowGrads::new(3);
        g.add(3, &[0.1, 0.2, -0.3]);
        adagrad_step(&mut a, &g, 0.02, 1e-8);
        vec![a, b]
    }

    #[test]
    fn round_trip_includes_state() {
        let tables = trained();
        let bytes = save_weights(&tables);
        let back: Vec<InternalTable<f32>> = load_weights(&bytes).unwrap();
        assert_eq!(back, tables);
        assert!(back[0].state()[3] > 0.0);
        assert_eq!(save_weights(&back), bytes);
    }

    #[test]
    fn truncation_version_and_precision_errors() {
        let bytes = save_weights(&trained());
        assert!(matches!(
            load_weights::<f32>(&bytes[..bytes.len() - 2]),
            Err(Error::Parse(ParseError::Truncated { .. }))
        ));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(
            load_weights::<f32>(&bad),
            Err(Error::Parse(ParseError::BadVersion { found: 2, .. }))
        ));
        assert!(matches!(
            load_weights::<f64>(&bytes),
            Err(Error::Parse(ParseError::Invalid(_)))
        ));
    }
}
