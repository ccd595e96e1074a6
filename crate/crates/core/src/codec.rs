//! Little-endian byte helpers shared by the binary artifact formats.

use crate::error::ParseError;

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], ParseError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(ParseError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ParseError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    /// Checks the 4-byte magic and the u16 version that open every format.
    pub(crate) fn header(&mut self, magic: &[u8; 4], version: u16) -> Result<(), ParseError> {
        let found = self.array::<4>()?;
        if &found != magic {
            return Err(ParseError::BadMagic {
                expected: *magic,
                found,
            });
        }
        let v = self.u16()?;
        if v != version {
            return Err(ParseError::BadVersion {
                expected: version,
                found: v,
            });
        }
        Ok(())
    }

    pub(crate) fn u8(&mut self) -> Result<u8, ParseError> {
        Ok(self.array::<1>()?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, ParseError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, ParseError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, ParseError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    /// Reads a u64 and converts it to `usize`, rejecting values that do not fit.
    pub(crate) fn len(&mut self) -> Result<usize, ParseError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| ParseError::Invalid(format!("length {v} overflows usize")))
    }

    pub(crate) fn finish(self) -> Result<(), ParseError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(ParseError::TrailingBytes(n)),
        }
    }
}

pub(crate) fn header(out: &mut Vec<u8>, magic: &[u8; 4], version: u16) {
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
}
