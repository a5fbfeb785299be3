use super::{DataError, FORMAT_VERSION};

#[derive(Default)]
pub(super) struct Writer {
    pub buf: Vec<u8>,
}

impl Writer {
    pub fn with_header(magic: &[u8; 4]) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(magic);
        w.u16(FORMAT_VERSION);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }

    pub fn f64s(&mut self, vs: &[f64]) {
        self.buf.reserve(vs.len() * 8);
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    /// Length-prefixed (`u32`) UTF-8.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Length-prefixed (`u64`) array of f64.
    pub fn f64_vec(&mut self, vs: &[f64]) {
        self.usize(vs.len());
        self.f64s(vs);
    }
}

pub(super) struct Reader<'a> {
    bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    /// Verifies magic and version.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self, DataError> {
        let mut r = Self { bytes, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            return Err(DataError::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(DataError::UnsupportedVersion { found: version, supported: FORMAT_VERSION });
        }
        Ok(r)
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.remaining() < n {
            return Err(DataError::Truncated {
                offset: self.pos,
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn usize(&mut self) -> Result<usize, DataError> {
        let at = self.pos;
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| DataError::Invalid { offset: at, detail: format!("count {v} too large") })
    }

    /// Checked `a · b · …` for counts read from a header.
    pub fn product(&self, factors: &[usize]) -> Result<usize, DataError> {
        factors
            .iter()
            .try_fold(1usize, |acc, &f| acc.checked_mul(f))
            .ok_or_else(|| DataError::Invalid {
                offset: self.pos,
                detail: format!("element count overflows: {factors:?}"),
            })
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>, DataError> {
        let bytes = n.checked_mul(8).ok_or_else(|| DataError::Invalid {
            offset: self.pos,
            detail: format!("element count {n} overflows"),
        })?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn u64s(&mut self, n: usize) -> Result<Vec<u64>, DataError> {
        let bytes = n.checked_mul(8).ok_or_else(|| DataError::Invalid {
            offset: self.pos,
            detail: format!("element count {n} overflows"),
        })?;
        let raw = self.take(bytes)?;
        Ok(raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    pub fn str(&mut self) -> Result<String, DataError> {
        let n = self.u32()? as usize;
        let at = self.pos;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| DataError::Invalid { offset: at, detail: "string is not UTF-8".into() })
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>, DataError> {
        let n = self.usize()?;
        self.f64s(n)
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(&self) -> Result<(), DataError> {
        if self.remaining() != 0 {
            return Err(DataError::CountMismatch {
                offset: self.pos,
                detail: format!("{} trailing bytes after payload", self.remaining()),
            });
        }
        Ok(())
    }
}
