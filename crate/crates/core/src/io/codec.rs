//! Little-endian byte buffers with a trailing CRC-64 checksum.

use crate::error::{Error, Result};
use crc::{Crc, CRC_64_ECMA_182};

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_ECMA_182);

/// Reproducibility stamp carried by every artifact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ArtifactMeta {
    pub seed: u64,
    /// SHA-256 of the canonical configuration text.
    pub config_hash: [u8; 32],
}

impl ArtifactMeta {
    pub fn hash_hex(&self) -> String {
        self.config_hash.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn checksum(bytes: &[u8]) -> u64 {
    CRC64.checksum(bytes)
}

pub(crate) struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new(magic: &[u8; 4], version: u32, meta: &ArtifactMeta) -> Self {
        let mut e = Self { buf: Vec::new() };
        e.buf.extend_from_slice(magic);
        e.u32(version);
        e.u64(meta.seed);
        e.buf.extend_from_slice(&meta.config_hash);
        e
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f64) {
        self.buf.extend_from_slice(&(v as f32).to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn len32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in 32 bits")))?;
        self.u32(v);
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        let sum = checksum(&self.buf);
        self.u64(sum);
        self.buf
    }
}

pub(crate) struct Decoder<'a> {
    body: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Verifies magic, version and checksum and returns the decoder positioned
    /// after the header together with the stored metadata.
    pub fn open(bytes: &'a [u8], magic: &[u8; 4], version: u32) -> Result<(Self, ArtifactMeta)> {
        let header = 4 + 4 + 8 + 32;
        if bytes.len() < header + 8 {
            return Err(Error::Format(format!("file of {} bytes is truncated", bytes.len())));
        }
        if &bytes[..4] != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(magic)
            )));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(trailer.try_into().expect("eight bytes"));
        let actual = checksum(body);
        if stored != actual {
            return Err(Error::Format(format!(
                "checksum mismatch: stored {stored:016x}, computed {actual:016x}"
            )));
        }
        let mut d = Self { body, pos: 4 };
        let v = d.u32()?;
        if v != version {
            return Err(Error::Format(format!("unsupported version {v}, expected {version}")));
        }
        let seed = d.u64()?;
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(d.take(32)?);
        Ok((d, ArtifactMeta { seed, config_hash }))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.body.len())
            .ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let out = &self.body[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    pub fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")) as f64)
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }

    pub fn usize32(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    pub fn usize64(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("count overflows usize".into()))
    }

    /// Guards an upcoming block of `count * width` bytes against the remaining length.
    pub fn expect_block(&self, count: usize, width: usize) -> Result<()> {
        let need = count
            .checked_mul(width)
            .ok_or_else(|| Error::Format("block size overflows".into()))?;
        if need > self.body.len() - self.pos {
            return Err(Error::Format(format!(
                "block of {need} bytes exceeds the {} remaining",
                self.body.len() - self.pos
            )));
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes before the checksum",
                self.body.len() - self.pos
            )));
        }
        Ok(())
    }
}
