//! Byte-level framing shared by the model-weight file formats.
//!
//! Both formats are little-endian throughout and end in a CRC32 (IEEE)
//! trailer computed over every preceding byte, magic included. Tensors are
//! framed as `u8 ndim, ndim x u32 dims, f32 data` so files are
//! self-describing and shape mismatches can name the offending field.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn put_f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed UTF-8.
    pub fn put_string(&mut self, s: &str) {
        self.put_u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn put_tensor(&mut self, t: &Tensor<f32>) {
        self.put_u8(t.ndim() as u8);
        for &d in t.shape() {
            self.put_u32(d as u32);
        }
        for &v in t.data() {
            self.put_f32(v);
        }
    }

    /// Payload bytes without the trailer (used for fingerprinting).
    pub fn payload(&self) -> &[u8] {
        &self.buf
    }

    /// Appends the CRC32 trailer and returns the finished file image.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Validates the CRC32 trailer and returns a reader over the payload.
    pub fn checked(file: &'a [u8]) -> Result<Self> {
        if file.len() < 4 {
            return Err(Error::codec("crc32", "file shorter than its trailer"));
        }
        let (payload, trailer) = file.split_at(file.len() - 4);
        let stored = u32::from_le_bytes([trailer[0], trailer[1], trailer[2], trailer[3]]);
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(Error::codec(
                "crc32",
                format!("stored {:08x} != computed {:08x} (corrupt or truncated)", stored, computed),
            ));
        }
        Ok(ByteReader { buf: payload, pos: 0 })
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::codec(field, "payload exhausted"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4], field: &str) -> Result<()> {
        let got = self.take(4, field)?;
        if got != magic {
            return Err(Error::codec(
                field,
                format!("expected {:?}, got {:?}", String::from_utf8_lossy(magic), got),
            ));
        }
        Ok(())
    }

    pub fn take_u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    pub fn take_u32(&mut self, field: &str) -> Result<u32> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn take_u64(&mut self, field: &str) -> Result<u64> {
        let b = self.take(8, field)?;
        Ok(u64::from_le_bytes(b.try_into().unwrap()))
    }

    pub fn take_f32(&mut self, field: &str) -> Result<f32> {
        let b = self.take(4, field)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn take_string(&mut self, field: &str) -> Result<String> {
        let len = self.take_u32(field)? as usize;
        let b = self.take(len, field)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::codec(field, "invalid UTF-8"))
    }

    /// Reads a framed tensor; if `expect` is given, the stored dims must match.
    pub fn take_tensor(&mut self, field: &str, expect: Option<&[usize]>) -> Result<Tensor<f32>> {
        let ndim = self.take_u8(field)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.take_u32(field)? as usize);
        }
        if let Some(want) = expect {
            if shape != want {
                return Err(Error::codec(
                    field,
                    format!("shape {:?} does not match expected {:?}", shape, want),
                ));
            }
        }
        let count: usize = shape.iter().product();
        let raw = self.take(count * 4, field)?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::codec(field, e.to_string()))
    }

    pub fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn expect_end(&self, field: &str) -> Result<()> {
        if !self.finished() {
            return Err(Error::codec(
                field,
                format!("{} unread bytes after payload", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_crc() {
        let mut w = ByteWriter::new();
        w.put_bytes(b"TEST");
        w.put_u32(7);
        w.put_string("hello");
        let t = Tensor::new(vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
        w.put_tensor(&t);
        let file = w.finish();

        let mut r = ByteReader::checked(&file).unwrap();
        r.expect_magic(b"TEST", "magic").unwrap();
        assert_eq!(r.take_u32("v").unwrap(), 7);
        assert_eq!(r.take_string("s").unwrap(), "hello");
        let back = r.take_tensor("t", Some(&[2, 2])).unwrap();
        assert_eq!(back.data(), t.data());
        assert!(r.finished());
    }

    #[test]
    fn corrupted_byte_fails_crc() {
        let mut w = ByteWriter::new();
        w.put_bytes(b"TEST");
        w.put_u32(7);
        let mut file = w.finish();
        file[5] ^= 0xff;
        assert!(matches!(ByteReader::checked(&file), Err(Error::Codec { .. })));
    }

    #[test]
    fn truncation_fails_crc() {
        let mut w = ByteWriter::new();
        w.put_bytes(b"TEST");
        w.put_u32(7);
        let file = w.finish();
        let cut = &file[..file.len() - 3];
        let err = ByteReader::checked(cut).unwrap_err();
        assert!(err.to_string().contains("crc32"));
    }

    #[test]
    fn shape_mismatch_names_field() {
        let mut w = ByteWriter::new();
        let t = Tensor::new(vec![2, 2], vec![0.0f32; 4]).unwrap();
        w.put_tensor(&t);
        let file = w.finish();
        let mut r = ByteReader::checked(&file).unwrap();
        let err = r.take_tensor("proj2d", Some(&[3, 2])).unwrap_err();
        assert!(err.to_string().contains("proj2d"));
    }
}
