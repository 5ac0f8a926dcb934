//! Little-endian binary helpers shared by the on-disk formats.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

/// Reader that tracks its byte offset so decode failures can say where.
pub(crate) struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub fn offset(&self) -> u64 {
        self.offset
    }

    pub fn fail<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Format {
            offset: self.offset,
            message: message.into(),
        })
    }

    fn wrap<T>(&mut self, what: &str, r: io::Result<T>, len: u64) -> Result<T> {
        match r {
            Ok(v) => {
                self.offset += len;
                Ok(v)
            }
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                self.fail(format!("truncated while reading {what}"))
            }
            Err(e) => Err(Error::Io(e)),
        }
    }

    pub fn bytes(&mut self, what: &str, n: usize) -> Result<Vec<u8>> {
        let mut buf = vec![0u8; n];
        let r = self.inner.read_exact(&mut buf);
        self.wrap(what, r, n as u64)?;
        Ok(buf)
    }

    pub fn u8(&mut self, what: &str) -> Result<u8> {
        let r = self.inner.read_u8();
        self.wrap(what, r, 1)
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        let r = self.inner.read_u16::<LittleEndian>();
        self.wrap(what, r, 2)
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        let r = self.inner.read_u32::<LittleEndian>();
        self.wrap(what, r, 4)
    }

    pub fn u64(&mut self, what: &str) -> Result<u64> {
        let r = self.inner.read_u64::<LittleEndian>();
        self.wrap(what, r, 8)
    }

    pub fn i64(&mut self, what: &str) -> Result<i64> {
        let r = self.inner.read_i64::<LittleEndian>();
        self.wrap(what, r, 8)
    }

    pub fn f64(&mut self, what: &str) -> Result<f64> {
        let r = self.inner.read_f64::<LittleEndian>();
        self.wrap(what, r, 8)
    }

    pub fn f32_into(&mut self, what: &str, out: &mut [f32]) -> Result<()> {
        let r = self.inner.read_f32_into::<LittleEndian>(out);
        self.wrap(what, r, 4 * out.len() as u64)
    }

    pub fn f64_into(&mut self, what: &str, out: &mut [f64]) -> Result<()> {
        let r = self.inner.read_f64_into::<LittleEndian>(out);
        self.wrap(what, r, 8 * out.len() as u64)
    }

    /// Fails unless the stream is exhausted.
    pub fn expect_end(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => self.fail("trailing bytes after end of data"),
        }
    }
}

pub(crate) fn write_f32s<W: Write>(w: &mut W, values: &[f32]) -> io::Result<()> {
    for &v in values {
        w.write_f32::<LittleEndian>(v)?;
    }
    Ok(())
}

pub(crate) fn write_f64s<W: Write>(w: &mut W, values: &[f64]) -> io::Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}
