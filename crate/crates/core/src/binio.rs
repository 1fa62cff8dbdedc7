//! Little-endian readers and writers shared by the binary file formats.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use chrono::NaiveDate;

use crate::error::{Error, Result};

const EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(1970, 1, 1) {
    Some(d) => d,
    None => panic!("epoch"),
};

pub(crate) fn days_since_epoch(date: NaiveDate) -> i32 {
    (date - EPOCH).num_days() as i32
}

pub(crate) fn date_from_days(days: i32) -> Option<NaiveDate> {
    EPOCH.checked_add_signed(chrono::Duration::days(days as i64))
}

/// Reader that tracks how many bytes have been consumed so truncation can be
/// reported with a byte offset.
pub(crate) struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    pub(crate) fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.offset
    }

    fn map_err(&self, e: io::Error, what: &str) -> Error {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::Corruption {
                offset: self.offset,
                reason: format!("unexpected end of file while reading {what}"),
            }
        } else {
            Error::Corruption {
                offset: self.offset,
                reason: format!("{what}: {e}"),
            }
        }
    }

    pub(crate) fn bytes(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) => Err(self.map_err(e, what)),
        }
    }

    /// Returns `None` on a clean end of stream before the first byte.
    pub(crate) fn at_eof(&mut self) -> Result<bool> {
        let mut b = [0u8; 1];
        loop {
            match self.inner.read(&mut b) {
                Ok(0) => return Ok(true),
                Ok(_) => {
                    return Err(Error::Corruption {
                        offset: self.offset,
                        reason: "trailing bytes after last document".into(),
                    })
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(self.map_err(e, "trailer")),
            }
        }
    }
}

macro_rules! reader_fn {
    ($name:ident, $ty:ty, $read:ident, $size:expr) => {
        pub(crate) fn $name(&mut self, what: &str) -> Result<$ty> {
            match self.inner.$read::<LittleEndian>() {
                Ok(v) => {
                    self.offset += $size;
                    Ok(v)
                }
                Err(e) => Err(self.map_err(e, what)),
            }
        }
    };
}

impl<R: Read> OffsetReader<R> {
    reader_fn!(u16, u16, read_u16, 2);
    reader_fn!(u32, u32, read_u32, 4);
    reader_fn!(i32, i32, read_i32, 4);
    reader_fn!(f32, f32, read_f32, 4);
    reader_fn!(f64, f64, read_f64, 8);

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        match self.inner.read_u8() {
            Ok(v) => {
                self.offset += 1;
                Ok(v)
            }
            Err(e) => Err(self.map_err(e, what)),
        }
    }

    pub(crate) fn magic(&mut self, expected: &[u8]) -> Result<()> {
        let mut buf = vec![0u8; expected.len()];
        match self.inner.read_exact(&mut buf) {
            Ok(()) => self.offset += buf.len() as u64,
            Err(_) => {
                return Err(Error::Format(format!(
                    "file too short for {:?} magic",
                    String::from_utf8_lossy(expected)
                )))
            }
        }
        if buf != expected {
            return Err(Error::Format(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(expected),
                String::from_utf8_lossy(&buf)
            )));
        }
        Ok(())
    }

    /// u16 length prefix followed by UTF-8 bytes.
    pub(crate) fn short_string(&mut self, what: &str) -> Result<String> {
        let start = self.offset;
        let len = self.u16(what)? as usize;
        let mut buf = vec![0u8; len];
        self.bytes(&mut buf, what)?;
        String::from_utf8(buf).map_err(|_| Error::Corruption {
            offset: start,
            reason: format!("{what} is not valid UTF-8"),
        })
    }

    pub(crate) fn date(&mut self, what: &str) -> Result<NaiveDate> {
        let start = self.offset;
        let days = self.i32(what)?;
        date_from_days(days).ok_or_else(|| Error::Corruption {
            offset: start,
            reason: format!("{what} {days} days is out of range"),
        })
    }
}

pub(crate) fn write_short_string<W: Write>(w: &mut W, s: &str) -> io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| {
        io::Error::new(
            io::ErrorKind::InvalidInput,
            "string longer than 65535 bytes",
        )
    })?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())
}

pub(crate) fn write_date<W: Write>(w: &mut W, date: NaiveDate) -> io::Result<()> {
    w.write_i32::<LittleEndian>(days_since_epoch(date))
}
