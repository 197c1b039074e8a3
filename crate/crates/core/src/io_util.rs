use crate::error::FormatError;

/// Little-endian cursor that reports the byte offset of any short read.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, offset: 0 }
    }

    fn take(&mut self, len: usize, context: &str) -> Result<&'a [u8], FormatError> {
        if self.bytes.len() - self.offset < len {
            return Err(FormatError::Truncated {
                offset: self.offset as u64,
                context: format!("reading {context}"),
            });
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 8]) -> Result<(), FormatError> {
        let found = self.take(8, "magic")?;
        if found != expected {
            return Err(FormatError::MagicMismatch {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self, context: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, context: &str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self, context: &str) -> Result<f32, FormatError> {
        Ok(f32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, context: &str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, context)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.offset
    }

    pub(crate) fn offset(&self) -> usize {
        self.offset
    }

    pub(crate) fn finish(&self) -> Result<(), FormatError> {
        if self.remaining() != 0 {
            return Err(FormatError::Dimension(format!(
                "{} trailing bytes after offset {}",
                self.remaining(),
                self.offset
            )));
        }
        Ok(())
    }
}
