//! Parameter file: `FSFTPAR1`, then little-endian `u32` version, `u32 d`,
//! `u32 L` and `d·L` `f64` values in column-major order.

use std::path::Path;

use super::ParamMatrix;
use crate::error::{Error, FormatError, Result};
use crate::io_util::Reader;

pub const PARAMS_MAGIC: &[u8; 8] = b"FSFTPAR1";
pub const PARAMS_VERSION: u32 = 1;

impl ParamMatrix {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 8 * self.data.len());
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(PARAMS_MAGIC)?;
        let version = r.u32("version")?;
        if version != PARAMS_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let dim = r.u32("dimension")? as usize;
        let vocab_size = r.u32("vocabulary size")? as usize;
        if dim == 0 || vocab_size == 0 {
            return Err(FormatError::Dimension(format!(
                "parameter matrix of shape {dim}x{vocab_size}"
            )));
        }
        let data = (0..dim * vocab_size)
            .map(|_| r.f64("parameter values"))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(Self {
            dim,
            vocab_size,
            data,
        })
    }
}

pub fn write_params(path: impl AsRef<Path>, theta: &ParamMatrix) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, theta.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_params(path: impl AsRef<Path>) -> Result<ParamMatrix> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(ParamMatrix::from_bytes(&bytes)?)
}
