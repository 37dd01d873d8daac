//! Binary checkpoint container.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field            | type                                   |
//! |------------------|----------------------------------------|
//! | magic            | 8 bytes `NCONCKPT`                     |
//! | version          | u32 (currently 1)                      |
//! | config hash      | u32 length + UTF-8 bytes               |
//! | epoch            | u64                                    |
//! | dims             | 3 × u64 (input, hidden, output)        |
//! | adam t           | u64                                    |
//! | adam config      | 4 × f64 (lr, beta1, beta2, eps)        |
//! | W1, W2           | f64 row-major, input×hidden, hidden×output |
//! | m.W1, m.W2       | same shapes                            |
//! | v.W1, v.W2       | same shapes                            |
//!
//! Nothing follows the last matrix; trailing bytes are rejected.

use std::path::Path;

use ndarray::Array2;

use crate::encoder::{AdamConfig, AdamState, EncoderDims, EncoderGrads, EncoderParams};
use crate::error::{io_err, Error, Result};

const MAGIC: &[u8; 8] = b"NCONCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub config_hash: String,
    /// Epoch the parameters were taken from (0 = initialization).
    pub epoch: u64,
}

impl Checkpoint {
    pub fn dims(&self) -> EncoderDims {
        self.params.dims()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.dims();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.config_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.config_hash.as_bytes());
        for v in [
            self.epoch,
            dims.input as u64,
            dims.hidden as u64,
            dims.output as u64,
            self.adam.t,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let c = self.adam.config;
        for v in [c.lr, c.beta1, c.beta2, c.eps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for m in self.matrices() {
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    fn matrices(&self) -> [&Array2<f64>; 6] {
        [
            &self.params.w1,
            &self.params.w2,
            &self.adam.m.w1,
            &self.adam.m.w2,
            &self.adam.v.w1,
            &self.adam.v.w2,
        ]
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let len = r.u32()? as usize;
        let config_hash = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("config hash is not UTF-8".into()))?;
        let epoch = r.u64()?;
        let dims = EncoderDims::new(r.u64()? as usize, r.u64()? as usize, r.u64()? as usize);
        let t = r.u64()?;
        let config = AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        };
        let s1 = (dims.input, dims.hidden);
        let s2 = (dims.hidden, dims.output);
        let params = EncoderParams {
            w1: r.matrix(s1)?,
            w2: r.matrix(s2)?,
        };
        let m = EncoderGrads {
            w1: r.matrix(s1)?,
            w2: r.matrix(s2)?,
        };
        let v = EncoderGrads {
            w1: r.matrix(s1)?,
            w2: r.matrix(s2)?,
        };
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            params,
            adam: AdamState { m, v, t, config },
            config_hash,
            epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(io_err(path))?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, shape: (usize, usize)) -> Result<Array2<f64>> {
        let n = shape
            .0
            .checked_mul(shape.1)
            .ok_or_else(|| Error::Checkpoint("dims overflow".into()))?;
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("dims overflow".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Array2::from_shape_vec(shape, data).expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::xavier_init;

    fn sample() -> Checkpoint {
        let dims = EncoderDims::new(3, 4, 2);
        let params = xavier_init(dims, 5).unwrap();
        let mut adam = AdamState::new(dims, AdamConfig::default());
        adam.t = 17;
        adam.m.w1[[1, 2]] = -0.25;
        adam.v.w2[[3, 1]] = 1e-9;
        Checkpoint {
            params,
            adam,
            config_hash: "0123456789abcdef".into(),
            epoch: 42,
        }
    }

    #[test]
    fn byte_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..8], b"NCONCKPT");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        sample().save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), sample());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&magic).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&version), Err(Error::Checkpoint(_))));
    }
}
